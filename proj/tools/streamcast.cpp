// Experiment runner: generates synthetic intersection data, trains the base
// predictor and the learned aggregation head, evaluates the aggregator matrix
// over streamed episodes, and renders anchor plots. Every run is a pure
// function of (config file, flags); flags override file values.

#include <omp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "streamcast/checkpoint.hpp"
#include "streamcast/common.hpp"
#include "streamcast/config.hpp"
#include "streamcast/model.hpp"
#include "streamcast/plot.hpp"
#include "streamcast/scenario.hpp"
#include "streamcast/streaming.hpp"
#include "streamcast/training.hpp"

namespace fs = std::filesystem;
using namespace streamcast;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 1;
};

ExperimentConfig resolve_config(const GlobalFlags& flags) {
  ExperimentConfig cfg =
      flags.config_path.empty() ? parse_config("{}") : load_config(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.train.seed = *flags.seed;  // the training seed is derived from the run seed
  }
  if (flags.out) {
    if (flags.out->empty()) throw ConfigError("--out must not be empty");
    cfg.out_dir = *flags.out;
  }
  omp_set_num_threads(flags.threads);
  return cfg;
}

// Every subcommand leaves the exact configuration it ran under next to its
// outputs.
void prepare_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  const std::string path = cfg.out_dir + "/effective_config.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << effective_config_json(cfg);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string default_under_out(const ExperimentConfig& cfg, const std::string& given,
                              const char* name) {
  return given.empty() ? cfg.out_dir + "/" + name : given;
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,mean_loss\n";
  char line[64];
  for (const EpochStats& e : log.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.17g\n", e.epoch, e.mean_loss);
    out << line;
  }
}

// ---- gen-data -------------------------------------------------------------

std::vector<Episode> generate_split(const ExperimentConfig& cfg, std::uint64_t split,
                                    int count, std::int64_t first_id) {
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Episode ep = generate_episode(cfg.generator, mix_seed(cfg.seed, split, static_cast<std::uint64_t>(i)));
    ep.id = first_id + i;  // sequential ids; the generator seed is not an id
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

void run_gen_data(const ExperimentConfig& cfg) {
  prepare_out_dir(cfg);
  const std::string train_path = cfg.out_dir + "/train_episodes.jsonl";
  const std::string eval_path = cfg.out_dir + "/eval_episodes.jsonl";

  const std::vector<Episode> train = generate_split(cfg, 1, cfg.data.train_episodes, 0);
  save_episodes(train_path, train, cfg.generator.frame_rate_hz);
  const std::vector<Episode> eval =
      generate_split(cfg, 2, cfg.data.eval_episodes, cfg.data.train_episodes);
  save_episodes(eval_path, eval, cfg.generator.frame_rate_hz);

  std::ofstream manifest(cfg.out_dir + "/manifest.json", std::ios::binary);
  if (!manifest) throw DataError("cannot write " + cfg.out_dir + "/manifest.json");
  manifest << "{\n"
           << "  \"config_hash\": \"" << config_hash(cfg) << "\",\n"
           << "  \"train\": {\"file\": \"train_episodes.jsonl\", \"episodes\": "
           << cfg.data.train_episodes << ", \"fnv1a\": \"" << fnv1a(slurp(train_path)) << "\"},\n"
           << "  \"eval\": {\"file\": \"eval_episodes.jsonl\", \"episodes\": "
           << cfg.data.eval_episodes << ", \"fnv1a\": \"" << fnv1a(slurp(eval_path)) << "\"}\n"
           << "}\n";
  log_info("wrote " + std::to_string(train.size()) + " train / " + std::to_string(eval.size()) +
           " eval episodes to " + cfg.out_dir);
}

// ---- training -------------------------------------------------------------

// Anchors with a full observation lookback and a full prediction lookahead.
// A positive windows_per_episode keeps that many, spread evenly.
std::vector<SceneWindow> training_windows(const ExperimentConfig& cfg,
                                          const std::vector<Episode>& episodes) {
  std::vector<SceneWindow> windows;
  const StreamSchedule& s = cfg.schedule;
  for (const Episode& ep : episodes) {
    const int first = ep.frame_start + s.h_obs - 1;
    const int last = ep.last_frame() - s.h_pred;
    if (first > last) {
      throw DataError("episode " + std::to_string(ep.id) + " spans " +
                      std::to_string(ep.frames()) + " frames, too short to train on");
    }
    const int available = last - first + 1;
    const int keep = cfg.data.windows_per_episode;
    if (keep <= 0 || keep >= available) {
      for (int t = first; t <= last; ++t) windows.push_back(window_at(ep, t, s.h_obs, s.h_pred, 0));
    } else {
      for (int j = 0; j < keep; ++j) {
        const int t = first + static_cast<int>((static_cast<double>(j) + 0.5) *
                                               static_cast<double>(available) / keep);
        windows.push_back(window_at(ep, t, s.h_obs, s.h_pred, 0));
      }
    }
  }
  return windows;
}

void warn_on_foreign_checkpoint(const ExperimentConfig& cfg, const CheckpointMeta& meta,
                                const std::string& path) {
  if (meta.config_hash != config_hash(cfg)) {
    log_warn("checkpoint " + path + " was written under a different configuration");
  }
}

void run_train_base(const ExperimentConfig& cfg, const std::string& data_path,
                    const std::string& ckpt_path) {
  prepare_out_dir(cfg);
  const std::vector<Episode> episodes = load_episodes(data_path);
  const std::vector<SceneWindow> windows = training_windows(cfg, episodes);
  log_info("training base model on " + std::to_string(windows.size()) + " windows from " +
           std::to_string(episodes.size()) + " episodes");

  ParamStore ps;
  Rng init(mix_seed(cfg.seed, 100));
  const Model model(cfg.model, ps, init);
  const TrainLog log = train_base(model, ps, windows, cfg.train);

  CheckpointMeta meta;
  meta.config_hash = config_hash(cfg);
  meta.epochs = cfg.train.epochs;
  meta.final_loss = log.final_loss();
  save_checkpoint(ckpt_path, ps, meta);
  write_train_log(cfg.out_dir + "/base_train_log.csv", log);
  log_info("saved base checkpoint to " + ckpt_path);
}

void run_train_agg(const ExperimentConfig& cfg, const std::string& data_path,
                   const std::string& base_path, const std::string& kind_name,
                   const std::string& ckpt_path) {
  const AggregatorKind kind = aggregator_from_name(kind_name);
  if (kind != AggregatorKind::learn_add && kind != AggregatorKind::learn_xattn) {
    throw ConfigError("train-agg trains \"learn_add\" or \"learn_xattn\", not \"" + kind_name +
                      "\"");
  }
  prepare_out_dir(cfg);
  const std::vector<Episode> episodes = load_episodes(data_path);

  // Read the base weights through a store shaped exactly like the base
  // checkpoint, then copy them into the combined store the head lives in.
  ParamStore base_ps;
  Rng base_init(1);
  const Model base_shape(cfg.model, base_ps, base_init);
  const CheckpointMeta base_meta = load_checkpoint(base_path, base_ps);
  warn_on_foreign_checkpoint(cfg, base_meta, base_path);

  ParamStore ps;
  Rng init(mix_seed(cfg.seed, 200));
  const Model model(cfg.model, ps, init);
  LearnedAggregator head(AggregatorHyper{cfg.model.decoder, cfg.schedule.window}, ps, init);
  for (const auto& [name, tensor] : base_ps.entries()) {
    ps.get(name).leaf_data() = tensor.data();
    // Warm-start the aggregation head's refinement stack from the trained
    // decoder; it mirrors the decoder's parameter layout under the "agg."
    // prefix.  The bank attention and offset table have no counterpart and
    // keep their random init.
    if (name.rfind("dec.", 0) == 0) {
      const std::string twin = "agg." + name.substr(4);
      if (ps.has(twin)) ps.get(twin).leaf_data() = tensor.data();
    }
  }
  // Summed queries reach the output heads at roughly window-times the
  // magnitude the copied weights were trained on (the attention and FFN
  // sublayers are insulated by their layer norms, the raw residual is not).
  // Shrinking the head weight matrices makes the initial aggregated
  // prediction track the base decoder's current-frame output instead of a
  // window-times-inflated copy of it; fine-tuning starts from parity.
  const double head_scale = 1.0 / static_cast<double>(cfg.schedule.window);
  for (const char* head : {"agg.pi.w", "agg.mu.w", "agg.b.w"}) {
    for (double& v : ps.get(head).leaf_data()) v *= head_scale;
  }

  const TrainLog log = train_aggregator(model, head, ps, episodes, cfg.schedule, cfg.train, kind);

  CheckpointMeta meta;
  meta.config_hash = config_hash(cfg);
  meta.epochs = cfg.train.finetune_epochs;
  meta.final_loss = log.final_loss();
  save_checkpoint(ckpt_path, ps, meta);
  write_train_log(cfg.out_dir + "/" + kind_name + "_train_log.csv", log);
  log_info("saved " + kind_name + " checkpoint to " + ckpt_path);
}

// ---- evaluation -----------------------------------------------------------

struct LoadedBase {
  std::unique_ptr<ParamStore> ps;
  std::unique_ptr<Model> model;
};

struct LoadedHead {
  std::unique_ptr<ParamStore> ps;
  std::unique_ptr<Model> model;  // the frozen base the head was trained against
  std::unique_ptr<LearnedAggregator> head;
};

LoadedBase load_base(const ExperimentConfig& cfg, const std::string& path) {
  LoadedBase out;
  out.ps = std::make_unique<ParamStore>();
  Rng init(1);
  out.model = std::make_unique<Model>(cfg.model, *out.ps, init);
  warn_on_foreign_checkpoint(cfg, load_checkpoint(path, *out.ps), path);
  return out;
}

LoadedHead load_head(const ExperimentConfig& cfg, const std::string& path) {
  LoadedHead out;
  out.ps = std::make_unique<ParamStore>();
  Rng init(1);
  out.model = std::make_unique<Model>(cfg.model, *out.ps, init);
  out.head = std::make_unique<LearnedAggregator>(
      AggregatorHyper{cfg.model.decoder, cfg.schedule.window}, *out.ps, init);
  warn_on_foreign_checkpoint(cfg, load_checkpoint(path, *out.ps), path);
  return out;
}

struct EvalAssets {
  std::vector<LoadedBase> bases;
  std::optional<LoadedHead> add;
  std::optional<LoadedHead> xattn;
};

EvalAssets load_assets(const ExperimentConfig& cfg, const std::vector<std::string>& base_paths,
                       const std::string& add_path, const std::string& xattn_path) {
  EvalAssets assets;
  for (const std::string& path : base_paths) assets.bases.push_back(load_base(cfg, path));
  if (!add_path.empty()) assets.add = load_head(cfg, add_path);
  if (!xattn_path.empty()) assets.xattn = load_head(cfg, xattn_path);
  return assets;
}

MetricReport run_row(const ExperimentConfig& cfg, const EvalAssets& assets,
                     const std::string& name, const std::vector<Episode>& episodes,
                     bool use_cache, std::vector<AnchorTrace>* trace) {
  StreamOptions opt;
  opt.schedule = cfg.schedule;
  opt.use_cache = use_cache;
  opt.timing = cfg.timing;
  opt.trace = trace;
  opt.aggregator.kind = aggregator_from_name(name);
  opt.aggregator.nms_radius = cfg.nms_radius;
  opt.aggregator.kmeans_seed = cfg.kmeans_seed;

  std::vector<const Model*> models;
  switch (opt.aggregator.kind) {
    case AggregatorKind::learn_add:
      if (!assets.add) throw ConfigError("aggregator \"learn_add\" needs --agg-add <checkpoint>");
      opt.aggregator.learned = assets.add->head.get();
      models = {assets.add->model.get()};
      break;
    case AggregatorKind::learn_xattn:
      if (!assets.xattn) {
        throw ConfigError("aggregator \"learn_xattn\" needs --agg-xattn <checkpoint>");
      }
      opt.aggregator.learned = assets.xattn->head.get();
      models = {assets.xattn->model.get()};
      break;
    case AggregatorKind::model_avg:
    case AggregatorKind::model_topk:
      if (assets.bases.size() < 2) {
        throw ConfigError("aggregator \"" + name + "\" needs at least two --base checkpoints");
      }
      for (const LoadedBase& base : assets.bases) models.push_back(base.model.get());
      break;
    default:
      if (assets.bases.empty()) throw ConfigError("no --base checkpoint given");
      models = {assets.bases[0].model.get()};
      break;
  }
  return run_stream(models, episodes, opt);
}

void run_eval(const ExperimentConfig& cfg, const EvalAssets& assets, const std::string& data_path,
              const std::string& name, bool use_cache) {
  prepare_out_dir(cfg);
  const std::vector<Episode> episodes = load_episodes(data_path);
  const MetricReport report = run_row(cfg, assets, name, episodes, use_cache, nullptr);
  const std::string path = cfg.out_dir + "/eval_" + name + ".csv";
  write_metrics_csv(path, {name}, {report});
  log_info("wrote " + path);
}

void run_compare(const ExperimentConfig& cfg, const EvalAssets& assets,
                 const std::string& data_path) {
  prepare_out_dir(cfg);
  const std::vector<Episode> episodes = load_episodes(data_path);
  std::vector<MetricReport> reports;
  reports.reserve(cfg.aggregators.size());
  for (const std::string& name : cfg.aggregators) {
    reports.push_back(run_row(cfg, assets, name, episodes, true, nullptr));
    log_info("compare: finished " + name);
  }
  const std::string path = cfg.out_dir + "/compare.csv";
  write_metrics_csv(path, cfg.aggregators, reports);
  log_info("wrote " + path);
}

// ---- plot -------------------------------------------------------------------

const AnchorTrace* trace_at(const std::vector<AnchorTrace>& trace, std::optional<int> anchor) {
  if (trace.empty()) return nullptr;
  if (!anchor) return &trace[trace.size() / 2];
  for (const AnchorTrace& t : trace) {
    if (t.t0 == *anchor) return &t;
  }
  return nullptr;
}

void run_plot(const ExperimentConfig& cfg, const EvalAssets& assets, const std::string& data_path,
              const std::string& name, std::vector<std::int64_t> ids, std::optional<int> anchor) {
  prepare_out_dir(cfg);
  const std::vector<Episode> all = load_episodes(data_path);
  if (ids.empty()) ids.push_back(all.front().id);

  for (const std::int64_t id : ids) {
    const Episode* episode = nullptr;
    for (const Episode& ep : all) {
      if (ep.id == id) episode = &ep;
    }
    if (episode == nullptr) {
      throw DataError("episode " + std::to_string(id) + " is not in " + data_path);
    }
    const std::vector<Episode> one = {*episode};

    std::vector<AnchorTrace> single_trace;
    run_row(cfg, assets, "single", one, true, &single_trace);
    std::vector<AnchorTrace> agg_trace;
    run_row(cfg, assets, name, one, true, &agg_trace);

    const AnchorTrace* chosen = trace_at(agg_trace, anchor);
    if (chosen == nullptr) {
      throw DataError("episode " + std::to_string(id) + " has no scored anchor" +
                      (anchor ? " at t0=" + std::to_string(*anchor) : ""));
    }
    PlotInput input;
    input.episode = episode;
    input.ensembled = *chosen;
    for (const AnchorTrace& t : single_trace) {
      if (t.t0 == chosen->t0) input.single = t;
    }
    input.title = "episode " + std::to_string(id) + " | " + name +
                  " at t0=" + std::to_string(chosen->t0);
    const std::string path = cfg.out_dir + "/episode_" + std::to_string(id) + ".svg";
    write_anchor_svg(path, input);
    log_info("wrote " + path);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal ensembling for streaming trajectory prediction"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "JSON experiment config");
  app.add_option("--seed", flags.seed, "override the config seed");
  app.add_option("--out", flags.out, "override the output directory");
  app.add_option("--threads", flags.threads, "OpenMP thread count")
      ->check(CLI::PositiveNumber);

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "generate train/eval episode files");
  gen->callback([&] { run_gen_data(resolve_config(flags)); });

  // train-base
  std::string tb_data, tb_ckpt;
  CLI::App* tb = app.add_subcommand("train-base", "train the single-frame predictor");
  tb->add_option("--data", tb_data, "episode file (default <out>/train_episodes.jsonl)");
  tb->add_option("--ckpt", tb_ckpt, "checkpoint path (default <out>/base.ckpt)");
  tb->callback([&] {
    const ExperimentConfig cfg = resolve_config(flags);
    run_train_base(cfg, default_under_out(cfg, tb_data, "train_episodes.jsonl"),
                   default_under_out(cfg, tb_ckpt, "base.ckpt"));
  });

  // train-agg
  std::string ta_data, ta_base, ta_kind = "learn_add", ta_ckpt;
  CLI::App* ta = app.add_subcommand("train-agg", "fine-tune a learned aggregation head");
  ta->add_option("--data", ta_data, "episode file (default <out>/train_episodes.jsonl)");
  ta->add_option("--base", ta_base, "frozen base checkpoint (default <out>/base.ckpt)");
  ta->add_option("--kind", ta_kind, "learn_add or learn_xattn");
  ta->add_option("--ckpt", ta_ckpt, "checkpoint path (default <out>/<kind>.ckpt)");
  ta->callback([&] {
    const ExperimentConfig cfg = resolve_config(flags);
    run_train_agg(cfg, default_under_out(cfg, ta_data, "train_episodes.jsonl"),
                  default_under_out(cfg, ta_base, "base.ckpt"), ta_kind,
                  default_under_out(cfg, ta_ckpt, (ta_kind + ".ckpt").c_str()));
  });

  // shared evaluation inputs
  std::vector<std::string> ev_bases;
  std::string ev_add, ev_xattn, ev_data;

  auto add_eval_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--data", ev_data, "episode file (default <out>/eval_episodes.jsonl)");
    cmd->add_option("--base", ev_bases, "base checkpoint(s); repeat for model ensembles");
    cmd->add_option("--agg-add", ev_add, "learn_add checkpoint");
    cmd->add_option("--agg-xattn", ev_xattn, "learn_xattn checkpoint");
  };

  // eval
  std::string ev_name = "single";
  bool ev_no_cache = false;
  CLI::App* ev = app.add_subcommand("eval", "evaluate one aggregator");
  add_eval_inputs(ev);
  ev->add_option("--aggregator", ev_name, "aggregator to run (default single)");
  ev->add_flag("--no-cache", ev_no_cache, "recompute every window instead of caching");
  ev->callback([&] {
    const ExperimentConfig cfg = resolve_config(flags);
    if (ev_bases.empty()) ev_bases = {cfg.out_dir + "/base.ckpt"};
    const EvalAssets assets = load_assets(cfg, ev_bases, ev_add, ev_xattn);
    run_eval(cfg, assets, default_under_out(cfg, ev_data, "eval_episodes.jsonl"), ev_name,
             !ev_no_cache);
  });

  // compare
  CLI::App* cmp = app.add_subcommand("compare", "evaluate every configured aggregator");
  add_eval_inputs(cmp);
  cmp->callback([&] {
    const ExperimentConfig cfg = resolve_config(flags);
    if (ev_bases.empty()) ev_bases = {cfg.out_dir + "/base.ckpt"};
    const EvalAssets assets = load_assets(cfg, ev_bases, ev_add, ev_xattn);
    run_compare(cfg, assets, default_under_out(cfg, ev_data, "eval_episodes.jsonl"));
  });

  // plot
  std::vector<std::int64_t> pl_ids;
  std::optional<int> pl_anchor;
  std::string pl_name = "topk";
  CLI::App* pl = app.add_subcommand("plot", "render one anchor of an episode as SVG");
  add_eval_inputs(pl);
  pl->add_option("--aggregator", pl_name, "ensembled look to draw (default topk)");
  pl->add_option("--episode", pl_ids, "episode id(s) to draw (default: first in file)");
  pl->add_option("--anchor", pl_anchor, "anchor frame t0 (default: middle scored anchor)");
  pl->callback([&] {
    const ExperimentConfig cfg = resolve_config(flags);
    if (ev_bases.empty()) ev_bases = {cfg.out_dir + "/base.ckpt"};
    const EvalAssets assets = load_assets(cfg, ev_bases, ev_add, ev_xattn);
    run_plot(cfg, assets, default_under_out(cfg, ev_data, "eval_episodes.jsonl"), pl_name, pl_ids,
             pl_anchor);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are config errors; --help is not
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericsError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
