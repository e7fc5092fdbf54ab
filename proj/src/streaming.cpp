#include "streamcast/streaming.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

#include "streamcast/common.hpp"

namespace streamcast {
namespace {

std::string format_violation(const char* what, long long lhs, long long rhs) {
  std::ostringstream os;
  os << what << " (" << lhs << " > " << rhs << ")";
  return os.str();
}

}  // namespace

std::string validate(const StreamSchedule& s) {
  if (s.window < 1) return "window must be at least 1";
  if (s.h_obs < 1) return "h_obs must be at least 1";
  if (s.h_pred < 1) return "h_pred must be at least 1";
  if (s.eval_from < 0) return "eval_from must be non-negative";
  if (s.eval_to <= s.eval_from) {
    return format_violation("eval window is empty: eval_from >= eval_to", s.eval_from, s.eval_to - 1);
  }
  if (s.eval_to > s.h_pred) {
    return format_violation("eval_to exceeds the prediction horizon", s.eval_to, s.h_pred);
  }
  const long long stale = static_cast<long long>(s.window) - 1;
  const long long room = static_cast<long long>(s.h_pred) - s.eval_to;
  if (stale > room) {
    return format_violation("the oldest pooled prediction cannot reach the last scored step", stale,
                            room);
  }
  return "";
}

SlicedPrediction slice_prediction(const MixturePrediction& prediction, int schedule_t0,
                                  const StreamSchedule& schedule) {
  const int m = schedule_t0 - prediction.t0;
  if (m < 0) {
    throw DataError("prediction anchor " + std::to_string(prediction.t0) +
                    " lies after the schedule anchor " + std::to_string(schedule_t0));
  }
  const auto world = to_world(prediction);
  const int horizon = world.empty() ? 0 : static_cast<int>(world[0].size());
  const int first = schedule.eval_from + m;      // 0-based step index of position a+m+1
  const int last = schedule.eval_to + m;         // one past the kept range
  if (last > horizon) {
    throw DataError("prediction issued at t=" + std::to_string(prediction.t0) +
                    " is too stale to reach step " + std::to_string(schedule.eval_to) +
                    " of anchor t=" + std::to_string(schedule_t0));
  }

  SlicedPrediction out;
  out.anchor_t = prediction.t0;
  out.scores = prediction.pi.data();
  out.trajectories.reserve(world.size());
  for (const auto& mode : world) {
    out.trajectories.emplace_back(mode.begin() + first, mode.begin() + last);
  }
  return out;
}

namespace {

void check_metric_shapes(const std::vector<std::vector<Vec2>>& trajectories,
                         const std::vector<Vec2>& gt) {
  if (trajectories.empty()) throw DataError("metrics need at least one predicted mode");
  if (gt.empty()) throw ShapeError("metrics need a non-empty ground-truth trajectory");
  for (const auto& t : trajectories) {
    if (t.size() != gt.size()) {
      throw ShapeError("predicted trajectory has " + std::to_string(t.size()) +
                       " steps, ground truth has " + std::to_string(gt.size()));
    }
  }
}

std::size_t best_endpoint_mode(const std::vector<std::vector<Vec2>>& trajectories,
                               const std::vector<Vec2>& gt) {
  std::size_t best = 0;
  double best_err = distance(trajectories[0].back(), gt.back());
  for (std::size_t n = 1; n < trajectories.size(); ++n) {
    const double err = distance(trajectories[n].back(), gt.back());
    if (err < best_err) {
      best_err = err;
      best = n;
    }
  }
  return best;
}

}  // namespace

double min_fde(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt) {
  check_metric_shapes(trajectories, gt);
  const std::size_t best = best_endpoint_mode(trajectories, gt);
  return distance(trajectories[best].back(), gt.back());
}

double min_ade(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt) {
  check_metric_shapes(trajectories, gt);
  const auto& best = trajectories[best_endpoint_mode(trajectories, gt)];
  double sum = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) sum += distance(best[t], gt[t]);
  return sum / static_cast<double>(gt.size());
}

bool is_miss(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt,
             double threshold) {
  return min_fde(trajectories, gt) > threshold;
}

const char* aggregator_name(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::single: return "single";
    case AggregatorKind::top_k: return "topk";
    case AggregatorKind::nms: return "nms";
    case AggregatorKind::kmeans: return "kmeans";
    case AggregatorKind::learn_add: return "learn_add";
    case AggregatorKind::learn_xattn: return "learn_xattn";
    case AggregatorKind::model_avg: return "model_avg";
    case AggregatorKind::model_topk: return "model_topk";
  }
  throw ConfigError("unknown aggregator kind");
}

AggregatorKind aggregator_from_name(const std::string& name) {
  for (AggregatorKind kind :
       {AggregatorKind::single, AggregatorKind::top_k, AggregatorKind::nms, AggregatorKind::kmeans,
        AggregatorKind::learn_add, AggregatorKind::learn_xattn, AggregatorKind::model_avg,
        AggregatorKind::model_topk}) {
    if (name == aggregator_name(kind)) return kind;
  }
  throw ConfigError("unknown aggregator \"" + name + "\"");
}

QueryCache::QueryCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("query cache capacity must be at least 1");
  slots_.reserve(capacity);
}

void QueryCache::push(Entry entry) {
  if (!slots_.empty() && entry.queries.t0 != newest_t0() + 1) clear();
  if (full()) {
    head_ = (head_ + 1) % capacity_;
    slots_[head_] = std::move(entry);
  } else {
    slots_.push_back(std::move(entry));
    head_ = slots_.size() - 1;
  }
}

void QueryCache::clear() {
  slots_.clear();
  head_ = 0;
}

int QueryCache::newest_t0() const {
  if (slots_.empty()) throw DataError("query cache is empty");
  return slots_[head_].queries.t0;
}

const QueryCache::Entry& QueryCache::back(std::size_t offset) const {
  if (offset >= slots_.size()) {
    throw DataError("query cache holds " + std::to_string(slots_.size()) +
                    " entries, offset " + std::to_string(offset) + " requested");
  }
  if (full()) return slots_[(head_ + capacity_ - offset) % capacity_];
  return slots_[head_ - offset];
}

namespace {

bool is_learned(AggregatorKind kind) {
  return kind == AggregatorKind::learn_add || kind == AggregatorKind::learn_xattn;
}

bool is_model_ensemble(AggregatorKind kind) {
  return kind == AggregatorKind::model_avg || kind == AggregatorKind::model_topk;
}

struct MetricAccumulator {
  double ade = 0.0;
  double fde = 0.0;
  std::size_t misses = 0;
  std::size_t samples = 0;

  void add(double a, double f, bool miss) {
    ade += a;
    fde += f;
    misses += miss ? 1 : 0;
    ++samples;
  }

  MetricRow row() const {
    if (samples == 0) return {};
    const double n = static_cast<double>(samples);
    return {ade / n, fde / n, static_cast<double>(misses) / n, samples};
  }
};

std::vector<Vec2> ground_truth_at(const Episode& ep, int t0, const StreamSchedule& s) {
  const auto& states = ep.agents[0].states;
  std::vector<Vec2> gt;
  gt.reserve(static_cast<std::size_t>(s.eval_to - s.eval_from));
  for (int t = t0 + s.eval_from + 1; t <= t0 + s.eval_to; ++t) {
    gt.push_back(states[static_cast<std::size_t>(t - ep.frame_start)].p);
  }
  return gt;
}

// Aggregates one anchor's pooled predictions down to the scored trajectories.
struct AnchorEvaluator {
  const std::vector<const Model*>& models;
  const StreamOptions& options;

  // entry(k, m) is model k's output issued at t0 - m. Temporal kinds pool
  // model 0 over the window; model_* kinds pool every model at the anchor.
  template <typename EntryAt>
  void evaluate(int t0, const EntryAt& entry, const SceneEmbedding& embedding,
                std::vector<std::vector<Vec2>>& out, std::vector<double>& out_scores,
                CandidateSet* pool_out) const {
    const StreamSchedule& s = options.schedule;
    const AggregatorSpec& agg = options.aggregator;
    const std::size_t n_modes = models[0]->hyper().decoder.modes;

    const bool needs_pool = agg.kind == AggregatorKind::top_k || agg.kind == AggregatorKind::nms ||
                            agg.kind == AggregatorKind::kmeans ||
                            agg.kind == AggregatorKind::model_topk || pool_out != nullptr;
    CandidateSet pool;
    if (needs_pool && is_model_ensemble(agg.kind)) {
      pool.reserve(models.size() * n_modes);
      for (std::size_t k = 0; k < models.size(); ++k) {
        const SlicedPrediction sliced = slice_prediction(entry(k, 0).prediction, t0, s);
        for (std::size_t n = 0; n < sliced.trajectories.size(); ++n) {
          Candidate c;
          c.trajectory = sliced.trajectories[n];
          c.score = sliced.scores[n] / static_cast<double>(models.size());
          c.anchor_t = sliced.anchor_t;
          c.model_id = static_cast<int>(k);
          c.mode = n;
          pool.push_back(std::move(c));
        }
      }
    } else if (needs_pool) {
      pool.reserve(s.window * n_modes);
      for (std::size_t m = 0; m < s.window; ++m) {
        const SlicedPrediction sliced = slice_prediction(entry(0, m).prediction, t0, s);
        for (std::size_t n = 0; n < sliced.trajectories.size(); ++n) {
          Candidate c;
          c.trajectory = sliced.trajectories[n];
          c.score = sliced.scores[n] / static_cast<double>(s.window);
          c.anchor_t = sliced.anchor_t;
          c.model_id = 0;
          c.mode = n;
          pool.push_back(std::move(c));
        }
      }
    }

    auto emit_sliced = [&](const MixturePrediction& pred) {
      const SlicedPrediction sliced = slice_prediction(pred, t0, s);
      out = sliced.trajectories;
      out_scores = sliced.scores;
    };

    CandidateSet kept;
    switch (agg.kind) {
      case AggregatorKind::single:
        emit_sliced(entry(0, 0).prediction);
        break;
      case AggregatorKind::top_k:
        kept = topk(pool, n_modes);
        break;
      case AggregatorKind::nms:
        kept = nms(pool, n_modes, agg.nms_radius);
        break;
      case AggregatorKind::kmeans:
        kept = kmeans_agg(pool, n_modes, agg.kmeans_seed);
        break;
      case AggregatorKind::learn_add: {
        std::vector<RefinedQuerySet> sets;
        sets.reserve(s.window);
        for (std::size_t m = 0; m < s.window; ++m) sets.push_back(entry(0, m).queries);
        emit_sliced(agg.learned->refine(add_queries(sets), embedding).second);
        break;
      }
      case AggregatorKind::learn_xattn: {
        std::vector<RefinedQuerySet> history;
        history.reserve(s.window);
        for (std::size_t m = 0; m < s.window; ++m) history.push_back(entry(0, m).queries);
        emit_sliced(agg.learned->refine_xattn(entry(0, 0).queries, history, embedding).second);
        break;
      }
      case AggregatorKind::model_avg: {
        std::vector<RefinedQuerySet> sets;
        sets.reserve(models.size());
        for (std::size_t k = 0; k < models.size(); ++k) sets.push_back(entry(k, 0).queries);
        const RefinedQuerySet avg = avg_queries_across_models(sets);
        emit_sliced(models[0]->decoder().heads(avg.queries, avg.t0, embedding.anchor));
        break;
      }
      case AggregatorKind::model_topk:
        kept = topk(pool, n_modes);
        break;
    }

    if (!kept.empty()) {
      out.reserve(kept.size());
      out_scores.reserve(kept.size());
      for (Candidate& c : kept) {
        out.push_back(std::move(c.trajectory));
        out_scores.push_back(c.score);
      }
    }
    if (pool_out != nullptr) *pool_out = std::move(pool);
  }
};

}  // namespace

MetricReport run_stream(const std::vector<const Model*>& models,
                        const std::vector<Episode>& episodes, const StreamOptions& options) {
  if (models.empty()) throw ConfigError("streaming evaluation needs at least one model");
  const std::string problem = validate(options.schedule);
  if (!problem.empty()) throw ConfigError("invalid stream schedule: " + problem);
  const StreamSchedule& s = options.schedule;
  const AggregatorSpec& agg = options.aggregator;
  if (is_learned(agg.kind) && agg.learned == nullptr) {
    throw ConfigError("aggregator \"" + std::string(aggregator_name(agg.kind)) +
                      "\" needs a trained aggregation head");
  }
  if (agg.kind == AggregatorKind::learn_xattn && s.window > agg.learned->hyper().window) {
    throw ConfigError("schedule window " + std::to_string(s.window) +
                      " exceeds the aggregator's offset table (" +
                      std::to_string(agg.learned->hyper().window) + ")");
  }
  for (const Model* model : models) {
    if (model->hyper().decoder.horizon != static_cast<std::size_t>(s.h_pred)) {
      throw ConfigError("model predicts " + std::to_string(model->hyper().decoder.horizon) +
                        " steps but the schedule assumes h_pred=" + std::to_string(s.h_pred));
    }
    if (model->hyper().decoder.modes != models[0]->hyper().decoder.modes ||
        model->hyper().decoder.width != models[0]->hyper().decoder.width) {
      throw ConfigError("ensembled models disagree on decoder shape");
    }
  }
  if (is_learned(agg.kind) &&
      agg.learned->hyper().decoder.horizon != static_cast<std::size_t>(s.h_pred)) {
    throw ConfigError("aggregation head predicts " +
                      std::to_string(agg.learned->hyper().decoder.horizon) +
                      " steps but the schedule assumes h_pred=" + std::to_string(s.h_pred));
  }
  if (episodes.empty()) throw DataError("no episodes to evaluate");

  // Canonical reduction order, independent of the container order handed in.
  std::vector<const Episode*> ordered;
  ordered.reserve(episodes.size());
  for (const Episode& ep : episodes) ordered.push_back(&ep);
  std::sort(ordered.begin(), ordered.end(),
            [](const Episode* a, const Episode* b) { return a->id < b->id; });

  // Latency protocol: per-anchor wall clock over the densest scene only.
  const Episode* densest = nullptr;
  if (options.timing) {
    for (const Episode* ep : ordered) {
      if (densest == nullptr || ep->agents.size() > densest->agents.size()) densest = ep;
    }
  }

  NoGradGuard inference;
  const AnchorEvaluator evaluator{models, options};
  MetricAccumulator overall;
  std::array<MetricAccumulator, 3> by_maneuver;
  std::vector<double> latencies_ms;
  std::size_t predict_calls = 0;

  for (const Episode* ep_ptr : ordered) {
    const Episode& ep = *ep_ptr;
    const int first = ep.frame_start + s.h_obs - 1;
    const int last = ep.last_frame() - s.h_pred;
    const int eval_first = first + static_cast<int>(s.window) - 1;
    if (eval_first > last) {
      throw DataError("episode " + std::to_string(ep.id) + " spans " +
                      std::to_string(ep.frames()) + " frames, too short for the schedule");
    }
    const bool timed = options.timing && ep_ptr == densest;
    const std::size_t maneuver = static_cast<std::size_t>(ep.agents[0].intent);

    // `start` opens the per-anchor latency window; it covers the forward
    // pass(es) feeding this anchor plus aggregation, but not the scoring.
    auto score_anchor = [&](int t0, const auto& entry, const SceneEmbedding& embedding,
                            std::chrono::steady_clock::time_point start) {
      std::vector<std::vector<Vec2>> out;
      std::vector<double> out_scores;
      CandidateSet pool;
      evaluator.evaluate(t0, entry, embedding, out, out_scores,
                         options.trace != nullptr ? &pool : nullptr);
      if (timed) {
        const std::chrono::duration<double, std::milli> elapsed =
            std::chrono::steady_clock::now() - start;
        latencies_ms.push_back(elapsed.count());
      }
      const std::vector<Vec2> gt = ground_truth_at(ep, t0, s);
      const double fde = min_fde(out, gt);
      const double ade = min_ade(out, gt);
      const bool miss = fde > 2.0;
      overall.add(ade, fde, miss);
      by_maneuver[maneuver].add(ade, fde, miss);
      if (options.trace != nullptr) {
        options.trace->push_back(
            {ep.id, t0, std::move(pool), std::move(out), std::move(out_scores), std::move(gt)});
      }
    };

    if (options.use_cache) {
      std::vector<QueryCache> caches(models.size(), QueryCache(s.window));
      for (int t = first; t <= last; ++t) {
        const auto start = std::chrono::steady_clock::now();
        SceneEmbedding embedding;
        const SceneWindow window = window_at(ep, t, s.h_obs, s.h_pred, 0);
        for (std::size_t k = 0; k < models.size(); ++k) {
          ModelOutput step = models[k]->predict(window);
          ++predict_calls;
          caches[k].push({std::move(step.queries), std::move(step.prediction)});
          if (k == 0) embedding = std::move(step.embedding);
        }
        if (!caches[0].full()) continue;
        score_anchor(
            t,
            [&](std::size_t k, std::size_t m) -> const QueryCache::Entry& {
              return caches[k].back(m);
            },
            embedding, start);
      }
    } else {
      for (int t = eval_first; t <= last; ++t) {
        const auto start = std::chrono::steady_clock::now();
        // entries[k][i] holds model k at anchor t - (window - 1) + i.
        std::vector<std::vector<QueryCache::Entry>> entries(models.size());
        SceneEmbedding embedding;
        for (std::size_t m = s.window; m-- > 0;) {
          const SceneWindow window = window_at(ep, t - static_cast<int>(m), s.h_obs, s.h_pred, 0);
          for (std::size_t k = 0; k < models.size(); ++k) {
            ModelOutput step = models[k]->predict(window);
            ++predict_calls;
            entries[k].push_back({std::move(step.queries), std::move(step.prediction)});
            if (m == 0 && k == 0) embedding = std::move(step.embedding);
          }
        }
        score_anchor(
            t,
            [&](std::size_t k, std::size_t m) -> const QueryCache::Entry& {
              return entries[k][entries[k].size() - 1 - m];
            },
            embedding, start);
      }
    }
  }

  if (overall.samples == 0) throw DataError("the schedule evaluated no anchors");

  MetricReport report;
  report.all = overall.row();
  for (std::size_t i = 0; i < by_maneuver.size(); ++i) report.by_maneuver[i] = by_maneuver[i].row();
  report.predict_calls = predict_calls;
  if (!latencies_ms.empty()) {
    std::sort(latencies_ms.begin(), latencies_ms.end());
    report.latency_ms_p50 = latencies_ms[(latencies_ms.size() - 1) / 2];
  }
  return report;
}

MetricReport run_stream(const Model& model, const std::vector<Episode>& episodes,
                        const StreamOptions& options) {
  return run_stream(std::vector<const Model*>{&model}, episodes, options);
}

void write_metrics_csv(const std::string& path, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports) {
  if (names.size() != reports.size()) {
    throw ShapeError("metric CSV needs one name per report");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metric report to " + path);
  out << "aggregator,minADE,minFDE,miss_rate,samples,maneuver,latency_ms_p50\n";
  char line[256];
  auto emit = [&](const std::string& name, const MetricRow& row, const char* maneuver,
                  double latency) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%zu,%s,%.3f\n", name.c_str(), row.min_ade,
                  row.min_fde, row.miss_rate, row.samples, maneuver, latency);
    out << line;
  };
  for (std::size_t i = 0; i < names.size(); ++i) {
    emit(names[i], reports[i].all, "all", reports[i].latency_ms_p50);
    for (int m = 0; m < 3; ++m) {
      emit(names[i], reports[i].by_maneuver[static_cast<std::size_t>(m)],
           maneuver_name(static_cast<Maneuver>(m)), reports[i].latency_ms_p50);
    }
  }
  if (!out) throw DataError("failed while writing metric report to " + path);
}

}  // namespace streamcast
