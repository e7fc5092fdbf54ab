#include "streamcast/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "streamcast/common.hpp"

namespace streamcast {
namespace {

using nlohmann::json;

// One config block. Reads mark keys as consumed; finish() names any leftover.
class StrictView {
 public:
  StrictView(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError("config block \"" + (path_.empty() ? std::string("<root>") : path_) +
                        "\" must be a JSON object");
    }
  }

  ~StrictView() = default;
  StrictView(const StrictView&) = delete;
  StrictView& operator=(const StrictView&) = delete;

  const json* child(const char* key) {
    const auto it = node_.find(key);
    if (it == node_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void read_string(const char* key, std::string& out) {
    if (const json* v = child(key)) {
      if (!v->is_string()) throw wrong_type(key, "a string");
      out = v->get<std::string>();
    }
  }

  void read_bool(const char* key, bool& out) {
    if (const json* v = child(key)) {
      if (!v->is_boolean()) throw wrong_type(key, "a boolean");
      out = v->get<bool>();
    }
  }

  void read_double(const char* key, double& out) {
    if (const json* v = child(key)) {
      if (!v->is_number()) throw wrong_type(key, "a number");
      out = v->get<double>();
    }
  }

  void read_int(const char* key, int& out) {
    if (const json* v = child(key)) {
      if (!v->is_number_integer()) throw wrong_type(key, "an integer");
      const std::int64_t wide = v->get<std::int64_t>();
      if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
        throw ConfigError("config key \"" + join(key) + "\" is out of range");
      }
      out = static_cast<int>(wide);
    }
  }

  void read_size(const char* key, std::size_t& out) {
    if (const json* v = child(key)) {
      if (!v->is_number_integer()) throw wrong_type(key, "a non-negative integer");
      if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        throw wrong_type(key, "a non-negative integer");
      }
      out = static_cast<std::size_t>(v->get<std::uint64_t>());
    }
  }

  void read_u64(const char* key, std::uint64_t& out) {
    if (const json* v = child(key)) {
      if (!v->is_number_unsigned() &&
          !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw wrong_type(key, "a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void read_probs(const char* key, std::array<double, 3>& out) {
    if (const json* v = child(key)) {
      if (!v->is_array() || v->size() != 3) {
        throw wrong_type(key, "an array of 3 numbers");
      }
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) throw wrong_type(key, "an array of 3 numbers");
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  void read_strings(const char* key, std::vector<std::string>& out) {
    if (const json* v = child(key)) {
      if (!v->is_array()) throw wrong_type(key, "an array of strings");
      out.clear();
      for (const json& item : *v) {
        if (!item.is_string()) throw wrong_type(key, "an array of strings");
        out.push_back(item.get<std::string>());
      }
    }
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (seen_.find(item.key()) == seen_.end()) {
        throw ConfigError("unknown config key \"" + join(item.key()) + "\"");
      }
    }
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  ConfigError wrong_type(const char* key, const char* expected) const {
    return ConfigError("config key \"" + join(key) + "\" must be " + expected);
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_data(const json& node, DataConfig& out) {
  StrictView v(node, "data");
  v.read_int("train_episodes", out.train_episodes);
  v.read_int("eval_episodes", out.eval_episodes);
  v.read_int("windows_per_episode", out.windows_per_episode);
  v.finish();
}

void parse_generator(const json& node, GeneratorConfig& out) {
  StrictView v(node, "generator");
  v.read_int("frames", out.frames);
  v.read_int("frame_rate_hz", out.frame_rate_hz);
  v.read_double("arm_length", out.arm_length);
  v.read_double("lane_offset", out.lane_offset);
  v.read_double("v_min", out.v_min);
  v.read_double("v_max", out.v_max);
  v.read_double("noise_sigma", out.noise_sigma);
  v.read_probs("maneuver_probs", out.maneuver_probs);
  v.read_double("turn_radius_min", out.turn_radius_min);
  v.read_double("turn_radius_max", out.turn_radius_max);
  v.read_double("start_jitter", out.start_jitter);
  v.read_int("max_background", out.max_background);
  v.finish();
}

void parse_model(const json& node, ModelHyper& out) {
  StrictView v(node, "model");
  v.read_size("width", out.encoder.width);
  out.decoder.width = out.encoder.width;
  v.read_int("heads", out.encoder.heads);
  out.decoder.heads = out.encoder.heads;
  v.read_int("fourier_bands", out.encoder.fourier_bands);
  v.read_int("temporal_layers", out.encoder.temporal_layers);
  v.read_int("map_layers", out.encoder.map_layers);
  v.read_int("agent_layers", out.encoder.agent_layers);
  v.read_int("decoder_layers", out.decoder.layers);
  v.read_size("modes", out.decoder.modes);
  v.read_double("distance_scale", out.encoder.distance_scale);
  v.read_double("time_scale", out.encoder.time_scale);
  v.finish();
}

void parse_train(const json& node, TrainConfig& out) {
  StrictView v(node, "train");
  v.read_double("lambda", out.lambda);
  v.read_double("lr", out.lr);
  v.read_int("epochs", out.epochs);
  v.read_int("batch_size", out.batch_size);
  v.read_double("weight_decay", out.weight_decay);
  v.read_double("dropout", out.dropout);
  v.read_double("finetune_lr", out.finetune_lr);
  v.read_int("finetune_epochs", out.finetune_epochs);
  std::string rule = best_mode_name(out.best_mode);
  v.read_string("best_mode", rule);
  out.best_mode = best_mode_from_name(rule);
  v.finish();
}

void parse_schedule(const json& node, StreamSchedule& out) {
  StrictView v(node, "schedule");
  v.read_size("window", out.window);
  v.read_int("eval_from", out.eval_from);
  v.read_int("eval_to", out.eval_to);
  v.read_int("h_obs", out.h_obs);
  v.read_int("h_pred", out.h_pred);
  v.finish();
}

// Least dataset length that gives the schedule one scored anchor per episode.
int min_episode_frames(const StreamSchedule& s) {
  return s.h_obs + s.h_pred + static_cast<int>(s.window) - 1;
}

void fill_derived(ExperimentConfig& c) {
  c.model.encoder.h_obs = c.schedule.h_obs;
  c.model.encoder.dropout = c.train.dropout;
  c.model.decoder.horizon = static_cast<std::size_t>(c.schedule.h_pred);
  c.train.seed = c.seed;
  c.generator.min_frames = min_episode_frames(c.schedule);
}

void check_runnable(const ExperimentConfig& c) {
  const std::string problem = validate(c.schedule);
  if (!problem.empty()) throw ConfigError("invalid stream schedule: " + problem);
  validate(c.train);
  if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (c.data.train_episodes < 1) throw ConfigError("data.train_episodes must be at least 1");
  if (c.data.eval_episodes < 1) throw ConfigError("data.eval_episodes must be at least 1");
  if (c.data.windows_per_episode < 0) {
    throw ConfigError("data.windows_per_episode must be non-negative");
  }
  if (c.generator.frames < c.generator.min_frames) {
    throw ConfigError("generator.frames is " + std::to_string(c.generator.frames) +
                      " but the schedule needs at least " +
                      std::to_string(c.generator.min_frames) + " frames per episode");
  }
  if (c.nms_radius <= 0.0) throw ConfigError("nms_radius must be positive");
  if (c.aggregators.empty()) throw ConfigError("aggregators must list at least one entry");
  std::set<std::string> unique;
  for (const std::string& name : c.aggregators) {
    aggregator_from_name(name);  // rejects unknown names
    if (!unique.insert(name).second) {
      throw ConfigError("aggregator \"" + name + "\" is listed twice");
    }
  }
}

// Canonical JSON writer: fixed key order, shortest-round-trip numbers.
struct Writer {
  std::string out;
  int depth = 0;
  bool line_open = false;

  void indent() {
    for (int i = 0; i < depth; ++i) out += "  ";
  }

  void key(const char* name) {
    indent();
    out += '"';
    out += name;
    out += "\": ";
  }

  void number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
  }

  void number(std::int64_t v) { out += std::to_string(v); }
  void number(std::uint64_t v) { out += std::to_string(v); }

  void string(const std::string& v) {
    out += '"';
    for (char ch : v) {
      if (ch == '"' || ch == '\\') out += '\\';
      out += ch;
    }
    out += '"';
  }

  void field(const char* name, double v, bool last = false) {
    key(name);
    number(v);
    end(last);
  }
  void field(const char* name, int v, bool last = false) {
    key(name);
    number(static_cast<std::int64_t>(v));
    end(last);
  }
  void field(const char* name, std::uint64_t v, bool last = false) {
    key(name);
    number(v);
    end(last);
  }
  void field(const char* name, bool v, bool last = false) {
    key(name);
    out += v ? "true" : "false";
    end(last);
  }
  void field(const char* name, const std::string& v, bool last = false) {
    key(name);
    string(v);
    end(last);
  }

  void open(const char* name) {
    key(name);
    out += "{\n";
    ++depth;
  }
  void close(bool last = false) {
    --depth;
    indent();
    out += '}';
    end(last);
  }
  void end(bool last) { out += last ? "\n" : ",\n"; }
};

}  // namespace

const char* best_mode_name(BestModeRule rule) {
  switch (rule) {
    case BestModeRule::summed_l2: return "summed_l2";
    case BestModeRule::endpoint: return "endpoint";
  }
  throw ConfigError("unknown best-mode rule");
}

BestModeRule best_mode_from_name(const std::string& name) {
  if (name == "summed_l2") return BestModeRule::summed_l2;
  if (name == "endpoint") return BestModeRule::endpoint;
  throw ConfigError("unknown best-mode rule \"" + name + "\"");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig c;
  StrictView top(root, "");
  top.read_u64("seed", c.seed);
  top.read_string("out_dir", c.out_dir);
  if (const json* node = top.child("data")) parse_data(*node, c.data);
  if (const json* node = top.child("generator")) parse_generator(*node, c.generator);
  if (const json* node = top.child("model")) parse_model(*node, c.model);
  if (const json* node = top.child("train")) parse_train(*node, c.train);
  if (const json* node = top.child("schedule")) parse_schedule(*node, c.schedule);
  top.read_strings("aggregators", c.aggregators);
  top.read_double("nms_radius", c.nms_radius);
  top.read_u64("kmeans_seed", c.kmeans_seed);
  top.read_bool("timing", c.timing);
  top.finish();

  fill_derived(c);
  check_runnable(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::string effective_config_json(const ExperimentConfig& c) {
  Writer w;
  w.out += "{\n";
  w.depth = 1;
  w.field("seed", c.seed);
  w.field("out_dir", c.out_dir);

  w.open("data");
  w.field("train_episodes", c.data.train_episodes);
  w.field("eval_episodes", c.data.eval_episodes);
  w.field("windows_per_episode", c.data.windows_per_episode, true);
  w.close();

  w.open("generator");
  w.field("frames", c.generator.frames);
  w.field("frame_rate_hz", c.generator.frame_rate_hz);
  w.field("arm_length", c.generator.arm_length);
  w.field("lane_offset", c.generator.lane_offset);
  w.field("v_min", c.generator.v_min);
  w.field("v_max", c.generator.v_max);
  w.field("noise_sigma", c.generator.noise_sigma);
  w.key("maneuver_probs");
  w.out += '[';
  for (std::size_t i = 0; i < 3; ++i) {
    if (i > 0) w.out += ", ";
    w.number(c.generator.maneuver_probs[i]);
  }
  w.out += ']';
  w.end(false);
  w.field("turn_radius_min", c.generator.turn_radius_min);
  w.field("turn_radius_max", c.generator.turn_radius_max);
  w.field("start_jitter", c.generator.start_jitter);
  w.field("max_background", c.generator.max_background, true);
  w.close();

  w.open("model");
  w.field("width", c.model.encoder.width);
  w.field("heads", c.model.encoder.heads);
  w.field("fourier_bands", c.model.encoder.fourier_bands);
  w.field("temporal_layers", c.model.encoder.temporal_layers);
  w.field("map_layers", c.model.encoder.map_layers);
  w.field("agent_layers", c.model.encoder.agent_layers);
  w.field("decoder_layers", c.model.decoder.layers);
  w.field("modes", c.model.decoder.modes);
  w.field("distance_scale", c.model.encoder.distance_scale);
  w.field("time_scale", c.model.encoder.time_scale, true);
  w.close();

  w.open("train");
  w.field("lambda", c.train.lambda);
  w.field("lr", c.train.lr);
  w.field("epochs", c.train.epochs);
  w.field("batch_size", c.train.batch_size);
  w.field("weight_decay", c.train.weight_decay);
  w.field("dropout", c.train.dropout);
  w.field("finetune_lr", c.train.finetune_lr);
  w.field("finetune_epochs", c.train.finetune_epochs);
  w.field("best_mode", std::string(best_mode_name(c.train.best_mode)), true);
  w.close();

  w.open("schedule");
  w.field("window", c.schedule.window);
  w.field("eval_from", c.schedule.eval_from);
  w.field("eval_to", c.schedule.eval_to);
  w.field("h_obs", c.schedule.h_obs);
  w.field("h_pred", c.schedule.h_pred, true);
  w.close();

  w.key("aggregators");
  w.out += '[';
  for (std::size_t i = 0; i < c.aggregators.size(); ++i) {
    if (i > 0) w.out += ", ";
    w.string(c.aggregators[i]);
  }
  w.out += ']';
  w.end(false);
  w.field("nms_radius", c.nms_radius);
  w.field("kmeans_seed", c.kmeans_seed);
  w.field("timing", c.timing, true);
  w.out += "}\n";
  return w.out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // The hash identifies the experiment, not where its artifacts land, so the
  // same run written to two directories stamps its checkpoints identically.
  ExperimentConfig normalized = config;
  normalized.out_dir = "out";
  return fnv1a(effective_config_json(normalized));
}

}  // namespace streamcast
