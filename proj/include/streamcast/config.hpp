#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamcast/model.hpp"
#include "streamcast/scenario.hpp"
#include "streamcast/streaming.hpp"
#include "streamcast/training.hpp"

namespace streamcast {

// Dataset sizing for the generate/train/evaluate pipeline.
struct DataConfig {
  int train_episodes = 3000;
  int eval_episodes = 500;
  int windows_per_episode = 0;  // base-training windows per episode; 0 = every anchor
};

// Every tunable of an experiment in one place. The encoder lookback, decoder
// horizon, dropout, training seed, and generator minimum length are derived
// from the schedule, training, and top-level blocks rather than set directly,
// so the pieces can never disagree.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  DataConfig data;
  GeneratorConfig generator;
  ModelHyper model;
  TrainConfig train;
  StreamSchedule schedule;
  std::vector<std::string> aggregators = {"single",      "topk",      "nms",
                                          "kmeans",      "learn_add", "learn_xattn"};
  double nms_radius = 2.0;
  std::uint64_t kmeans_seed = 0;
  bool timing = false;
};

const char* best_mode_name(BestModeRule rule);
BestModeRule best_mode_from_name(const std::string& name);

// Strict parse: every present key must be known (unknown keys are rejected by
// their dotted path), every block is optional, and missing keys keep their
// defaults. Throws ConfigError on malformed JSON, type mismatches, or values
// the pipeline cannot run with.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization of the full effective configuration: fixed key
// order, shortest-round-trip numbers, no derived fields. Parsing it back
// reproduces the config exactly, and its bytes are what config_hash covers.
std::string effective_config_json(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace streamcast
