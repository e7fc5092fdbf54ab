#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "streamcast/common.hpp"
#include "streamcast/config.hpp"

using namespace streamcast;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/streamcast_config_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("an empty config yields the documented defaults") {
  const ExperimentConfig c = parse_config("{}");
  CHECK(c.seed == 0);
  CHECK(c.out_dir == "out");
  CHECK(c.data.train_episodes == 3000);
  CHECK(c.data.eval_episodes == 500);
  CHECK(c.data.windows_per_episode == 0);
  CHECK(c.generator.frames == 70);
  CHECK(c.generator.noise_sigma == 0.05);
  CHECK(c.model.encoder.width == 64);
  CHECK(c.model.decoder.modes == 6);
  CHECK(c.train.lambda == 1.0);
  CHECK(c.train.lr == 5e-4);
  CHECK(c.train.epochs == 16);
  CHECK(c.schedule.window == 10);
  CHECK(c.schedule.eval_to == 21);
  CHECK(c.aggregators.size() == 6);
  CHECK(c.nms_radius == 2.0);
  CHECK_FALSE(c.timing);

  // Derived wiring: one block is the source of truth for each shared value.
  CHECK(c.model.encoder.h_obs == c.schedule.h_obs);
  CHECK(c.model.decoder.horizon == static_cast<std::size_t>(c.schedule.h_pred));
  CHECK(c.model.encoder.dropout == c.train.dropout);
  CHECK(c.train.seed == c.seed);
  CHECK(c.generator.min_frames == 20 + 30 + 10 - 1);
}

TEST_CASE("overrides reach the right nested fields") {
  const ExperimentConfig c = parse_config(R"({
    "seed": 7,
    "out_dir": "runs/a",
    "data": {"train_episodes": 40, "eval_episodes": 10, "windows_per_episode": 2},
    "generator": {"frames": 24, "noise_sigma": 0.0, "maneuver_probs": [1.0, 0.0, 0.0]},
    "model": {"width": 16, "heads": 2, "fourier_bands": 2, "modes": 3},
    "train": {"epochs": 2, "dropout": 0.0, "best_mode": "endpoint"},
    "schedule": {"window": 3, "eval_from": 0, "eval_to": 6, "h_obs": 5, "h_pred": 8},
    "aggregators": ["single", "topk"],
    "nms_radius": 1.5,
    "kmeans_seed": 11,
    "timing": true
  })");
  CHECK(c.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.out_dir == "runs/a");
  CHECK(c.data.windows_per_episode == 2);
  CHECK(c.generator.frames == 24);
  CHECK(c.generator.maneuver_probs[0] == 1.0);
  CHECK(c.model.encoder.width == 16);
  CHECK(c.model.decoder.width == 16);
  CHECK(c.model.encoder.heads == 2);
  CHECK(c.model.decoder.heads == 2);
  CHECK(c.model.decoder.modes == 3);
  CHECK(c.model.decoder.horizon == 8);
  CHECK(c.model.encoder.h_obs == 5);
  CHECK(c.model.encoder.dropout == 0.0);
  CHECK(c.train.best_mode == BestModeRule::endpoint);
  CHECK(c.generator.min_frames == 5 + 8 + 3 - 1);
  CHECK(c.aggregators == std::vector<std::string>{"single", "topk"});
  CHECK(c.nms_radius == 1.5);
  CHECK(c.kmeans_seed == 11);
  CHECK(c.timing);
}

TEST_CASE("unknown keys are rejected by their dotted path") {
  const std::string top = message_of([] { parse_config(R"({"sedd": 1})"); });
  CHECK(top.find("unknown config key") != std::string::npos);
  CHECK(top.find("\"sedd\"") != std::string::npos);

  const std::string nested =
      message_of([] { parse_config(R"({"train": {"learning_rate": 0.01}})"); });
  CHECK(nested.find("\"train.learning_rate\"") != std::string::npos);

  const std::string model = message_of([] { parse_config(R"({"model": {"h_obs": 9}})"); });
  CHECK(model.find("\"model.h_obs\"") != std::string::npos);

  CHECK_THROWS_AS(parse_config(R"({"generator": {"minframes": 10}})"), ConfigError);
}

TEST_CASE("type and value problems are config errors") {
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1,2]"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "zero"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"timing": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"width": -4}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": {"width": 8.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"epochs": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"generator": {"maneuver_probs": [1.0, 0.0]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schedule": {"window": 40}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"aggregators": []})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"aggregators": ["topk", "topk"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"aggregators": ["best"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"nms_radius": 0.0})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"data": {"train_episodes": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"out_dir": ""})"), ConfigError);

  // Episodes too short for the schedule are caught at parse time, not after
  // generation.
  const std::string short_eps =
      message_of([] { parse_config(R"({"generator": {"frames": 30}})"); });
  CHECK(short_eps.find("at least 59") != std::string::npos);
}

TEST_CASE("the effective config round-trips and hashes stably") {
  const ExperimentConfig base = parse_config(R"({
    "seed": 3,
    "generator": {"noise_sigma": 0.05, "lane_offset": 1.75},
    "train": {"lr": 0.0005, "finetune_lr": 0.00025},
    "aggregators": ["single", "kmeans", "model_avg", "model_topk"]
  })");
  const std::string echo = effective_config_json(base);

  // Parseable, exact round trip, and every block present in the echo.
  const ExperimentConfig again = parse_config(echo);
  CHECK(effective_config_json(again) == echo);
  CHECK(config_hash(again) == config_hash(base));
  for (const char* needle :
       {"\"seed\": 3", "\"generator\"", "\"model\"", "\"train\"", "\"schedule\"",
        "\"lr\": 5e-04", "\"noise_sigma\": 0.05", "\"best_mode\": \"summed_l2\"",
        "\"aggregators\": [\"single\", \"kmeans\", \"model_avg\", \"model_topk\"]"}) {
    CAPTURE(needle);
    CHECK(echo.find(needle) != std::string::npos);
  }
  // Derived fields stay out of the canonical form.
  CHECK(echo.find("min_frames") == std::string::npos);
  CHECK(echo.find("h_obs\": 20") != std::string::npos);  // schedule owns it
  CHECK(echo.find("horizon") == std::string::npos);

  // The hash tracks experimental content: not formatting accidents, and not
  // the output location.
  ExperimentConfig tweaked = base;
  tweaked.kmeans_seed = 1;
  CHECK(config_hash(tweaked) != config_hash(base));
  ExperimentConfig moved = base;
  moved.out_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(base));
  CHECK(config_hash(parse_config("{}")) == config_hash(parse_config(R"({"seed": 0})")));
}

TEST_CASE("configs load from disk and missing files are config errors") {
  TempFile file("load.json");
  {
    std::ofstream out(file.path);
    out << R"({"seed": 42, "train": {"epochs": 1}})";
  }
  const ExperimentConfig c = load_config(file.path);
  CHECK(c.seed == 42);
  CHECK(c.train.epochs == 1);
  CHECK_THROWS_AS(load_config("/tmp/streamcast_config_does_not_exist.json"), ConfigError);
}

TEST_CASE("best-mode rules map to names and back") {
  CHECK(std::string(best_mode_name(BestModeRule::summed_l2)) == "summed_l2");
  CHECK(std::string(best_mode_name(BestModeRule::endpoint)) == "endpoint");
  CHECK(best_mode_from_name("summed_l2") == BestModeRule::summed_l2);
  CHECK(best_mode_from_name("endpoint") == BestModeRule::endpoint);
  CHECK_THROWS_AS(best_mode_from_name("closest"), ConfigError);
}
