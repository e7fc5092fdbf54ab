#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "streamcast/scenario.hpp"

using namespace streamcast;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spew(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

GeneratorConfig quiet_config() {
  GeneratorConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.max_background = 0;
  cfg.frames = 60;
  return cfg;
}

}  // namespace

TEST_CASE("same config and seed give byte-identical episodes") {
  GeneratorConfig cfg;  // defaults: noise and background agents on
  Episode a = generate_episode(cfg, 1234);
  Episode b = generate_episode(cfg, 1234);
  CHECK(a == b);

  TempFile fa("tmp_scenario_det_a.ndjson"), fb("tmp_scenario_det_b.ndjson");
  save_episodes(fa.path, {a});
  save_episodes(fb.path, {b});
  CHECK(slurp(fa.path) == slurp(fb.path));

  Episode c = generate_episode(cfg, 1235);
  CHECK(a != c);
}

TEST_CASE("straight maneuver with zero noise is collinear") {
  GeneratorConfig cfg = quiet_config();
  cfg.maneuver_probs = {1.0, 0.0, 0.0};
  for (std::uint64_t seed : {0ull, 7ull, 99ull}) {
    Episode ep = generate_episode(cfg, seed);
    REQUIRE(ep.agents.size() == 1);
    CHECK(ep.agents[0].intent == Maneuver::straight);
    const auto& states = ep.agents[0].states;
    // Cross product of consecutive segments vanishes on a straight path,
    // both before the intersection and past it.
    for (std::size_t t = 2; t < states.size(); ++t) {
      const Vec2 u = states[t - 1].p - states[t - 2].p;
      const Vec2 v = states[t].p - states[t - 1].p;
      CHECK(std::fabs(u.x * v.y - u.y * v.x) <= 1e-9);
    }
    CHECK(states.back().p.x > states.front().p.x);  // actually progressed east
  }
}

TEST_CASE("maneuver frequencies approach the configured thirds") {
  GeneratorConfig cfg = quiet_config();
  std::array<int, 3> counts{};
  const int n = 3000;
  for (int seed = 0; seed < n; ++seed) {
    Episode ep = generate_episode(cfg, static_cast<std::uint64_t>(seed));
    counts[static_cast<int>(ep.agents[0].intent)]++;
  }
  for (int m = 0; m < 3; ++m) {
    const double freq = static_cast<double>(counts[m]) / n;
    CAPTURE(m);
    CHECK(std::fabs(freq - 1.0 / 3.0) <= 0.03);
  }
}

TEST_CASE("turns exit onto the destination lane centerline") {
  GeneratorConfig cfg = quiet_config();
  cfg.maneuver_probs = {0.0, 1.0, 0.0};  // left: exits northbound on x=+1.75
  Episode left = generate_episode(cfg, 3);
  const Vec2 left_end = left.agents[0].states.back().p;
  CHECK(left_end.x == doctest::Approx(cfg.lane_offset).epsilon(1e-9));
  CHECK(left_end.y > 5.0);

  cfg.maneuver_probs = {0.0, 0.0, 1.0};  // right: exits southbound on x=-1.75
  Episode right = generate_episode(cfg, 3);
  const Vec2 right_end = right.agents[0].states.back().p;
  CHECK(right_end.x == doctest::Approx(-cfg.lane_offset).epsilon(1e-9));
  CHECK(right_end.y < -5.0);
}

TEST_CASE("per-frame speeds stay inside the tolerated band") {
  GeneratorConfig cfg;  // noise and background agents on
  const double lo = 0.9 * cfg.v_min / cfg.frame_rate_hz;
  const double hi = 1.1 * cfg.v_max / cfg.frame_rate_hz;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Episode ep = generate_episode(cfg, seed);
    for (const auto& track : ep.agents) {
      for (std::size_t t = 1; t < track.states.size(); ++t) {
        const double step = track.states[t].motion.norm();
        CAPTURE(seed);
        CAPTURE(t);
        CHECK(step >= lo);
        CHECK(step <= hi);
      }
    }
  }
}

TEST_CASE("motion vectors and headings satisfy their invariants") {
  GeneratorConfig cfg;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Episode ep = generate_episode(cfg, seed);
    for (const auto& track : ep.agents) {
      CHECK(track.states[0].motion == Vec2{});
      for (std::size_t t = 0; t < track.states.size(); ++t) {
        const auto& s = track.states[t];
        CHECK(s.t == ep.frame_start + static_cast<int>(t));
        CHECK(s.heading > -3.14159265358979323846 - 1e-15);
        CHECK(s.heading <= 3.14159265358979323846 + 1e-15);
        if (t > 0) CHECK(s.motion == s.p - track.states[t - 1].p);
      }
    }
  }
}

TEST_CASE("degenerate config produces exactly three endpoint clusters") {
  GeneratorConfig cfg = quiet_config();
  cfg.v_min = cfg.v_max = 10.0;
  cfg.turn_radius_min = cfg.turn_radius_max = 9.0;
  cfg.start_jitter = 0.0;
  std::array<std::vector<Vec2>, 3> endpoints;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Episode ep = generate_episode(cfg, seed);
    endpoints[static_cast<int>(ep.agents[0].intent)].push_back(
        ep.agents[0].states.back().p);
  }
  for (const auto& group : endpoints) REQUIRE(group.size() > 5);

  for (int m = 0; m < 3; ++m) {
    for (std::size_t i = 1; i < endpoints[m].size(); ++i) {
      CHECK(distance(endpoints[m][i], endpoints[m][0]) <= 1e-9);  // within a cluster
    }
    for (int other = m + 1; other < 3; ++other) {
      CHECK(distance(endpoints[m][0], endpoints[other][0]) > 5.0);  // between clusters
    }
  }
}

TEST_CASE("windows slide with maximal overlap") {
  GeneratorConfig cfg;
  Episode ep = generate_episode(cfg, 42);
  const int h_obs = 20, h_pred = 30;
  SceneWindow w0 = window_at(ep, 25, h_obs, h_pred, 0);
  SceneWindow w1 = window_at(ep, 26, h_obs, h_pred, 0);
  REQUIRE(static_cast<int>(w0.observed[0].size()) == h_obs);

  // H_obs - 1 shared frames: w0 frames 7..25 coincide with w1 frames 7..25.
  int shared = 0;
  for (int k = 0; k < h_obs; ++k) {
    for (int j = 0; j < h_obs; ++j) {
      if (w0.observed[0][k].t == w1.observed[0][j].t) {
        CHECK(w0.observed[0][k].p == w1.observed[0][j].p);
        ++shared;
      }
    }
  }
  CHECK(shared == h_obs - 1);
}

TEST_CASE("earliest valid anchor starts at the episode's first frame") {
  GeneratorConfig cfg;
  Episode ep = generate_episode(cfg, 43);
  const int h_obs = 20, h_pred = 30;
  const int first_anchor = ep.frame_start + h_obs - 1;
  SceneWindow w = window_at(ep, first_anchor, h_obs, h_pred, 0);
  CHECK(w.observed[0].front().t == ep.frame_start);
  CHECK(w.observed[0].front().motion == Vec2{});
  CHECK(w.anchor_state().t == first_anchor);

  CHECK_THROWS_AS((void)window_at(ep, first_anchor - 1, h_obs, h_pred, 0), DataError);
  const int last_anchor = ep.last_frame() - h_pred;
  CHECK_NOTHROW((void)window_at(ep, last_anchor, h_obs, h_pred, 0));
  CHECK_THROWS_AS((void)window_at(ep, last_anchor + 1, h_obs, h_pred, 0), DataError);
  CHECK_THROWS_AS((void)window_at(ep, 30, h_obs, h_pred, 5), DataError);
}

TEST_CASE("window futures mirror episode storage frame by frame") {
  GeneratorConfig cfg;
  Episode ep = generate_episode(cfg, 44);
  const int t0 = 25, h_pred = 30;
  SceneWindow w = window_at(ep, t0, 20, h_pred, 0);
  REQUIRE(static_cast<int>(w.future.size()) == h_pred);
  for (int k = 1; k <= h_pred; ++k) {
    const AgentState& from_episode = ep.agents[0].states[t0 - ep.frame_start + k];
    CHECK(w.future[k - 1].p == from_episode.p);
    CHECK(w.future[k - 1].t == t0 + k);
  }
}

TEST_CASE("episodes survive a save/load round trip bit for bit") {
  GeneratorConfig cfg;  // noise on, background agents on
  std::vector<Episode> eps;
  for (std::uint64_t seed = 7; seed < 12; ++seed) eps.push_back(generate_episode(cfg, seed));

  TempFile f("tmp_scenario_roundtrip.ndjson");
  save_episodes(f.path, eps);
  std::vector<Episode> loaded = load_episodes(f.path);
  REQUIRE(loaded.size() == eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(loaded[i] == eps[i]);
}

TEST_CASE("an empty episode list round trips") {
  TempFile f("tmp_scenario_empty.ndjson");
  save_episodes(f.path, {});
  CHECK(load_episodes(f.path).empty());
}

TEST_CASE("corrupted records are reported by index") {
  GeneratorConfig cfg = quiet_config();
  std::vector<Episode> eps;
  for (std::uint64_t seed = 0; seed < 3; ++seed) eps.push_back(generate_episode(cfg, seed));
  TempFile f("tmp_scenario_corrupt.ndjson");
  save_episodes(f.path, eps);

  // Mangle the second episode line (record 2; the header is record 0).
  std::string content = slurp(f.path);
  std::size_t pos = 0;
  for (int newlines = 0; newlines < 2; ++pos) {
    if (content[pos] == '\n') ++newlines;
  }
  content.replace(pos, 10, "garbage!!!");
  spew(f.path, content);

  try {
    (void)load_episodes(f.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("record 2") != std::string::npos);
  }
}

TEST_CASE("unsupported format versions are rejected") {
  TempFile f("tmp_scenario_version.ndjson");
  spew(f.path, "{\"format_version\":2,\"frame_rate_hz\":10,\"fields\":[]}\n");
  CHECK_THROWS_AS((void)load_episodes(f.path), DataError);
  CHECK_THROWS_AS((void)load_episodes("no_such_file.ndjson"), DataError);
}

TEST_CASE("invalid generator configs are rejected") {
  GeneratorConfig cfg;
  cfg.maneuver_probs = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS((void)generate_episode(cfg, 0), ConfigError);

  cfg = GeneratorConfig{};
  cfg.frames = 40;  // < min_frames
  CHECK_THROWS_AS((void)generate_episode(cfg, 0), ConfigError);

  cfg = GeneratorConfig{};
  cfg.v_min = 10.0;
  cfg.v_max = 5.0;
  CHECK_THROWS_AS((void)generate_episode(cfg, 0), ConfigError);

  cfg = GeneratorConfig{};
  cfg.turn_radius_min = 1.0;  // tighter than the lane offset
  CHECK_THROWS_AS((void)generate_episode(cfg, 0), ConfigError);
}
