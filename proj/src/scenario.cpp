#include "streamcast/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace streamcast {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRampDist = 8.0;        // meters to blend cruise <-> turn speed
constexpr double kTurnLateralAccel = 4.5;  // m/s^2, sets comfortable turn speed
constexpr std::uint64_t kGenSalt = 0xE915;

// Target path: entry straight along y=-lane, optional 90-degree arc, exit
// straight along the destination lane. Parameterized by arc length s from the
// spawn point; the final segment extends indefinitely.
struct TargetPath {
  double start_x = 0.0;
  double lane = 0.0;
  bool has_turn = false;
  double s_arc_begin = 0.0;
  double s_arc_end = 0.0;
  double radius = 0.0;
  double turn_sign = 0.0;  // +1 left (CCW), -1 right (CW)
  Vec2 center;

  Pose at(double s) const {
    if (!has_turn || s <= s_arc_begin) {
      return {{start_x + s, -lane}, 0.0};
    }
    if (s <= s_arc_end) {
      const double a0 = -turn_sign * kPi / 2.0;
      const double a = a0 + turn_sign * (s - s_arc_begin) / radius;
      return {{center.x + radius * std::cos(a), center.y + radius * std::sin(a)},
              wrap_angle(a + turn_sign * kPi / 2.0)};
    }
    const double tail = s - s_arc_end;
    const Vec2 exit_p{center.x + radius, center.y};
    const double exit_heading = turn_sign * kPi / 2.0;
    return {{exit_p.x, exit_p.y + turn_sign * tail}, exit_heading};
  }
};

TargetPath make_target_path(const GeneratorConfig& cfg, Maneuver m, double start_x,
                            double radius) {
  TargetPath path;
  path.start_x = start_x;
  path.lane = cfg.lane_offset;
  if (m == Maneuver::straight) return path;

  path.has_turn = true;
  path.radius = radius;
  path.turn_sign = m == Maneuver::left ? 1.0 : -1.0;
  // The arc must land on the destination lane centerline: solving the 90
  // degree geometry puts the arc entry at x = sign*lane - radius.
  const double entry_x = path.turn_sign * cfg.lane_offset - radius;
  path.center = {entry_x, -cfg.lane_offset + path.turn_sign * radius};
  path.s_arc_begin = entry_x - start_x;
  path.s_arc_end = path.s_arc_begin + radius * kPi / 2.0;
  if (path.s_arc_begin <= 0.0) {
    throw ConfigError("generator geometry: spawn point reaches past the turn entry");
  }
  return path;
}

double speed_at(const TargetPath& path, double v_cruise, double v_turn, double s) {
  if (!path.has_turn) return v_cruise;
  const double ramp_in = std::min(kRampDist, path.s_arc_begin);
  if (s < path.s_arc_begin - ramp_in) return v_cruise;
  if (s < path.s_arc_begin) {
    const double u = (s - (path.s_arc_begin - ramp_in)) / ramp_in;
    return v_turn + (v_cruise - v_turn) * 0.5 * (1.0 + std::cos(kPi * u));
  }
  if (s < path.s_arc_end) return v_turn;
  if (s < path.s_arc_end + kRampDist) {
    const double u = (s - path.s_arc_end) / kRampDist;
    return v_cruise + (v_turn - v_cruise) * 0.5 * (1.0 + std::cos(kPi * u));
  }
  return v_cruise;
}

// Moving-average smoothing (window 5, edges clamped) of iid Gaussian noise,
// then a deterministic fix-up: halve the amplitude until every per-frame
// speed stays inside the tolerated band.
void add_bounded_noise(std::vector<Vec2>& positions, const GeneratorConfig& cfg, Rng& rng) {
  if (cfg.noise_sigma <= 0.0) return;
  const int n = static_cast<int>(positions.size());
  std::vector<Vec2> raw(n), smooth(n);
  for (auto& r : raw) r = {rng.normal(0.0, cfg.noise_sigma), rng.normal(0.0, cfg.noise_sigma)};
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - 2), hi = std::min(n - 1, t + 2);
    Vec2 acc;
    for (int k = lo; k <= hi; ++k) acc = acc + raw[k];
    smooth[t] = acc * (1.0 / static_cast<double>(hi - lo + 1));
  }

  const double dt = 1.0 / cfg.frame_rate_hz;
  const double lo_speed = 0.9 * cfg.v_min, hi_speed = 1.1 * cfg.v_max;
  double scale = 1.0;
  while (scale > 1e-12) {
    bool ok = true;
    for (int t = 1; t < n && ok; ++t) {
      const Vec2 a = positions[t - 1] + smooth[t - 1] * scale;
      const Vec2 b = positions[t] + smooth[t] * scale;
      const double speed = distance(a, b) / dt;
      ok = speed >= lo_speed && speed <= hi_speed;
    }
    if (ok) break;
    scale *= 0.5;
  }
  for (int t = 0; t < n; ++t) positions[t] = positions[t] + smooth[t] * scale;
}

AgentTrack finish_track(const std::vector<Vec2>& positions, const std::vector<double>& headings,
                        Maneuver intent) {
  AgentTrack track;
  track.intent = intent;
  track.states.resize(positions.size());
  for (std::size_t t = 0; t < positions.size(); ++t) {
    AgentState& s = track.states[t];
    s.p = positions[t];
    s.heading = wrap_angle(headings[t]);
    s.t = static_cast<int>(t);
    s.motion = t == 0 ? Vec2{} : positions[t] - positions[t - 1];
  }
  return track;
}

MapPolyline sampled_line(Vec2 from, Vec2 to, double step, MapSemantic semantic) {
  MapPolyline line;
  line.semantic = semantic;
  const double len = distance(from, to);
  const int n = std::max(1, static_cast<int>(std::round(len / step)));
  const Vec2 d = (to - from) * (1.0 / n);
  for (int i = 0; i <= n; ++i) line.points.push_back(from + d * i);
  return line;
}

std::vector<MapPolyline> build_map(const GeneratorConfig& cfg) {
  const double arm = cfg.arm_length, lane = cfg.lane_offset, edge = 2.0 * lane;
  std::vector<MapPolyline> map;
  // Lane centerlines of the four directed through-routes.
  map.push_back(sampled_line({-arm, -lane}, {arm, -lane}, 5.0, MapSemantic::lane_center));
  map.push_back(sampled_line({arm, lane}, {-arm, lane}, 5.0, MapSemantic::lane_center));
  map.push_back(sampled_line({lane, -arm}, {lane, arm}, 5.0, MapSemantic::lane_center));
  map.push_back(sampled_line({-lane, arm}, {-lane, -arm}, 5.0, MapSemantic::lane_center));
  // Outer road boundaries.
  map.push_back(sampled_line({-arm, -edge}, {arm, -edge}, 5.0, MapSemantic::boundary));
  map.push_back(sampled_line({-arm, edge}, {arm, edge}, 5.0, MapSemantic::boundary));
  map.push_back(sampled_line({-edge, -arm}, {-edge, arm}, 5.0, MapSemantic::boundary));
  map.push_back(sampled_line({edge, -arm}, {edge, arm}, 5.0, MapSemantic::boundary));
  // Crosswalk across the western approach.
  map.push_back(sampled_line({-2.0 * edge, -edge}, {-2.0 * edge, edge}, edge,
                             MapSemantic::crosswalk));
  return map;
}

void validate_config(const GeneratorConfig& cfg) {
  double prob_sum = 0.0;
  for (double p : cfg.maneuver_probs) {
    if (p < 0.0) throw ConfigError("maneuver probabilities must be non-negative");
    prob_sum += p;
  }
  if (std::fabs(prob_sum - 1.0) > 1e-9) {
    throw ConfigError("maneuver probabilities must sum to 1");
  }
  if (cfg.frames < cfg.min_frames) {
    throw ConfigError("frame count too small: " + std::to_string(cfg.frames) + " < " +
                      std::to_string(cfg.min_frames));
  }
  if (cfg.v_min <= 0.0 || cfg.v_max < cfg.v_min) throw ConfigError("invalid speed range");
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (cfg.turn_radius_min <= cfg.lane_offset || cfg.turn_radius_max < cfg.turn_radius_min) {
    throw ConfigError("invalid turn radius range");
  }
  if (cfg.frame_rate_hz <= 0) throw ConfigError("frame rate must be positive");
  if (cfg.max_background < 0 || cfg.max_background > 4) {
    throw ConfigError("background agent count range is 0-4");
  }
}

}  // namespace

const char* maneuver_name(Maneuver m) {
  switch (m) {
    case Maneuver::straight: return "straight";
    case Maneuver::left: return "left";
    case Maneuver::right: return "right";
  }
  throw ConfigError("unknown maneuver value");
}

Maneuver maneuver_from_name(const std::string& name) {
  if (name == "straight") return Maneuver::straight;
  if (name == "left") return Maneuver::left;
  if (name == "right") return Maneuver::right;
  throw DataError("unknown maneuver '" + name + "'");
}

const char* map_semantic_name(MapSemantic s) {
  switch (s) {
    case MapSemantic::lane_center: return "lane_center";
    case MapSemantic::boundary: return "boundary";
    case MapSemantic::crosswalk: return "crosswalk";
  }
  throw ConfigError("unknown map semantic value");
}

MapSemantic map_semantic_from_name(const std::string& name) {
  if (name == "lane_center") return MapSemantic::lane_center;
  if (name == "boundary") return MapSemantic::boundary;
  if (name == "crosswalk") return MapSemantic::crosswalk;
  throw DataError("unknown map semantic '" + name + "'");
}

Episode generate_episode(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  Rng rng(mix_seed(seed, kGenSalt));
  const double dt = 1.0 / cfg.frame_rate_hz;

  // Sampling order is fixed; any change breaks stored-episode determinism.
  const double u = rng.uniform();
  Maneuver maneuver = Maneuver::right;
  if (u < cfg.maneuver_probs[0]) {
    maneuver = Maneuver::straight;
  } else if (u < cfg.maneuver_probs[0] + cfg.maneuver_probs[1]) {
    maneuver = Maneuver::left;
  }
  const double v_cruise = rng.uniform(cfg.v_min, cfg.v_max);
  const double radius = rng.uniform(cfg.turn_radius_min, cfg.turn_radius_max);
  const double start_x = -cfg.arm_length + rng.uniform(0.0, cfg.start_jitter);

  const TargetPath path = make_target_path(cfg, maneuver, start_x, radius);
  const double v_turn = std::clamp(std::sqrt(kTurnLateralAccel * radius), cfg.v_min, v_cruise);

  Episode ep;
  ep.id = static_cast<std::int64_t>(seed);
  ep.frame_start = 0;
  ep.map = build_map(cfg);

  std::vector<Vec2> positions(cfg.frames);
  std::vector<double> headings(cfg.frames);
  double s = 0.0;
  for (int t = 0; t < cfg.frames; ++t) {
    const Pose pose = path.at(s);
    positions[t] = pose.p;
    headings[t] = pose.heading;
    s += speed_at(path, v_cruise, v_turn, s) * dt;
  }
  add_bounded_noise(positions, cfg, rng);
  ep.agents.push_back(finish_track(positions, headings, maneuver));

  const int n_background = static_cast<int>(rng.below(cfg.max_background + 1));
  for (int b = 0; b < n_background; ++b) {
    // Straight-through traffic on the other three approaches.
    struct LaneSpec {
      Vec2 start, dir;
      double heading;
    };
    const double arm = cfg.arm_length, lane = cfg.lane_offset;
    const LaneSpec lanes[3] = {
        {{arm, lane}, {-1.0, 0.0}, kPi},          // westbound
        {{lane, -arm}, {0.0, 1.0}, kPi / 2.0},    // northbound
        {{-lane, arm}, {0.0, -1.0}, -kPi / 2.0},  // southbound
    };
    const LaneSpec& spec = lanes[rng.below(3)];
    const double v = rng.uniform(cfg.v_min, cfg.v_max);
    const double advance = rng.uniform(0.0, 0.8 * arm);
    std::vector<Vec2> bg_pos(cfg.frames);
    std::vector<double> bg_head(cfg.frames, spec.heading);
    for (int t = 0; t < cfg.frames; ++t) {
      bg_pos[t] = spec.start + spec.dir * (advance + v * t * dt);
    }
    add_bounded_noise(bg_pos, cfg, rng);
    ep.agents.push_back(finish_track(bg_pos, bg_head, Maneuver::straight));
  }
  return ep;
}

SceneWindow window_at(const Episode& episode, int t0, int h_obs, int h_pred,
                      std::size_t target) {
  if (episode.agents.empty()) throw DataError("window_at: episode has no agents");
  if (target >= episode.agents.size()) throw DataError("window_at: no such agent");
  if (h_obs < 1 || h_pred < 0) throw DataError("window_at: invalid window lengths");
  if (t0 - h_obs + 1 < episode.frame_start || t0 + h_pred > episode.last_frame()) {
    throw DataError("window_at: anchor " + std::to_string(t0) + " with H_obs=" +
                    std::to_string(h_obs) + ", H_pred=" + std::to_string(h_pred) +
                    " leaves frames [" + std::to_string(episode.frame_start) + ", " +
                    std::to_string(episode.last_frame()) + "]");
  }

  SceneWindow w;
  w.t0 = t0;
  w.h_obs = h_obs;
  w.h_pred = h_pred;
  w.target = target;
  w.map = episode.map;

  const int base = t0 - h_obs + 1 - episode.frame_start;
  w.observed.resize(episode.agents.size());
  for (std::size_t a = 0; a < episode.agents.size(); ++a) {
    auto& states = episode.agents[a].states;
    auto& obs = w.observed[a];
    obs.assign(states.begin() + base, states.begin() + base + h_obs);
    obs[0].motion = {};  // motion vectors restart at the window edge
    for (int k = 1; k < h_obs; ++k) obs[k].motion = obs[k].p - obs[k - 1].p;
  }

  const auto& tstates = episode.agents[target].states;
  const int anchor_idx = t0 - episode.frame_start;
  w.future.assign(tstates.begin() + anchor_idx + 1, tstates.begin() + anchor_idx + 1 + h_pred);
  for (int k = 0; k < h_pred; ++k) {
    const Vec2 prev = k == 0 ? tstates[anchor_idx].p : w.future[k - 1].p;
    w.future[k].motion = w.future[k].p - prev;
  }
  return w;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_vec2(std::string& out, Vec2 v) {
  out += '[';
  append_double(out, v.x);
  out += ',';
  append_double(out, v.y);
  out += ']';
}

void append_episode(std::string& out, const Episode& ep) {
  out += "{\"episode_id\":";
  out += std::to_string(ep.id);
  out += ",\"frame_start\":";
  out += std::to_string(ep.frame_start);
  out += ",\"agents\":[";
  for (std::size_t a = 0; a < ep.agents.size(); ++a) {
    if (a) out += ',';
    out += "{\"intent\":\"";
    out += maneuver_name(ep.agents[a].intent);
    out += "\",\"states\":[";
    const auto& states = ep.agents[a].states;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (i) out += ',';
      out += "{\"p\":";
      append_vec2(out, states[i].p);
      out += ",\"heading\":";
      append_double(out, states[i].heading);
      out += ",\"t\":";
      out += std::to_string(states[i].t);
      out += ",\"motion\":";
      append_vec2(out, states[i].motion);
      out += '}';
    }
    out += "]}";
  }
  out += "],\"map\":[";
  for (std::size_t m = 0; m < ep.map.size(); ++m) {
    if (m) out += ',';
    out += "{\"semantic\":\"";
    out += map_semantic_name(ep.map[m].semantic);
    out += "\",\"points\":[";
    for (std::size_t i = 0; i < ep.map[m].points.size(); ++i) {
      if (i) out += ',';
      append_vec2(out, ep.map[m].points[i]);
    }
    out += "]}";
  }
  out += "]}";
}

Vec2 parse_vec2(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

Episode parse_episode(const nlohmann::json& j) {
  Episode ep;
  ep.id = j.at("episode_id").get<std::int64_t>();
  ep.frame_start = j.at("frame_start").get<int>();
  for (const auto& ja : j.at("agents")) {
    AgentTrack track;
    track.intent = maneuver_from_name(ja.at("intent").get<std::string>());
    for (const auto& js : ja.at("states")) {
      AgentState s;
      s.p = parse_vec2(js.at("p"));
      s.heading = js.at("heading").get<double>();
      s.t = js.at("t").get<int>();
      s.motion = parse_vec2(js.at("motion"));
      track.states.push_back(s);
    }
    ep.agents.push_back(std::move(track));
  }
  for (const auto& jm : j.at("map")) {
    MapPolyline line;
    line.semantic = map_semantic_from_name(jm.at("semantic").get<std::string>());
    for (const auto& jp : jm.at("points")) line.points.push_back(parse_vec2(jp));
    if (line.points.size() < 2) throw DataError("polyline with fewer than 2 points");
    for (std::size_t i = 1; i < line.points.size(); ++i) {
      if (line.points[i] == line.points[i - 1]) {
        throw DataError("polyline with repeated consecutive points");
      }
    }
    ep.map.push_back(std::move(line));
  }

  // Cross-check the stored redundancy instead of trusting it.
  const int n = ep.frames();
  for (const auto& track : ep.agents) {
    if (static_cast<int>(track.states.size()) != n) {
      throw DataError("agents disagree on the frame range");
    }
    for (int t = 0; t < n; ++t) {
      const AgentState& s = track.states[t];
      if (s.t != ep.frame_start + t) throw DataError("non-contiguous frame index");
      if (!(s.heading > -kPi - 1e-15 && s.heading <= kPi + 1e-15)) {
        throw DataError("heading outside (-pi, pi]");
      }
      const Vec2 want = t == 0 ? Vec2{} : s.p - track.states[t - 1].p;
      if (s.motion != want) throw DataError("motion vector does not match positions");
    }
  }
  return ep;
}

}  // namespace

void save_episodes(const std::string& path, const std::vector<Episode>& episodes,
                   int frame_rate_hz) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "{\"format_version\":1,\"frame_rate_hz\":" << frame_rate_hz
      << ",\"fields\":[\"episode_id\",\"frame_start\",\"agents\",\"map\"]}\n";
  std::string line;
  for (const Episode& ep : episodes) {
    line.clear();
    append_episode(line, ep);
    out << line << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) throw DataError("record 0: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
    const int version = header.at("format_version").get<int>();
    if (version != 1) {
      throw DataError("unsupported format_version " + std::to_string(version));
    }
    (void)header.at("frame_rate_hz").get<double>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("record 0: ") + e.what());
  }

  std::vector<Episode> episodes;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    try {
      episodes.push_back(parse_episode(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("record " + std::to_string(record) + ": " + e.what());
    }
  }
  return episodes;
}

}  // namespace streamcast
