#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "streamcast/common.hpp"
#include "streamcast/geometry.hpp"

namespace streamcast {

enum class Maneuver { straight = 0, left = 1, right = 2 };
const char* maneuver_name(Maneuver m);
Maneuver maneuver_from_name(const std::string& name);

enum class MapSemantic { lane_center = 0, boundary = 1, crosswalk = 2 };
const char* map_semantic_name(MapSemantic s);
MapSemantic map_semantic_from_name(const std::string& name);

struct AgentState {
  Vec2 p;                // meters, world frame
  double heading = 0.0;  // radians in (-pi, pi]
  int t = 0;             // frame index at the configured rate
  Vec2 motion;           // p^t - p^{t-1}; zero on an episode's first frame

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct MapPolyline {
  std::vector<Vec2> points;  // >= 2, consecutive points distinct
  MapSemantic semantic = MapSemantic::lane_center;

  friend bool operator==(const MapPolyline&, const MapPolyline&) = default;
};

struct AgentTrack {
  std::vector<AgentState> states;  // one per episode frame, in order
  Maneuver intent = Maneuver::straight;  // generator ground truth; never fed to models

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct Episode {
  std::int64_t id = 0;
  int frame_start = 0;
  std::vector<AgentTrack> agents;  // agent 0 is the prediction target
  std::vector<MapPolyline> map;

  int frames() const { return agents.empty() ? 0 : static_cast<int>(agents[0].states.size()); }
  int last_frame() const { return frame_start + frames() - 1; }

  friend bool operator==(const Episode&, const Episode&) = default;
};

// One model input: H_obs observed frames per agent ending at the anchor t0,
// the map, and (for training/eval) the target's next H_pred frames.
struct SceneWindow {
  int t0 = 0;
  int h_obs = 0;
  int h_pred = 0;
  std::size_t target = 0;
  std::vector<std::vector<AgentState>> observed;  // [agent][frame], length h_obs each
  std::vector<AgentState> future;                 // target only, length h_pred
  std::vector<MapPolyline> map;

  const AgentState& anchor_state() const { return observed[target].back(); }
  Pose anchor_pose() const { return {anchor_state().p, anchor_state().heading}; }
};

struct GeneratorConfig {
  int frames = 70;
  int frame_rate_hz = 10;
  int min_frames = 60;  // callers set this to H_obs + H_pred + M
  double arm_length = 50.0;
  double lane_offset = 1.75;
  double v_min = 5.0;
  double v_max = 15.0;
  double noise_sigma = 0.05;
  std::array<double, 3> maneuver_probs = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // straight/left/right
  double turn_radius_min = 6.0;
  double turn_radius_max = 12.0;
  double start_jitter = 5.0;  // uniform advance of the spawn point, meters
  int max_background = 4;
};

// A 4-way intersection episode: the target approaches eastbound, samples one
// maneuver, and follows a constant-curvature turn or drives straight, with
// smoothed Gaussian positional noise. Pure in (config, seed).
Episode generate_episode(const GeneratorConfig& config, std::uint64_t seed);

SceneWindow window_at(const Episode& episode, int t0, int h_obs, int h_pred, std::size_t target);

// Line-delimited JSON with a header record; floats carry 17 significant
// digits so the round trip is lossless.
void save_episodes(const std::string& path, const std::vector<Episode>& episodes,
                   int frame_rate_hz = 10);
std::vector<Episode> load_episodes(const std::string& path);

}  // namespace streamcast
