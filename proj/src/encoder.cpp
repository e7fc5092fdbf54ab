#include "streamcast/encoder.hpp"

#include <cmath>

namespace streamcast {

namespace o = ops;

std::array<double, 4> relative_embedding(const PoseTime& receiver, const PoseTime& other) {
  const Vec2 local = to_agent(receiver.pose, other.pose.p);
  const double dist = local.norm();
  // Bearing is undefined at zero distance; atan2 on signed zeros would let
  // the receiver's own position land at pi instead of 0.
  const double bearing = dist == 0.0 ? 0.0 : std::atan2(local.y, local.x);
  return {dist, bearing, wrap_angle(other.pose.heading - receiver.pose.heading),
          other.time - receiver.time};
}

std::vector<double> fourier_features(const std::vector<double>& x, int bands) {
  if (bands < 1) throw ConfigError("fourier_features: bands must be >= 1");
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> out;
  out.reserve(x.size() * (2 * bands + 1));
  out.insert(out.end(), x.begin(), x.end());
  for (double v : x) {
    double freq = kPi;
    for (int j = 0; j < bands; ++j) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
      freq *= 2.0;
    }
  }
  return out;
}

namespace {

// Raw channels of one agent-history token: scaled distance, bearing and
// heading difference as (sin, cos) pairs, scaled time offset, and the motion
// vector rotated into the anchor frame.
constexpr std::size_t kAgentChannels = 8;
// Raw channels of one map point: the relative descriptor with angles as
// (sin, cos) pairs; the semantic one-hot is appended after the Fourier
// expansion.
constexpr std::size_t kMapChannels = 6;
constexpr std::size_t kSemanticClasses = 3;

std::size_t fourier_width(std::size_t channels, int bands) {
  return channels * (2 * static_cast<std::size_t>(bands) + 1);
}

// Angles feed the network as (sin, cos) pairs: a raw angle channel is
// discontinuous at the ±pi wrap, so scenes holding an exact-pi heading
// difference (oncoming traffic on a straight road) would lose rigid-motion
// invariance to a one-ulp perturbation.
void push_descriptor(std::vector<double>& out, const std::array<double, 4>& rel,
                     double distance_scale, double time_scale) {
  out.push_back(rel[0] * distance_scale);
  out.push_back(std::sin(rel[1]));
  out.push_back(std::cos(rel[1]));
  out.push_back(std::sin(rel[2]));
  out.push_back(std::cos(rel[2]));
  out.push_back(rel[3] * time_scale);
}

}  // namespace

Encoder::Encoder(const EncoderHyper& hp, ParamStore& ps, Rng& rng) : hp_(hp) {
  if (hp.width % static_cast<std::size_t>(hp.heads) != 0) {
    throw ConfigError("encoder width must be divisible by the head count");
  }
  if (hp.h_obs < 1) throw ConfigError("encoder needs at least one observed frame");

  const std::size_t d = hp.width;
  const std::size_t ffn_hidden = 2 * d;
  const std::size_t agent_in = fourier_width(kAgentChannels, hp.fourier_bands);
  const std::size_t map_in = fourier_width(kMapChannels, hp.fourier_bands) + kSemanticClasses;

  agent_in1_ = Linear(ps, "enc.agent_in1", agent_in, d, rng);
  agent_in2_ = Linear(ps, "enc.agent_in2", d, d, rng);
  map_in1_ = Linear(ps, "enc.map_in1", map_in, d, rng);
  map_in2_ = Linear(ps, "enc.map_in2", d, d, rng);
  for (int l = 0; l < hp.temporal_layers; ++l) {
    temporal_.emplace_back(ps, "enc.temporal" + std::to_string(l), d, hp.heads, ffn_hidden, rng);
  }
  for (int l = 0; l < hp.map_layers; ++l) {
    agent_map_.emplace_back(ps, "enc.agent_map" + std::to_string(l), d, hp.heads, ffn_hidden,
                            rng);
  }
  for (int l = 0; l < hp.agent_layers; ++l) {
    agent_agent_.emplace_back(ps, "enc.agent_agent" + std::to_string(l), d, hp.heads, ffn_hidden,
                              rng);
  }
}

SceneEmbedding Encoder::encode(const SceneWindow& window, const ForwardCtx& ctx) const {
  if (window.observed.empty()) throw ShapeError("encode: window has no agents");
  for (const auto& track : window.observed) {
    if (static_cast<int>(track.size()) != hp_.h_obs) {
      throw ShapeError("encode: observed span does not match configured H_obs");
    }
  }

  const std::size_t d = hp_.width;
  const PoseTime anchor{window.anchor_pose(), static_cast<double>(window.t0)};
  const double c0 = std::cos(anchor.pose.heading), s0 = std::sin(anchor.pose.heading);

  // Agent history tokens -> temporal self-attention -> anchor-frame token.
  std::vector<Tensor> agent_rows;
  agent_rows.reserve(window.observed.size());
  const std::size_t agent_in = fourier_width(kAgentChannels, hp_.fourier_bands);
  for (const auto& track : window.observed) {
    std::vector<double> feats;
    feats.reserve(track.size() * agent_in);
    for (const AgentState& s : track) {
      const auto rel = relative_embedding(
          anchor, {{s.p, s.heading}, static_cast<double>(s.t)});
      const Vec2 m = s.motion;
      std::vector<double> raw;
      raw.reserve(kAgentChannels);
      push_descriptor(raw, rel, hp_.distance_scale, hp_.time_scale);
      raw.push_back(c0 * m.x + s0 * m.y);
      raw.push_back(-s0 * m.x + c0 * m.y);
      const auto ff = fourier_features(raw, hp_.fourier_bands);
      feats.insert(feats.end(), ff.begin(), ff.end());
    }
    Tensor x = Tensor::from({track.size(), agent_in}, std::move(feats));
    x = agent_in2_.apply(o::relu(agent_in1_.apply(x)));
    for (const auto& block : temporal_) x = block.apply(x, ctx);
    agent_rows.push_back(o::slice(x, 0, track.size() - 1, 1));
  }
  Tensor agents = agent_rows.size() == 1 ? agent_rows[0] : o::concat(agent_rows, 0);

  // Map polylines -> mean-pooled per-polyline tokens.
  Tensor map_tokens = Tensor::zeros({0, d});
  if (!window.map.empty()) {
    std::vector<Tensor> tokens;
    tokens.reserve(window.map.size());
    const std::size_t map_in = fourier_width(kMapChannels, hp_.fourier_bands) + kSemanticClasses;
    for (const MapPolyline& line : window.map) {
      const std::size_t n = line.points.size();
      std::vector<double> feats;
      feats.reserve(n * map_in);
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = line.points[i];
        const Vec2 b = i + 1 < n ? line.points[i + 1] : line.points[i - 1];
        const Vec2 dir = i + 1 < n ? b - a : a - b;
        const double seg_heading = std::atan2(dir.y, dir.x);
        const auto rel = relative_embedding(anchor, {{a, seg_heading}, anchor.time});
        std::vector<double> raw;
        raw.reserve(kMapChannels);
        push_descriptor(raw, rel, hp_.distance_scale, hp_.time_scale);
        const auto ff = fourier_features(raw, hp_.fourier_bands);
        feats.insert(feats.end(), ff.begin(), ff.end());
        for (std::size_t sc = 0; sc < kSemanticClasses; ++sc) {
          feats.push_back(sc == static_cast<std::size_t>(line.semantic) ? 1.0 : 0.0);
        }
      }
      Tensor pts = Tensor::from({n, map_in}, std::move(feats));
      Tensor proj = map_in2_.apply(o::relu(map_in1_.apply(pts)));
      Tensor pool = Tensor::full({1, n}, 1.0 / static_cast<double>(n));
      tokens.push_back(o::matmul(pool, proj));
    }
    map_tokens = tokens.size() == 1 ? tokens[0] : o::concat(tokens, 0);
  }

  // Factorized fusion: agents read the map, then each other.
  for (const auto& block : agent_map_) agents = block.apply(agents, map_tokens, ctx);
  for (const auto& block : agent_agent_) agents = block.apply(agents, ctx);

  return {agents, map_tokens, window.t0, window.target, anchor.pose};
}

}  // namespace streamcast
