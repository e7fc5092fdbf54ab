#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "streamcast/geometry.hpp"
#include "streamcast/layers.hpp"
#include "streamcast/scenario.hpp"

namespace streamcast {

struct PoseTime {
  Pose pose;
  double time = 0.0;
};

// Polar descriptor of `other` as seen from `receiver`: distance, bearing in
// the receiver frame, heading difference, time difference. Invariant under
// any global rigid transform and time shift applied to both elements.
std::array<double, 4> relative_embedding(const PoseTime& receiver, const PoseTime& other);

// Per input component x_k and band j in 0..bands-1: sin(2^j pi x_k) and
// cos(2^j pi x_k). Layout: the raw input first, then for each component its
// band pairs, so the result has len(x) * (2*bands + 1) entries.
std::vector<double> fourier_features(const std::vector<double>& x, int bands);

struct EncoderHyper {
  std::size_t width = 64;
  int heads = 4;
  int fourier_bands = 8;
  int temporal_layers = 2;
  int map_layers = 2;
  int agent_layers = 2;
  int h_obs = 20;
  double distance_scale = 0.1;  // meters are divided by 10 before Fourier encoding
  double time_scale = 0.1;      // frame offsets become seconds at 10 Hz
  double dropout = 0.1;
};

// Scene embedding s_t: one context vector per agent, one per map polyline.
// The anchor pose is metadata for converting agent-centric predictions back
// to world coordinates; it is not part of the (rigid-motion invariant)
// embedding values.
struct SceneEmbedding {
  Tensor agents;      // [A x d]
  Tensor map_tokens;  // [P x d]
  int t0 = 0;
  std::size_t target = 0;
  Pose anchor;
};

// SceneWindow -> SceneEmbedding. All geometry is reduced to descriptors
// relative to the target's anchor pose before anything learned touches it,
// which is what makes the embedding rigid-motion invariant.
class Encoder {
 public:
  Encoder(const EncoderHyper& hp, ParamStore& ps, Rng& rng);

  SceneEmbedding encode(const SceneWindow& window, const ForwardCtx& ctx = {}) const;

  const EncoderHyper& hyper() const { return hp_; }

 private:
  EncoderHyper hp_;
  Linear agent_in1_, agent_in2_;  // Fourier agent features -> d
  Linear map_in1_, map_in2_;      // Fourier map point features -> d
  std::vector<SelfAttentionBlock> temporal_;
  std::vector<CrossAttentionBlock> agent_map_;
  std::vector<SelfAttentionBlock> agent_agent_;
};

}  // namespace streamcast
