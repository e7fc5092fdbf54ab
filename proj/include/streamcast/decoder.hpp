#pragma once

#include <string>
#include <utility>
#include <vector>

#include "streamcast/encoder.hpp"
#include "streamcast/layers.hpp"

namespace streamcast {

struct DecoderHyper {
  std::size_t width = 64;
  int heads = 4;
  int layers = 2;
  std::size_t modes = 6;    // N mode queries
  std::size_t horizon = 30;  // T' predicted frames
};

// The N learned mode query vectors, shared across all anchor times.
struct ModeQuerySet {
  Tensor queries;  // [N x d], trainable leaf
};

// q*_{nt}: the mode queries after attending the scene at anchor time t0.
struct RefinedQuerySet {
  Tensor queries;  // [N x d]
  int t0 = 0;
};

// N-mode Laplace mixture over the target's future, in the agent-centric
// frame. Locations and scales are stored interleaved per mode:
// row n = (x_1, y_1, ..., x_T', y_T').
struct MixturePrediction {
  Tensor pi;  // [N], positive, sums to 1
  Tensor mu;  // [N x 2T'] meters
  Tensor b;   // [N x 2T'] meters, >= the positivity floor
  int t0 = 0;
  Pose anchor;
};

// Scale floor keeping Eq and densities away from division by ~0.
inline constexpr double kScaleFloor = 1e-4;

inline Vec2 mode_point(const MixturePrediction& pred, std::size_t n, std::size_t t) {
  return {pred.mu.at(n, 2 * t), pred.mu.at(n, 2 * t + 1)};
}

// Locations of every mode converted to the world frame via the anchor pose.
std::vector<std::vector<Vec2>> to_world(const MixturePrediction& pred);
// World-frame points expressed in the agent-centric frame of `anchor`.
std::vector<Vec2> to_agent(const std::vector<Vec2>& world_points, const Pose& anchor);

// DETR-style trajectory decoder: the mode queries self-attend, cross-attend
// the scene tokens, and three heads read trajectories, scales, and mixing
// coefficients off the refined queries.
class Decoder {
 public:
  Decoder(const DecoderHyper& hp, ParamStore& ps, Rng& rng, const std::string& prefix = "dec");

  std::pair<RefinedQuerySet, MixturePrediction> decode(const SceneEmbedding& embedding,
                                                       const ForwardCtx& ctx = {}) const;

  // The two decode stages split apart so an aggregation stage can refine a
  // different query set against the same scene, or re-head refined queries.
  Tensor refine(const SceneEmbedding& embedding, const Tensor& queries,
                const ForwardCtx& ctx = {}) const;
  MixturePrediction heads(const Tensor& refined, int t0, const Pose& anchor) const;

  const ModeQuerySet& mode_queries() const { return queries_; }
  const DecoderHyper& hyper() const { return hp_; }

 private:
  DecoderHyper hp_;
  ModeQuerySet queries_;
  std::vector<SelfAttentionBlock> self_;
  std::vector<CrossAttentionBlock> cross_;
  Linear pi_head_, mu_head_, b_head_;
};

}  // namespace streamcast
