#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "streamcast/decoder.hpp"

namespace streamcast {

// One proposed future for the target, tagged with where it came from so
// aggregators can mix candidates from many anchors and models.
struct Candidate {
  std::vector<Vec2> trajectory;  // world frame, one point per evaluated step
  double score = 0.0;            // positive confidence mass
  int anchor_t = 0;              // anchor frame the source prediction was made at
  int model_id = 0;
  std::size_t mode = 0;

  bool operator==(const Candidate&) const = default;
};

using CandidateSet = std::vector<Candidate>;

// Deterministic candidate priority: score descending, then newer anchors
// first, then mode ascending, then model ascending.
bool candidate_before(const Candidate& a, const Candidate& b);

// The N highest-priority candidates.
CandidateSet topk(const CandidateSet& cands, std::size_t n);

// Greedy non-maximum suppression on trajectory endpoints: repeatedly keep the
// best unsuppressed candidate and suppress every candidate whose endpoint
// lies strictly within `radius` of it. If fewer than n survive, the
// highest-priority suppressed candidates fill the remaining slots.
CandidateSet nms(const CandidateSet& cands, std::size_t n, double radius);

// K-means (k = n) over trajectory endpoints with k-means++ initialization;
// each cluster becomes one candidate: the score-weighted pointwise average of
// its members, scored by the cluster's share of the total score mass (so the
// output scores sum to 1). Provenance is taken from the cluster's
// highest-priority member.
CandidateSet kmeans_agg(const CandidateSet& cands, std::size_t n, std::uint64_t seed);

// Line-delimited JSON interchange so trajectory-level aggregators can run on
// external predictions. Byte-deterministic for equal inputs.
void save_candidates(const std::string& path, const CandidateSet& cands);
CandidateSet load_candidates(const std::string& path);

// Sum of M consecutive anchors' refined queries, mode index by mode index.
struct AggregatedQuerySet {
  Tensor queries;          // [N x d]
  std::size_t window = 0;  // M, the number of contributing anchors
  int t0 = 0;              // newest contributing anchor
};

// The context-aware queries produced by the aggregation decoder.
struct ContextQuerySet {
  Tensor queries;  // [N x d]
  int t0 = 0;
};

// Component-wise sum over M consecutive anchors, always accumulated in
// ascending anchor order regardless of the order given.
AggregatedQuerySet add_queries(const std::vector<RefinedQuerySet>& sets);

// Component-wise mean over models at one anchor, accumulated in given order.
RefinedQuerySet avg_queries_across_models(const std::vector<RefinedQuerySet>& sets);

struct AggregatorHyper {
  DecoderHyper decoder;
  std::size_t window = 10;  // M anchors the aggregator may look back over
};

// Learning-based aggregation: a second decoder (its own parameters) refines
// aggregated queries against the scene embedding and re-heads them.
class LearnedAggregator {
 public:
  LearnedAggregator(const AggregatorHyper& hp, ParamStore& ps, Rng& rng);

  // Query-addition variant: refine the elementwise sum.
  std::pair<ContextQuerySet, MixturePrediction> refine(const AggregatedQuerySet& agg,
                                                       const SceneEmbedding& embedding,
                                                       const ForwardCtx& ctx = {}) const;

  // Cross-attention variant: the current frame's queries read the M x N bank
  // of historical queries (keys carry a learned anchor-offset embedding),
  // then take the same refinement path.
  std::pair<ContextQuerySet, MixturePrediction> refine_xattn(
      const RefinedQuerySet& current, const std::vector<RefinedQuerySet>& history,
      const SceneEmbedding& embedding, const ForwardCtx& ctx = {}) const;

  const AggregatorHyper& hyper() const { return hp_; }

 private:
  AggregatorHyper hp_;
  Decoder decoder_;
  MultiHeadAttention bank_attn_;
  Tensor offset_embedding_;  // [M x d], row m = embedding for "m frames ago"
};

}  // namespace streamcast
