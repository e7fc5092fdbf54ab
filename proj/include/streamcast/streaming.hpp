#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "streamcast/aggregation.hpp"
#include "streamcast/model.hpp"
#include "streamcast/scenario.hpp"

namespace streamcast {

// Per-anchor evaluation layout for a streamed episode: at every anchor t the
// harness holds the predictions issued at t, t-1, ..., t-(window-1) and scores
// them on the ground-truth frames t+a+1 .. t+b.
struct StreamSchedule {
  std::size_t window = 10;  // number of pooled anchors, newest included
  int eval_from = 0;        // a: first scored step, as an offset past the anchor
  int eval_to = 21;         // b: last scored step (inclusive)
  int h_obs = 20;
  int h_pred = 30;
};

// Empty string when the schedule is coherent, otherwise a description of the
// violated constraint. The binding one: a prediction issued window-1 frames
// ago must still reach step b, i.e. window-1 <= h_pred - b.
std::string validate(const StreamSchedule& schedule);

// One model output reduced to the frames every pooled anchor can cover.
struct SlicedPrediction {
  std::vector<std::vector<Vec2>> trajectories;  // [mode][step], world frame
  std::vector<double> scores;                   // mixture weights, one per mode
  int anchor_t = 0;                             // anchor the prediction was issued at
};

// Cuts the steps forecasting frames schedule_t0+a+1 .. schedule_t0+b out of a
// prediction issued at prediction.t0 <= schedule_t0. Throws DataError when the
// prediction is too stale to reach step b.
SlicedPrediction slice_prediction(const MixturePrediction& prediction, int schedule_t0,
                                  const StreamSchedule& schedule);

// Minimum over modes of the final-step distance to the ground truth.
double min_fde(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt);

// Time-averaged distance of the mode with the smallest final-step error (ties
// to the lowest index), so the reported pair describes one trajectory.
double min_ade(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt);

bool is_miss(const std::vector<std::vector<Vec2>>& trajectories, const std::vector<Vec2>& gt,
             double threshold = 2.0);

struct MetricRow {
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  std::size_t samples = 0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricReport {
  MetricRow all;
  std::array<MetricRow, 3> by_maneuver;  // indexed by Maneuver
  double latency_ms_p50 = 0.0;           // 0 unless timing was requested
  std::size_t predict_calls = 0;         // encoder+decoder invocations

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// How the pooled anchors are reduced to one candidate set per anchor. The
// model_* kinds ensemble across independently trained models at the current
// anchor instead of across time.
enum class AggregatorKind {
  single,       // newest prediction only; the no-harness baseline
  top_k,        // best-scored candidates across the pool
  nms,          // endpoint non-maximum suppression across the pool
  kmeans,       // endpoint clustering with score-weighted merging
  learn_add,    // learned head over the summed query sets
  learn_xattn,  // learned head with cross-attention over the query bank
  model_avg,    // refined queries averaged across models, then the first model's heads
  model_topk,   // candidates pooled across models, best-scored kept
};

const char* aggregator_name(AggregatorKind kind);
AggregatorKind aggregator_from_name(const std::string& name);

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::single;
  double nms_radius = 2.0;
  std::uint64_t kmeans_seed = 0;
  const LearnedAggregator* learned = nullptr;  // required for the learn_* kinds
};

// Fixed-capacity ring of the most recent per-anchor model outputs. Pushing a
// non-consecutive anchor restarts the ring, mirroring a stream reset.
class QueryCache {
 public:
  struct Entry {
    RefinedQuerySet queries;
    MixturePrediction prediction;
  };

  explicit QueryCache(std::size_t capacity);

  void push(Entry entry);
  void clear();
  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return slots_.size() == capacity_; }
  int newest_t0() const;
  // Entry for the anchor `offset` frames before the newest one.
  const Entry& back(std::size_t offset) const;

 private:
  std::size_t capacity_;
  std::vector<Entry> slots_;
  std::size_t head_ = 0;  // slot of the newest entry
};

// Everything one evaluated anchor saw and produced; recorded only when a
// trace sink is attached, so plain evaluation pays nothing for it.
struct AnchorTrace {
  std::int64_t episode_id = 0;
  int t0 = 0;
  CandidateSet pool;                            // all window*N sliced candidates
  std::vector<std::vector<Vec2>> output;        // aggregated trajectories
  std::vector<double> output_scores;
  std::vector<Vec2> gt;
};

struct StreamOptions {
  StreamSchedule schedule;
  AggregatorSpec aggregator;
  bool use_cache = true;
  bool timing = false;
  std::vector<AnchorTrace>* trace = nullptr;  // optional per-anchor recording
};

// Replays each episode frame by frame, pools the trailing predictions with the
// configured aggregator, and scores the result at every anchor that has a full
// window. With the cache on, each frame is encoded and decoded exactly once
// per model; with it off, every anchor recomputes its whole window. Both paths
// produce bitwise-identical metrics. Episodes are reduced in id order.
//
// Temporal kinds read models[0] only; the model_* kinds combine all entries at
// the current anchor. Every model must share the same mode count and horizon.
MetricReport run_stream(const std::vector<const Model*>& models,
                        const std::vector<Episode>& episodes, const StreamOptions& options);

// Single-model convenience wrapper.
MetricReport run_stream(const Model& model, const std::vector<Episode>& episodes,
                        const StreamOptions& options);

// One CSV block per aggregator: an "all" row plus one row per maneuver, with
// the pinned header `aggregator,minADE,minFDE,miss_rate,samples,maneuver,latency_ms_p50`.
void write_metrics_csv(const std::string& path, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports);

}  // namespace streamcast
