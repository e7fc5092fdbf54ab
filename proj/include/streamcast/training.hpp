#pragma once

#include <cstdint>
#include <vector>

#include "streamcast/losses.hpp"
#include "streamcast/model.hpp"
#include "streamcast/streaming.hpp"

namespace streamcast {

struct TrainConfig {
  double lambda = 1.0;       // classification weight in total = traj + lambda * cls
  double lr = 5e-4;
  int epochs = 16;           // desk-scale default
  int batch_size = 32;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  double finetune_lr = 2.5e-4;  // half the base rate
  int finetune_epochs = 8;
  BestModeRule best_mode = BestModeRule::summed_l2;
};

// Throws ConfigError when a rate is non-positive, an epoch or batch count is
// below 1, lambda is negative, or dropout falls outside [0, 1).
void validate(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;        // 1-based
  double mean_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;

  double first_loss() const { return epochs.front().mean_loss; }
  double final_loss() const { return epochs.back().mean_loss; }
};

// Ground truth for a window's prediction: the future positions expressed in
// the anchor frame, matching the decoder's output space.
std::vector<Vec2> future_local(const SceneWindow& window);

// Minimizes the mixture loss with AdamW under a cosine rate schedule. Data
// order, dropout streams, and therefore the resulting parameter bytes are pure
// functions of (dataset, config). Aborts with NumericsError, naming the epoch
// and step, on a non-finite loss.
TrainLog train_base(const Model& model, ParamStore& ps, const std::vector<SceneWindow>& dataset,
                    const TrainConfig& cfg);

// Fine-tunes only the aggregation decoder (parameters under "agg") against the
// current anchor's ground truth, feeding it query sets collected from the
// frozen base model over each episode's sliding windows. `kind` selects the
// query-addition or cross-attention path.
TrainLog train_aggregator(const Model& base, LearnedAggregator& agg, ParamStore& ps,
                          const std::vector<Episode>& episodes, const StreamSchedule& schedule,
                          const TrainConfig& cfg,
                          AggregatorKind kind = AggregatorKind::learn_add);

}  // namespace streamcast
