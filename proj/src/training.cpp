#include "streamcast/training.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "streamcast/common.hpp"
#include "streamcast/optim.hpp"

namespace streamcast {

void validate(const TrainConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (cfg.finetune_lr <= 0.0) throw ConfigError("fine-tune learning rate must be positive");
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.finetune_epochs < 1) throw ConfigError("fine-tune epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

std::vector<Vec2> future_local(const SceneWindow& window) {
  const Pose anchor = window.anchor_pose();
  std::vector<Vec2> out;
  out.reserve(window.future.size());
  for (const AgentState& s : window.future) out.push_back(to_agent(anchor, s.p));
  return out;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
}

[[noreturn]] void abort_diverged(const char* stage, int epoch, std::int64_t step,
                                 const std::string& detail) {
  throw NumericsError(std::string(stage) + " diverged at epoch " + std::to_string(epoch) +
                      ", step " + std::to_string(step) + ": " + detail);
}

// Shared batch driver: shuffles, accumulates mean-normalized gradients per
// batch, steps AdamW on `params` along a cosine rate, and logs per-epoch mean
// loss. `forward` maps a dataset index to the total-loss tensor.
template <typename Forward>
TrainLog run_epochs(const char* stage, std::size_t dataset_size,
                    const std::vector<std::pair<std::string, Tensor>>& params, double initial_rate,
                    int epochs, const TrainConfig& cfg, const Forward& forward) {
  AdamW opt({.weight_decay = cfg.weight_decay});
  const std::size_t batches_per_epoch =
      (dataset_size + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size);
  const std::int64_t total_steps = static_cast<std::int64_t>(batches_per_epoch) * epochs;
  std::int64_t step = 0;

  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;

  TrainLog log;
  log.epochs.reserve(static_cast<std::size_t>(epochs));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order, shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < dataset_size; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(dataset_size, begin + static_cast<std::size_t>(cfg.batch_size));
      GradAccumulator acc;
      for (std::size_t i = begin; i < end; ++i) {
        Rng dropout_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), i + 1));
        double value = 0.0;
        try {
          // The tensor layer throws on any non-finite intermediate, so a
          // divergence usually surfaces here rather than as a NaN loss value.
          const Tensor loss = forward(order[i], dropout_rng);
          value = loss.value();
          if (std::isfinite(value)) acc.accumulate(backward(loss));
        } catch (const NumericsError& cause) {
          abort_diverged(stage, epoch, step, cause.what());
        }
        if (!std::isfinite(value)) {
          abort_diverged(stage, epoch, step, "total loss = " + std::to_string(value));
        }
        epoch_loss += value;
      }
      acc.scale(1.0 / static_cast<double>(end - begin));
      opt.step(params, acc.map(), cosine_rate(step, total_steps, initial_rate, 0.0));
      ++step;
    }

    const double mean = epoch_loss / static_cast<double>(dataset_size);
    log.epochs.push_back({epoch, mean});
    log_info(std::string(stage) + " epoch " + std::to_string(epoch) + "/" +
             std::to_string(epochs) + " mean loss " + std::to_string(mean));
  }
  return log;
}

}  // namespace

TrainLog train_base(const Model& model, ParamStore& ps, const std::vector<SceneWindow>& dataset,
                    const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw DataError("base training needs a non-empty dataset");

  std::vector<std::vector<Vec2>> gt;
  gt.reserve(dataset.size());
  for (const SceneWindow& w : dataset) gt.push_back(future_local(w));

  return run_epochs("train-base", dataset.size(), ps.entries(), cfg.lr, cfg.epochs, cfg,
                    [&](std::size_t i, Rng& dropout_rng) {
                      ForwardCtx ctx{true, cfg.dropout, &dropout_rng};
                      const ModelOutput out = model.predict(dataset[i], ctx);
                      return total_loss(out.prediction, gt[i], cfg.lambda, cfg.best_mode).total;
                    });
}

TrainLog train_aggregator(const Model& base, LearnedAggregator& agg, ParamStore& ps,
                          const std::vector<Episode>& episodes, const StreamSchedule& schedule,
                          const TrainConfig& cfg, AggregatorKind kind) {
  validate(cfg);
  if (kind != AggregatorKind::learn_add && kind != AggregatorKind::learn_xattn) {
    throw ConfigError(std::string("train_aggregator fine-tunes a learned head, not \"") +
                      aggregator_name(kind) + "\"");
  }
  const std::string problem = validate(schedule);
  if (!problem.empty()) throw ConfigError("invalid stream schedule: " + problem);
  if (kind == AggregatorKind::learn_xattn && schedule.window > agg.hyper().window) {
    throw ConfigError("schedule window " + std::to_string(schedule.window) +
                      " exceeds the aggregator's offset table (" +
                      std::to_string(agg.hyper().window) + ")");
  }
  if (agg.hyper().decoder.horizon != static_cast<std::size_t>(schedule.h_pred)) {
    throw ConfigError("aggregation head predicts " + std::to_string(agg.hyper().decoder.horizon) +
                      " steps but the schedule assumes h_pred=" + std::to_string(schedule.h_pred));
  }
  if (episodes.empty()) throw DataError("aggregator training needs at least one episode");

  // One sample per anchor with a full lookback window.
  std::vector<std::pair<const Episode*, int>> samples;
  for (const Episode& ep : episodes) {
    const int first = ep.frame_start + schedule.h_obs - 1;
    const int last = ep.last_frame() - schedule.h_pred;
    const int eval_first = first + static_cast<int>(schedule.window) - 1;
    if (eval_first > last) {
      throw DataError("episode " + std::to_string(ep.id) + " spans " +
                      std::to_string(ep.frames()) +
                      " frames, shorter than the training window");
    }
    for (int t = eval_first; t <= last; ++t) samples.emplace_back(&ep, t);
  }

  const auto agg_params = ps.matching("agg");
  if (agg_params.empty()) throw ConfigError("the parameter store holds no aggregation head");

  return run_epochs(
      "train-agg", samples.size(), agg_params, cfg.finetune_lr, cfg.finetune_epochs, cfg,
      [&](std::size_t i, Rng& dropout_rng) {
        const auto& [ep, t0] = samples[i];
        // The bank of refined queries comes from the frozen base; it enters
        // the aggregator graph as constants.
        std::vector<RefinedQuerySet> sets;
        sets.reserve(schedule.window);
        SceneEmbedding embedding;
        std::vector<Vec2> gt;
        {
          NoGradGuard frozen;
          for (std::size_t m = schedule.window; m-- > 0;) {
            const SceneWindow window = window_at(*ep, t0 - static_cast<int>(m), schedule.h_obs,
                                                 schedule.h_pred, 0);
            ModelOutput out = base.predict(window);
            sets.push_back(std::move(out.queries));
            if (m == 0) {
              embedding = std::move(out.embedding);
              gt = future_local(window);
            }
          }
        }
        ForwardCtx ctx{true, cfg.dropout, &dropout_rng};
        MixturePrediction pred;
        if (kind == AggregatorKind::learn_add) {
          pred = agg.refine(add_queries(sets), embedding, ctx).second;
        } else {
          pred = agg.refine_xattn(sets.back(), sets, embedding, ctx).second;
        }
        return total_loss(pred, gt, cfg.lambda, cfg.best_mode).total;
      });
}

}  // namespace streamcast
