#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "streamcast/decoder.hpp"

namespace streamcast {

struct LossBreakdown {
  Tensor traj;            // winner-take-all single-mode NLL
  Tensor cls;             // mixture NLL with locations and scales held constant
  Tensor total;           // traj + lambda * cls
  std::size_t best_mode;  // the mode traj was charged to
};

// Negative log-likelihood of the ground truth under the full Laplace mixture,
// evaluated in log space with a max shift. gt holds T' agent-centric points.
Tensor mixture_nll(const MixturePrediction& pred, const std::vector<Vec2>& gt);

// How the winner of the winner-take-all loss is picked: summed per-step
// Euclidean distance over the horizon, or the final-step distance alone.
enum class BestModeRule { summed_l2, endpoint };

// Winner-take-all regression loss: the best mode minimizes the BestModeRule
// distance to gt (ties break to the lowest index); the loss is that single
// mode's Laplace NLL, so gradients reach only its locations and scales.
std::pair<Tensor, std::size_t> wta_traj_loss(const MixturePrediction& pred,
                                             const std::vector<Vec2>& gt,
                                             BestModeRule rule = BestModeRule::summed_l2);

// Mixture NLL with mu and b detached: the same forward value as mixture_nll,
// but gradients flow only into the mixing coefficients.
Tensor cls_loss(const MixturePrediction& pred, const std::vector<Vec2>& gt);

LossBreakdown total_loss(const MixturePrediction& pred, const std::vector<Vec2>& gt,
                         double lambda, BestModeRule rule = BestModeRule::summed_l2);

}  // namespace streamcast
