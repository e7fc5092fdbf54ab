#include "streamcast/losses.hpp"

#include <algorithm>
#include <cmath>

namespace streamcast {

namespace o = ops;

namespace {

Tensor flat_gt(const MixturePrediction& pred, const std::vector<Vec2>& gt) {
  if (2 * gt.size() != pred.mu.cols()) {
    throw ShapeError("ground truth length does not match the prediction horizon");
  }
  std::vector<double> flat;
  flat.reserve(2 * gt.size());
  for (const Vec2& p : gt) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  return Tensor::from({2 * gt.size()}, std::move(flat));
}

// Per-mode negative log density: sum over steps and dimensions of
// log(2b) + |x - mu| / b. Returns an [N] tensor.
Tensor per_mode_nll(const Tensor& mu, const Tensor& b, const Tensor& gt) {
  Tensor residual = o::abs(o::sub(mu, gt));
  Tensor terms = o::add(o::log(o::scale(b, 2.0)), o::divide(residual, b));
  return o::row_sum(terms);
}

// log sum_n exp(logits_n), shifted by the numeric max. The shift is a
// constant, so gradients are the softmax weights as usual.
Tensor logsumexp(const Tensor& logits) {
  double shift = logits.at(0);
  for (std::size_t i = 1; i < logits.size(); ++i) shift = std::max(shift, logits.at(i));
  return o::add_const(o::log(o::sum(o::exp(o::add_const(logits, -shift)))), shift);
}

}  // namespace

Tensor mixture_nll(const MixturePrediction& pred, const std::vector<Vec2>& gt) {
  const Tensor target = flat_gt(pred, gt);
  Tensor logits = o::sub(o::log(pred.pi), per_mode_nll(pred.mu, pred.b, target));
  return o::neg(logsumexp(logits));
}

std::pair<Tensor, std::size_t> wta_traj_loss(const MixturePrediction& pred,
                                             const std::vector<Vec2>& gt, BestModeRule rule) {
  const Tensor target = flat_gt(pred, gt);
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t n = 0; n < pred.mu.rows(); ++n) {
    double dist = 0.0;
    const std::size_t t_begin = rule == BestModeRule::endpoint ? gt.size() - 1 : 0;
    for (std::size_t t = t_begin; t < gt.size(); ++t) {
      dist += std::hypot(pred.mu.at(n, 2 * t) - gt[t].x, pred.mu.at(n, 2 * t + 1) - gt[t].y);
    }
    if (n == 0 || dist < best_dist) {
      best = n;
      best_dist = dist;
    }
  }
  Tensor mu = o::slice(pred.mu, 0, best, 1);
  Tensor b = o::slice(pred.b, 0, best, 1);
  return {o::sum(per_mode_nll(mu, b, target)), best};
}

Tensor cls_loss(const MixturePrediction& pred, const std::vector<Vec2>& gt) {
  const Tensor target = flat_gt(pred, gt);
  Tensor logits = o::sub(o::log(pred.pi),
                         per_mode_nll(o::detach(pred.mu), o::detach(pred.b), target));
  return o::neg(logsumexp(logits));
}

LossBreakdown total_loss(const MixturePrediction& pred, const std::vector<Vec2>& gt,
                         double lambda, BestModeRule rule) {
  auto [traj, best] = wta_traj_loss(pred, gt, rule);
  Tensor cls = cls_loss(pred, gt);
  Tensor total = o::add(traj, o::scale(cls, lambda));
  return {traj, cls, total, best};
}

}  // namespace streamcast
