#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "streamcast/losses.hpp"

using namespace streamcast;
namespace o = streamcast::ops;

namespace {

Tensor pi_from_logits(const Tensor& logits) {
  const std::size_t n = logits.size();
  return o::reshape(o::softmax_rows(o::reshape(logits, {1, n})), {n});
}

struct PredParams {
  Tensor mu_p, b_p, logit_p;
  MixturePrediction pred;
};

PredParams make_pred(std::vector<double> mu, std::vector<double> b, std::vector<double> logits,
                     std::size_t modes, std::size_t horizon) {
  PredParams out;
  out.mu_p = Tensor::param({modes, 2 * horizon}, std::move(mu));
  out.b_p = Tensor::param({modes, 2 * horizon}, std::move(b));
  out.logit_p = Tensor::param({modes}, std::move(logits));
  out.pred = {pi_from_logits(out.logit_p), out.mu_p, out.b_p, 0, Pose{}};
  return out;
}

MixturePrediction const_pred(std::vector<double> pi, std::vector<double> mu,
                             std::vector<double> b, std::size_t modes, std::size_t horizon) {
  return {Tensor::from({modes}, std::move(pi)),
          Tensor::from({modes, 2 * horizon}, std::move(mu)),
          Tensor::from({modes, 2 * horizon}, std::move(b)), 0, Pose{}};
}

// Direct-summation oracle for Eq. 1: no log-space tricks.
double naive_mixture_nll(const MixturePrediction& pred, const std::vector<Vec2>& gt) {
  double f = 0.0;
  for (std::size_t n = 0; n < pred.mu.rows(); ++n) {
    double density = pred.pi.at(n);
    for (std::size_t t = 0; t < gt.size(); ++t) {
      const double g[2] = {gt[t].x, gt[t].y};
      for (int d = 0; d < 2; ++d) {
        const double b = pred.b.at(n, 2 * t + d);
        density *= std::exp(-std::fabs(g[d] - pred.mu.at(n, 2 * t + d)) / b) / (2.0 * b);
      }
    }
    f += density;
  }
  return -std::log(f);
}

}  // namespace

TEST_CASE("zero residual with unit scale costs log 2 per dimension") {
  MixturePrediction pred = const_pred({1.0}, {0.4, -1.2}, {1.0, 1.0}, 1, 1);
  const std::vector<Vec2> gt = {{0.4, -1.2}};
  CHECK(mixture_nll(pred, gt).value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("a mixture of identical modes collapses to the single-mode value") {
  const std::vector<double> mode = {0.5, -0.3, 1.0, 2.0};
  std::vector<double> two_modes = mode;
  two_modes.insert(two_modes.end(), mode.begin(), mode.end());
  MixturePrediction one = const_pred({1.0}, mode, {0.8, 1.1, 0.9, 1.3}, 1, 2);
  MixturePrediction two =
      const_pred({0.5, 0.5}, two_modes, {0.8, 1.1, 0.9, 1.3, 0.8, 1.1, 0.9, 1.3}, 2, 2);
  const std::vector<Vec2> gt = {{0.1, 0.2}, {1.5, 1.0}};
  CHECK(std::fabs(mixture_nll(one, gt).value() - mixture_nll(two, gt).value()) <= 1e-12);
}

TEST_CASE("log-space evaluation agrees with direct summation") {
  // The fixed two-mode instance...
  MixturePrediction fixed =
      const_pred({0.9, 0.1}, {0.0, 0.0, 10.0, 10.0}, {1.0, 1.0, 1.0, 1.0}, 2, 1);
  const std::vector<Vec2> origin = {{0.0, 0.0}};
  CHECK(std::fabs(mixture_nll(fixed, origin).value() - naive_mixture_nll(fixed, origin)) <=
        1e-12);

  // ...and random instances.
  Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t modes = 3, horizon = 2;
    std::vector<double> mu(modes * 2 * horizon), b(mu.size()), pi(modes);
    for (double& v : mu) v = rng.uniform(-2.0, 2.0);
    for (double& v : b) v = rng.uniform(0.5, 2.0);
    double total = 0.0;
    for (double& v : pi) total += (v = rng.uniform(0.1, 1.0));
    for (double& v : pi) v /= total;
    MixturePrediction pred = const_pred(pi, mu, b, modes, horizon);
    std::vector<Vec2> gt = {{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)},
                            {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)}};
    const double got = mixture_nll(pred, gt).value();
    const double want = naive_mixture_nll(pred, gt);
    CAPTURE(trial);
    CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
  }
}

TEST_CASE("the laplace density integrates to one") {
  NoGradGuard quiet;
  MixturePrediction single = const_pred({1.0}, {0.3, -0.2}, {1.0, 0.7}, 1, 1);
  MixturePrediction mixed =
      const_pred({0.3, 0.7}, {0.3, -0.2, -1.0, 0.5}, {1.0, 0.7, 0.8, 1.2}, 2, 1);
  const double step = 0.1;
  double mass_single = 0.0, mass_mixed = 0.0;
  for (double x = -8.0 + step / 2; x < 8.0; x += step) {
    for (double y = -8.0 + step / 2; y < 8.0; y += step) {
      const std::vector<Vec2> pt = {{x, y}};
      mass_single += std::exp(-mixture_nll(single, pt).value()) * step * step;
      mass_mixed += std::exp(-mixture_nll(mixed, pt).value()) * step * step;
    }
  }
  CHECK(mass_single == doctest::Approx(1.0).epsilon(0.01));
  CHECK(mass_mixed == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("the best mode wins the regression loss") {
  // Mode 1 sits exactly on the ground truth; the others are 10 m off.
  const std::vector<Vec2> gt = {{1.0, 2.0}, {2.0, 3.0}};
  std::vector<double> mu = {11.0, 12.0, 12.0, 13.0,   // mode 0
                            1.0, 2.0, 2.0, 3.0,       // mode 1
                            11.0, 12.0, 12.0, 13.0};  // mode 2
  std::vector<double> b = {1.0, 1.0, 1.0, 1.0, 0.5, 2.0, 1.0, 0.25, 1.0, 1.0, 1.0, 1.0};
  MixturePrediction pred = const_pred({0.2, 0.3, 0.5}, mu, b, 3, 2);

  auto [loss, best] = wta_traj_loss(pred, gt);
  CHECK(best == 1);
  const double want =
      std::log(2 * 0.5) + std::log(2 * 2.0) + std::log(2 * 1.0) + std::log(2 * 0.25);
  CHECK(loss.value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("the endpoint rule judges winners by the final step alone") {
  const std::vector<Vec2> gt = {{0.0, 0.0}, {10.0, 0.0}};
  // Mode 0 tracks gt closely but ends 1 m short; mode 1 starts 4 m off but
  // lands exactly on the endpoint.
  std::vector<double> mu = {0.0, 0.0, 9.0, 0.0, 4.0, 0.0, 10.0, 0.0};
  MixturePrediction pred =
      const_pred({0.5, 0.5}, mu, std::vector<double>(mu.size(), 1.0), 2, 2);
  CHECK(wta_traj_loss(pred, gt, BestModeRule::summed_l2).second == 0);
  CHECK(wta_traj_loss(pred, gt, BestModeRule::endpoint).second == 1);
}

TEST_CASE("ties break to the lowest mode index") {
  std::vector<double> mu(3 * 2, 1.0);
  MixturePrediction pred = const_pred({0.1, 0.2, 0.7}, mu, std::vector<double>(mu.size(), 1.0),
                                      3, 1);
  auto [loss, best] = wta_traj_loss(pred, {{0.0, 0.0}});
  (void)loss;
  CHECK(best == 0);
}

TEST_CASE("only the best mode receives regression gradients") {
  Rng rng(92);
  std::vector<double> mu(3 * 4), b(mu.size()), logits = {0.2, -0.1, 0.4};
  for (double& v : mu) v = rng.uniform(-2.0, 2.0);
  for (double& v : b) v = rng.uniform(0.5, 2.0);
  PredParams pp = make_pred(mu, b, logits, 3, 2);
  const std::vector<Vec2> gt = {{0.3, 0.7}, {-0.4, 0.9}};

  auto [loss, best] = wta_traj_loss(pp.pred, gt);
  GradientMap grads = backward(loss);
  Tensor gmu = grads.grad(pp.mu_p);
  Tensor gb = grads.grad(pp.b_p);
  double best_row_mag = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (n == best) {
        best_row_mag += std::fabs(gmu.at(n, c));
      } else {
        CHECK(gmu.at(n, c) == 0.0);
        CHECK(gb.at(n, c) == 0.0);
      }
    }
  }
  CHECK(best_row_mag > 0.0);
  Tensor glog = grads.grad(pp.logit_p);  // the mixing logits never enter the WTA loss
  for (std::size_t i = 0; i < glog.size(); ++i) CHECK(glog.at(i) == 0.0);
}

TEST_CASE("the classification loss moves only the mixing coefficients") {
  Rng rng(93);
  std::vector<double> mu(2 * 2), b(mu.size()), logits = {0.3, -0.3};
  for (double& v : mu) v = rng.uniform(-1.0, 1.0);
  for (double& v : b) v = rng.uniform(0.5, 2.0);
  PredParams pp = make_pred(mu, b, logits, 2, 1);
  const std::vector<Vec2> gt = {{0.25, -0.5}};

  Tensor cls = cls_loss(pp.pred, gt);
  CHECK(cls.value() == mixture_nll(pp.pred, gt).value());  // same forward formula

  GradientMap grads = backward(cls);
  Tensor gmu = grads.grad(pp.mu_p);
  Tensor gb = grads.grad(pp.b_p);
  for (std::size_t i = 0; i < gmu.size(); ++i) {
    CHECK(gmu.at(i) == 0.0);
    CHECK(gb.at(i) == 0.0);
  }
  Tensor glog = grads.grad(pp.logit_p);
  CHECK((std::fabs(glog.at(0)) + std::fabs(glog.at(1))) > 0.0);
}

TEST_CASE("shifting weight toward the best mode lowers the classification loss") {
  const std::vector<Vec2> gt = {{0.0, 0.0}};
  const std::vector<double> mu = {0.0, 0.0, 5.0, 5.0};
  const std::vector<double> b(4, 1.0);
  MixturePrediction worse = const_pred({0.6, 0.4}, mu, b, 2, 1);
  MixturePrediction better = const_pred({0.7, 0.3}, mu, b, 2, 1);
  CHECK(cls_loss(better, gt).value() < cls_loss(worse, gt).value());
}

TEST_CASE("the total is exactly the weighted sum of its parts") {
  Rng rng(94);
  std::vector<double> mu(3 * 4), b(mu.size()), logits = {0.0, 0.5, -0.5};
  for (double& v : mu) v = rng.uniform(-2.0, 2.0);
  for (double& v : b) v = rng.uniform(0.5, 2.0);
  PredParams pp = make_pred(mu, b, logits, 3, 2);
  const std::vector<Vec2> gt = {{0.3, 0.7}, {-0.4, 0.9}};

  for (double lambda : {1.0, 0.5}) {
    LossBreakdown bd = total_loss(pp.pred, gt, lambda);
    CHECK(bd.total.value() == bd.traj.value() + lambda * bd.cls.value());
    CHECK(bd.best_mode == wta_traj_loss(pp.pred, gt).second);
  }
}

TEST_CASE("a zero classification weight silences mixing-coefficient gradients") {
  Rng rng(95);
  std::vector<double> mu(2 * 2), b(mu.size()), logits = {0.4, -0.4};
  for (double& v : mu) v = rng.uniform(-1.0, 1.0);
  for (double& v : b) v = rng.uniform(0.5, 2.0);
  PredParams pp = make_pred(mu, b, logits, 2, 1);

  LossBreakdown bd = total_loss(pp.pred, {{0.3, -0.1}}, 0.0);
  GradientMap grads = backward(bd.total);
  Tensor glog = grads.grad(pp.logit_p);
  CHECK(glog.at(0) == 0.0);
  CHECK(glog.at(1) == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  std::vector<double> mu = {0.8, -0.6, 1.2, 0.4, -0.9, 0.3, 0.5, -1.1};
  std::vector<double> b = {0.9, 1.4, 0.7, 1.1, 1.3, 0.6, 1.0, 0.8};
  std::vector<double> logits = {0.3, -0.2};
  const std::vector<Vec2> gt = {{0.1, 0.2}, {-0.3, 0.6}};  // residuals well off the kink

  PredParams pp = make_pred(mu, b, logits, 2, 2);
  auto fresh_pred = [&] {
    return MixturePrediction{pi_from_logits(pp.logit_p), pp.mu_p, pp.b_p, 0, Pose{}};
  };

  // The classification term deliberately ignores mu/b perturbations via
  // stop-gradient, so finite differences can only be checked against losses
  // whose value dependence is entirely differentiable: the full mixture NLL
  // for every parameter, the WTA loss for mu/b, the total for the logits.
  auto check_fd = [&](auto&& loss_fn, Tensor& p) {
    GradientMap grads = backward(loss_fn());
    Tensor g = grads.grad(p);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.leaf_data()[i];
      p.leaf_data()[i] = saved + h;
      const double up = loss_fn().value();
      p.leaf_data()[i] = saved - h;
      const double down = loss_fn().value();
      p.leaf_data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double got = g.at(i);
      const double denom = std::max({std::fabs(fd), std::fabs(got), 1e-6});
      CAPTURE(i);
      CHECK(std::fabs(got - fd) / denom < 1e-4);
    }
  };

  auto nll = [&] { return mixture_nll(fresh_pred(), gt); };
  check_fd(nll, pp.mu_p);
  check_fd(nll, pp.b_p);
  check_fd(nll, pp.logit_p);

  auto wta = [&] { return wta_traj_loss(fresh_pred(), gt).first; };
  check_fd(wta, pp.mu_p);
  check_fd(wta, pp.b_p);

  auto total = [&] { return total_loss(fresh_pred(), gt, 0.7).total; };
  check_fd(total, pp.logit_p);
}

TEST_CASE("mismatched horizons are rejected") {
  MixturePrediction pred = const_pred({1.0}, {0.0, 0.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}, 1, 2);
  CHECK_THROWS_AS((void)mixture_nll(pred, {{0.0, 0.0}}), ShapeError);
  CHECK_THROWS_AS((void)wta_traj_loss(pred, {{0.0, 0.0}}), ShapeError);
}
