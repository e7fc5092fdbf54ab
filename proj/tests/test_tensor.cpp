#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "streamcast/common.hpp"
#include "streamcast/tensor.hpp"

using namespace streamcast;
namespace o = streamcast::ops;

namespace {

Tensor random_param(Rng& rng, Shape shape, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::param(std::move(shape), std::move(v));
}

// Central finite differences as the independent gradient oracle: perturb each
// leaf component by +-h, rebuild the loss, and compare against backward().
void check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                     double h = 1e-5, double tol = 1e-4) {
  GradientMap grads = backward(loss_fn());
  for (auto& p : params) {
    Tensor g = grads.grad(p);
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
      CAPTURE(fd);
      CAPTURE(got);
      CHECK(std::fabs(got - fd) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("multiplying a variable by itself backpropagates 2x") {
  Tensor x = Tensor::param({1}, {3.0});
  GradientMap g = backward(o::mul(x, x));
  CHECK(g.grad(x).value() == 6.0);
}

TEST_CASE("absolute value gradient is the sign of the argument") {
  auto grad_at = [](double x0) {
    Tensor x = Tensor::param({1}, {x0});
    Tensor loss = o::abs(o::add_const(x, -2.0));
    return backward(loss).grad(x).value();
  };
  CHECK(grad_at(5.0) == 1.0);
  CHECK(grad_at(0.0) == -1.0);
  CHECK(grad_at(2.0) == 0.0);  // subgradient at the kink is defined as zero
}

TEST_CASE("elementwise forward values") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3}, {10, 20, 30});
  Tensor s = Tensor::scalar(2.0);

  CHECK(o::add(a, b).data() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(o::sub(a, s).data() == std::vector<double>{-1, 0, 1, 2, 3, 4});
  CHECK(o::mul(a, b).data() == std::vector<double>{10, 40, 90, 40, 100, 180});
  CHECK(o::divide(a, s).data() == std::vector<double>{0.5, 1, 1.5, 2, 2.5, 3});
  CHECK(o::neg(a).at(0) == -1.0);
  CHECK(o::scale(a, 3.0).at(5) == 18.0);
  CHECK(o::relu(Tensor::from({2}, {-1.0, 2.0})).data() == std::vector<double>{0.0, 2.0});
  CHECK(o::softplus(Tensor::scalar(0.0)).value() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(o::exp(o::log(Tensor::scalar(7.0))).value() == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("matmul, transpose, reductions: hand values") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  CHECK(o::matmul(a, b).data() == std::vector<double>{19, 22, 43, 50});
  CHECK(o::transpose(a).data() == std::vector<double>{1, 3, 2, 4});
  CHECK(o::sum(a).value() == 10.0);
  CHECK(o::mean(a).value() == 2.5);
  CHECK(o::row_sum(a).data() == std::vector<double>{3, 7});
}

TEST_CASE("concat and slice are value-exact inverses") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({1, 2}, {5, 6});
  Tensor rows = o::concat({a, b}, 0);
  CHECK(rows.shape() == Shape{3, 2});
  CHECK(rows.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(o::slice(rows, 0, 2, 1).data() == std::vector<double>{5, 6});

  Tensor c = Tensor::from({2, 1}, {9, 10});
  Tensor cols = o::concat({a, c}, 1);
  CHECK(cols.shape() == Shape{2, 3});
  CHECK(cols.data() == std::vector<double>{1, 2, 9, 3, 4, 10});
  CHECK(o::slice(cols, 1, 2, 1).data() == std::vector<double>{9, 10});

  CHECK(o::reshape(a, {4}).data() == a.data());
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(21);
  Tensor x = random_param(rng, {5, 7}, -4.0, 4.0);
  Tensor y = o::softmax_rows(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += y.at(r, j);
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("finite differences validate every elementwise gradient") {
  Rng rng(22);
  Tensor a = random_param(rng, {2, 3});
  Tensor b = random_param(rng, {3});
  Tensor c = random_param(rng, {2, 3}, 0.5, 2.0);  // positive: div/log-safe
  Tensor s = Tensor::param({1}, {rng.uniform(0.5, 1.5)});
  Tensor w = random_param(rng, {2, 3});

  check_gradients([&] { return o::sum(o::mul(w, o::add(a, b))); }, {a, b, w});
  check_gradients([&] { return o::sum(o::mul(w, o::sub(a, b))); }, {a, b});
  check_gradients([&] { return o::sum(o::mul(a, b)); }, {a, b});
  check_gradients([&] { return o::sum(o::mul(a, s)); }, {a, s});
  check_gradients([&] { return o::sum(o::divide(a, c)); }, {a, c});
  check_gradients([&] { return o::sum(o::divide(a, s)); }, {a, s});
  check_gradients([&] { return o::sum(o::neg(o::scale(a, 0.7))); }, {a});
  check_gradients([&] { return o::sum(o::exp(o::scale(a, 0.5))); }, {a});
  check_gradients([&] { return o::sum(o::log(c)); }, {c});
  check_gradients([&] { return o::sum(o::softplus(a)); }, {a});
  check_gradients([&] { return o::mean(o::mul(a, a)); }, {a});
}

TEST_CASE("finite differences validate abs and relu away from their kinks") {
  Rng rng(23);
  std::vector<double> v(6);
  for (double& x : v) {
    x = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  Tensor a = Tensor::param({6}, std::move(v));
  check_gradients([&] { return o::sum(o::abs(a)); }, {a});
  check_gradients([&] { return o::sum(o::relu(a)); }, {a});
}

TEST_CASE("finite differences validate matrix and structural ops") {
  Rng rng(24);
  Tensor a = random_param(rng, {3, 4});
  Tensor b = random_param(rng, {4, 2});
  Tensor w32 = random_param(rng, {3, 2});
  Tensor w43 = random_param(rng, {4, 3});
  Tensor w3 = random_param(rng, {3});

  check_gradients([&] { return o::sum(o::mul(w32, o::matmul(a, b))); }, {a, b});
  check_gradients([&] { return o::sum(o::mul(w43, o::transpose(a))); }, {a});
  check_gradients([&] { return o::sum(o::mul(w32, o::softmax_rows(o::matmul(a, b)))); }, {a, b});
  check_gradients([&] { return o::sum(o::mul(w43, o::reshape(a, {4, 3}))); }, {a});
  check_gradients([&] { return o::sum(o::mul(w3, o::row_sum(a))); }, {a});
  check_gradients([&] { return o::sum(o::slice(a, 0, 1, 2)); }, {a});
  check_gradients([&] { return o::sum(o::slice(a, 1, 1, 3)); }, {a});

  Tensor c = random_param(rng, {2, 4});
  Tensor w54 = random_param(rng, {5, 4});
  check_gradients([&] { return o::sum(o::mul(w54, o::concat({a, c}, 0))); }, {a, c});
  Tensor d = random_param(rng, {3, 2});
  Tensor w36 = random_param(rng, {3, 6});
  check_gradients([&] { return o::sum(o::mul(w36, o::concat({a, d}, 1))); }, {a, d});
}

TEST_CASE("finite differences validate layer_norm") {
  Rng rng(25);
  Tensor x = random_param(rng, {3, 5});
  Tensor gain = random_param(rng, {5}, 0.5, 1.5);
  Tensor bias = random_param(rng, {5});
  Tensor w = random_param(rng, {3, 5});
  check_gradients([&] { return o::sum(o::mul(w, o::layer_norm(x, gain, bias))); },
                  {x, gain, bias});
}

TEST_CASE("finite differences validate scaled dot attention") {
  Rng rng(26);
  Tensor q = random_param(rng, {2, 4});
  Tensor k = random_param(rng, {5, 4});
  Tensor v = random_param(rng, {5, 3});
  Tensor w = random_param(rng, {2, 3});
  check_gradients(
      [&] { return o::sum(o::mul(w, o::scaled_dot_attention(q, k, v, 0.5))); }, {q, k, v});
}

TEST_CASE("finite differences validate a 3-layer perceptron end to end") {
  Rng rng(27);
  Tensor x = Tensor::from({2, 5}, [&] {
    std::vector<double> v(10);
    for (double& e : v) e = rng.uniform(-1.0, 1.0);
    return v;
  }());
  Tensor w1 = random_param(rng, {5, 8}, -0.5, 0.5);
  Tensor b1 = random_param(rng, {8}, -0.1, 0.1);
  Tensor w2 = random_param(rng, {8, 8}, -0.5, 0.5);
  Tensor b2 = random_param(rng, {8}, -0.1, 0.1);
  Tensor w3 = random_param(rng, {8, 3}, -0.5, 0.5);
  Tensor b3 = random_param(rng, {3}, -0.1, 0.1);

  auto loss_fn = [&] {
    Tensor h1 = o::softplus(o::add(o::matmul(x, w1), b1));
    Tensor h2 = o::softplus(o::add(o::matmul(h1, w2), b2));
    Tensor logits = o::add(o::matmul(h2, w3), b3);
    Tensor p = o::softmax_rows(logits);
    return o::neg(o::mean(o::log(o::slice(p, 1, 0, 1))));
  };
  check_gradients(loss_fn, {w1, b1, w2, b2, w3, b3});
}

TEST_CASE("gradient reaches only the sliced rows") {
  Tensor x = Tensor::param({3, 2}, {1, 2, 3, 4, 5, 6});
  GradientMap g = backward(o::sum(o::slice(x, 0, 1, 1)));
  Tensor gx = g.grad(x);
  CHECK(gx.data() == std::vector<double>{0, 0, 1, 1, 0, 0});
}

TEST_CASE("detach stops gradient flow") {
  Tensor a = Tensor::param({2}, {3.0, 4.0});
  Tensor loss = o::sum(o::mul(o::detach(a), a));
  GradientMap g = backward(loss);
  // d/da sum(const * a) = const, not 2a.
  CHECK(g.grad(a).data() == std::vector<double>{3.0, 4.0});
}

TEST_CASE("NoGradGuard produces grad-free results") {
  Tensor a = Tensor::param({2}, {1.0, 2.0});
  Tensor loss;
  {
    NoGradGuard ng;
    CHECK_FALSE(grad_enabled());
    loss = o::sum(o::mul(a, a));
    CHECK_FALSE(loss.requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(backward(loss).size() == 0);
}

TEST_CASE("dropout masks deterministically and scales the survivors") {
  Tensor a = Tensor::param({1000}, std::vector<double>(1000, 1.0));
  Rng rng1(31), rng2(31);
  Tensor d1 = o::dropout(a, 0.25, rng1, true);
  Tensor d2 = o::dropout(a, 0.25, rng2, true);
  CHECK(d1.data() == d2.data());  // same seed, same mask

  std::size_t kept = 0;
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const double v = d1.at(i);
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75).epsilon(1e-15)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 650);
  CHECK(kept < 850);

  // Backward multiplies by the same mask.
  GradientMap g = backward(o::sum(d1));
  CHECK(g.grad(a).data() == d1.data());  // input was all ones

  // Identity paths hand back the input tensor untouched.
  Rng rng3(31);
  CHECK(o::dropout(a, 0.25, rng3, false).id() == a.id());
  CHECK(o::dropout(a, 0.0, rng3, true).id() == a.id());
}

TEST_CASE("attention with no keys yields zeros and no gradient") {
  Tensor q = Tensor::param({2, 4}, std::vector<double>(8, 0.5));
  Tensor k = Tensor::from({0, 4}, {});
  Tensor v = Tensor::from({0, 3}, {});
  Tensor out = o::scaled_dot_attention(q, k, v, 0.5);
  CHECK(out.shape() == Shape{2, 3});
  CHECK(out.data() == std::vector<double>(6, 0.0));
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Rng rng(33);
    Tensor x = random_param(rng, {4, 6});
    Tensor w = random_param(rng, {6, 6});
    Tensor gain = Tensor::param({6}, std::vector<double>(6, 1.0));
    Tensor bias = Tensor::param({6}, std::vector<double>(6, 0.0));
    Tensor h = o::layer_norm(o::matmul(x, w), gain, bias);
    Tensor loss = o::mean(o::mul(h, h));
    GradientMap g = backward(loss);
    std::vector<double> flat = {loss.value()};
    for (const Tensor* t : {&x, &w, &gain, &bias}) {
      const auto& gv = g.grad(*t).data();
      flat.insert(flat.end(), gv.begin(), gv.end());
    }
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("backward can run twice without disturbing the graph") {
  Rng rng(34);
  Tensor a = random_param(rng, {3, 3});
  Tensor loss = o::sum(o::mul(o::softmax_rows(a), a));
  GradientMap g1 = backward(loss);
  GradientMap g2 = backward(loss);
  CHECK(g1.grad(a).data() == g2.grad(a).data());
}

TEST_CASE("gradient accumulation averages across a batch") {
  Tensor p = Tensor::param({2}, {1.0, 2.0});
  GradAccumulator acc;
  acc.accumulate(backward(o::sum(o::mul(p, Tensor::from({2}, {1.0, 0.0})))));
  acc.accumulate(backward(o::sum(o::mul(p, Tensor::from({2}, {3.0, 4.0})))));
  acc.scale(0.5);
  CHECK(acc.grad(p).data() == std::vector<double>{2.0, 2.0});

  Tensor untouched = Tensor::param({2}, {0.0, 0.0});
  CHECK(acc.grad(untouched).data() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("shape and numeric violations throw") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS((void)o::matmul(a, b), ShapeError);
  CHECK_THROWS_AS((void)o::add(a, b), ShapeError);
  CHECK_THROWS_AS((void)a.value(), ShapeError);
  CHECK_THROWS_AS((void)backward(a), ShapeError);
  CHECK_THROWS_AS((void)o::slice(a, 0, 1, 2), ShapeError);
  CHECK_THROWS_AS((void)o::reshape(a, {7}), ShapeError);
  CHECK_THROWS_AS((void)o::concat({}, 0), ShapeError);
  CHECK_THROWS_AS((void)o::layer_norm(a, Tensor::from({2}, {1, 1}), Tensor::from({3}, {0, 0, 0})),
                  ShapeError);

  CHECK_THROWS_AS((void)o::log(Tensor::scalar(-1.0)), NumericsError);
  CHECK_THROWS_AS((void)o::divide(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericsError);

  Rng rng(35);
  CHECK_THROWS_AS((void)o::dropout(a, 1.0, rng, true), ConfigError);

  Tensor p = Tensor::param({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor derived = o::add(p, Tensor::scalar(1.0));
  CHECK_THROWS_AS((void)derived.leaf_data(), ShapeError);
}
