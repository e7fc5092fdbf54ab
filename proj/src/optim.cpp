#include "streamcast/optim.hpp"

#include <cmath>

namespace streamcast {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (!t.defined() || !t.requires_grad()) {
    throw ConfigError("param '" + name + "' must be a trainable leaf");
  }
  if (!index_.emplace(name, entries_.size()).second) {
    throw ConfigError("duplicate param name '" + name + "'");
  }
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::make_weight(const std::string& name, Shape shape, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.at(0)));
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(name, Tensor::param(std::move(shape), std::move(v)));
}

Tensor ParamStore::make_zeros(const std::string& name, Shape shape) {
  std::size_t n = shape_size(shape);
  return add(name, Tensor::param(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor ParamStore::make_ones(const std::string& name, Shape shape) {
  std::size_t n = shape_size(shape);
  return add(name, Tensor::param(std::move(shape), std::vector<double>(n, 1.0)));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown param '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::pair<std::string, Tensor>> ParamStore::matching(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& e : entries_) {
    if (e.first.rfind(prefix, 0) == 0) out.push_back(e);
  }
  return out;
}

std::uint64_t ParamStore::values_hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : entries_) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.size() * sizeof(double), h);
  }
  return h;
}

void AdamW::step(const std::vector<std::pair<std::string, Tensor>>& params,
                 const GradientMap& grads, double rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, p] : params) {
    if (!grads.contains(p)) continue;
    Tensor g = grads.grad(p);
    auto& m = m_.try_emplace(p.id(), p.size(), 0.0).first->second;
    auto& v = v_.try_emplace(p.id(), p.size(), 0.0).first->second;
    Tensor tp = p;  // non-const view for leaf_data()
    auto& w = tp.leaf_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.at(i);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= rate * mhat / (std::sqrt(vhat) + cfg_.eps) + rate * cfg_.weight_decay * w[i];
    }
  }
}

double cosine_rate(std::int64_t step, std::int64_t total, double initial, double floor) {
  if (total <= 0) throw ConfigError("cosine_rate: total steps must be positive");
  if (step < 0 || step > total) throw ConfigError("cosine_rate: step outside [0, total]");
  if (floor > initial) throw ConfigError("cosine_rate: floor exceeds initial rate");
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return floor + (initial - floor) * 0.5 * (1.0 + std::cos(frac * 3.14159265358979323846));
}

}  // namespace streamcast
