#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "streamcast/tensor.hpp"

namespace streamcast {

// Named trainable parameters in registration order. Modules register their
// leaves here at construction; the order fixes both the optimizer update
// sequence and the checkpoint layout.
class ParamStore {
 public:
  // Registers an existing parameter tensor under `name` (must be unique).
  Tensor add(const std::string& name, Tensor t);

  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], the usual dense-layer
  // scheme; fan_in defaults to the first shape dimension.
  Tensor make_weight(const std::string& name, Shape shape, Rng& rng);
  Tensor make_zeros(const std::string& name, Shape shape);
  Tensor make_ones(const std::string& name, Shape shape);

  Tensor get(const std::string& name) const;  // throws ConfigError if missing
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  // Entries whose name starts with `prefix` (used to freeze or fine-tune a
  // subtree of the model).
  std::vector<std::pair<std::string, Tensor>> matching(const std::string& prefix) const;

  // FNV-1a over the raw bytes of all values in registration order; detects
  // any drift in supposedly frozen weights.
  std::uint64_t values_hash() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   p <- p - rate * mhat / (sqrt(vhat) + eps) - rate * wd * p
// Parameters absent from the gradient map are left untouched.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<std::pair<std::string, Tensor>>& params, const GradientMap& grads,
            double rate);
  void step(ParamStore& params, const GradientMap& grads, double rate) {
    step(params.entries(), grads, rate);
  }

  std::int64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::uint64_t, std::vector<double>> m_, v_;
};

// Cosine annealing from `initial` at step 0 down to `floor` at step `total`.
double cosine_rate(std::int64_t step, std::int64_t total, double initial, double floor);

}  // namespace streamcast
