#pragma once

#include <string>
#include <vector>

#include "streamcast/optim.hpp"
#include "streamcast/tensor.hpp"

namespace streamcast {

// Per-pass context: training enables dropout, which draws from `rng`.
struct ForwardCtx {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

Tensor maybe_dropout(const Tensor& x, const ForwardCtx& ctx);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor apply(const Tensor& x) const;

 private:
  Tensor w_, b_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, std::size_t d);
  Tensor apply(const Tensor& x) const;

 private:
  Tensor gain_, bias_;
};

// Multi-head scaled dot-product attention; queries and key/values may come
// from different token sets. Empty key/value sets contribute exactly zero.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, std::size_t d, int heads, Rng& rng);
  Tensor apply(const Tensor& q_in, const Tensor& kv_in) const;

 private:
  int heads_ = 1;
  std::size_t head_dim_ = 0;
  Linear q_, k_, v_, out_;
};

class Ffn {
 public:
  Ffn() = default;
  Ffn(ParamStore& ps, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng);
  Tensor apply(const Tensor& x) const;

 private:
  Linear fc1_, fc2_;
};

// Pre-norm residual block: x += attn(LN(x)); x += ffn(LN(x)).
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParamStore& ps, const std::string& name, std::size_t d, int heads,
                     std::size_t ffn_hidden, Rng& rng);
  Tensor apply(const Tensor& x, const ForwardCtx& ctx) const;

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Ffn ffn_;
};

// Pre-norm residual block whose attention reads an external token set.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& name, std::size_t d, int heads,
                      std::size_t ffn_hidden, Rng& rng);
  Tensor apply(const Tensor& x, const Tensor& kv, const ForwardCtx& ctx) const;

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Ffn ffn_;
};

}  // namespace streamcast
