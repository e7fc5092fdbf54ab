#include "streamcast/layers.hpp"

#include <cmath>

namespace streamcast {

namespace o = ops;

Tensor maybe_dropout(const Tensor& x, const ForwardCtx& ctx) {
  if (!ctx.training || ctx.dropout == 0.0) return x;
  if (!ctx.rng) throw ConfigError("training forward pass requires an rng for dropout");
  return o::dropout(x, ctx.dropout, *ctx.rng, true);
}

Linear::Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng)
    : w_(ps.make_weight(name + ".w", {in, out}, rng)), b_(ps.make_zeros(name + ".b", {out})) {}

Tensor Linear::apply(const Tensor& x) const { return o::add(o::matmul(x, w_), b_); }

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, std::size_t d)
    : gain_(ps.make_ones(name + ".gain", {d})), bias_(ps.make_zeros(name + ".bias", {d})) {}

Tensor LayerNorm::apply(const Tensor& x) const { return o::layer_norm(x, gain_, bias_); }

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& name, std::size_t d,
                                       int heads, Rng& rng)
    : heads_(heads),
      head_dim_(d / heads),
      q_(ps, name + ".q", d, d, rng),
      k_(ps, name + ".k", d, d, rng),
      v_(ps, name + ".v", d, d, rng),
      out_(ps, name + ".o", d, d, rng) {
  if (heads < 1 || d % static_cast<std::size_t>(heads) != 0) {
    throw ConfigError("attention width must be divisible by the head count");
  }
}

Tensor MultiHeadAttention::apply(const Tensor& q_in, const Tensor& kv_in) const {
  if (kv_in.rows() == 0) {
    return Tensor::zeros({q_in.rows(), static_cast<std::size_t>(heads_) * head_dim_});
  }
  const Tensor q = q_.apply(q_in);
  const Tensor k = k_.apply(kv_in);
  const Tensor v = v_.apply(kv_in);
  const double scl = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (int h = 0; h < heads_; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * head_dim_;
    heads.push_back(o::scaled_dot_attention(o::slice(q, 1, off, head_dim_),
                                            o::slice(k, 1, off, head_dim_),
                                            o::slice(v, 1, off, head_dim_), scl));
  }
  return out_.apply(o::concat(heads, 1));
}

Ffn::Ffn(ParamStore& ps, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng)
    : fc1_(ps, name + ".fc1", d, hidden, rng), fc2_(ps, name + ".fc2", hidden, d, rng) {}

Tensor Ffn::apply(const Tensor& x) const { return fc2_.apply(o::relu(fc1_.apply(x))); }

SelfAttentionBlock::SelfAttentionBlock(ParamStore& ps, const std::string& name, std::size_t d,
                                       int heads, std::size_t ffn_hidden, Rng& rng)
    : ln1_(ps, name + ".ln1", d),
      ln2_(ps, name + ".ln2", d),
      attn_(ps, name + ".attn", d, heads, rng),
      ffn_(ps, name + ".ffn", d, ffn_hidden, rng) {}

Tensor SelfAttentionBlock::apply(const Tensor& x, const ForwardCtx& ctx) const {
  const Tensor y = ln1_.apply(x);
  Tensor h = o::add(x, maybe_dropout(attn_.apply(y, y), ctx));
  return o::add(h, maybe_dropout(ffn_.apply(ln2_.apply(h)), ctx));
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& name, std::size_t d,
                                         int heads, std::size_t ffn_hidden, Rng& rng)
    : ln1_(ps, name + ".ln1", d),
      ln2_(ps, name + ".ln2", d),
      attn_(ps, name + ".attn", d, heads, rng),
      ffn_(ps, name + ".ffn", d, ffn_hidden, rng) {}

Tensor CrossAttentionBlock::apply(const Tensor& x, const Tensor& kv, const ForwardCtx& ctx) const {
  Tensor h = o::add(x, maybe_dropout(attn_.apply(ln1_.apply(x), kv), ctx));
  return o::add(h, maybe_dropout(ffn_.apply(ln2_.apply(h)), ctx));
}

}  // namespace streamcast
