#include "streamcast/decoder.hpp"

namespace streamcast {

namespace o = ops;

std::vector<std::vector<Vec2>> to_world(const MixturePrediction& pred) {
  std::vector<std::vector<Vec2>> out(pred.mu.rows());
  for (std::size_t n = 0; n < pred.mu.rows(); ++n) {
    out[n].reserve(pred.mu.cols() / 2);
    for (std::size_t t = 0; t < pred.mu.cols() / 2; ++t) {
      out[n].push_back(to_world(pred.anchor, mode_point(pred, n, t)));
    }
  }
  return out;
}

std::vector<Vec2> to_agent(const std::vector<Vec2>& world_points, const Pose& anchor) {
  std::vector<Vec2> out;
  out.reserve(world_points.size());
  for (const Vec2& p : world_points) out.push_back(to_agent(anchor, p));
  return out;
}

Decoder::Decoder(const DecoderHyper& hp, ParamStore& ps, Rng& rng, const std::string& prefix)
    : hp_(hp) {
  if (hp.width % static_cast<std::size_t>(hp.heads) != 0) {
    throw ConfigError("decoder width must be divisible by the head count");
  }
  if (hp.modes < 1 || hp.horizon < 1) {
    throw ConfigError("decoder needs at least one mode and one predicted frame");
  }
  const std::size_t d = hp.width;
  const std::size_t ffn_hidden = 2 * d;
  queries_.queries = ps.make_weight(prefix + ".queries", {hp.modes, d}, rng);
  for (int l = 0; l < hp.layers; ++l) {
    self_.emplace_back(ps, prefix + ".self" + std::to_string(l), d, hp.heads, ffn_hidden, rng);
    cross_.emplace_back(ps, prefix + ".cross" + std::to_string(l), d, hp.heads, ffn_hidden, rng);
  }
  pi_head_ = Linear(ps, prefix + ".pi", d, 1, rng);
  mu_head_ = Linear(ps, prefix + ".mu", d, 2 * hp.horizon, rng);
  b_head_ = Linear(ps, prefix + ".b", d, 2 * hp.horizon, rng);
}

Tensor Decoder::refine(const SceneEmbedding& embedding, const Tensor& queries,
                       const ForwardCtx& ctx) const {
  if (embedding.agents.cols() != hp_.width || queries.cols() != hp_.width) {
    throw ShapeError("decoder width does not match the scene embedding");
  }
  const Tensor kv = embedding.map_tokens.rows() == 0
                        ? embedding.agents
                        : o::concat({embedding.agents, embedding.map_tokens}, 0);
  Tensor x = queries;
  for (int l = 0; l < hp_.layers; ++l) {
    x = self_[static_cast<std::size_t>(l)].apply(x, ctx);
    x = cross_[static_cast<std::size_t>(l)].apply(x, kv, ctx);
  }
  return x;
}

MixturePrediction Decoder::heads(const Tensor& refined, int t0, const Pose& anchor) const {
  Tensor pi = o::reshape(o::softmax_rows(o::transpose(pi_head_.apply(refined))), {hp_.modes});
  Tensor mu = mu_head_.apply(refined);
  Tensor b = o::add_const(o::softplus(b_head_.apply(refined)), kScaleFloor);
  return {pi, mu, b, t0, anchor};
}

std::pair<RefinedQuerySet, MixturePrediction> Decoder::decode(const SceneEmbedding& embedding,
                                                              const ForwardCtx& ctx) const {
  Tensor refined = refine(embedding, queries_.queries, ctx);
  return {{refined, embedding.t0}, heads(refined, embedding.t0, embedding.anchor)};
}

}  // namespace streamcast
