#pragma once

#include <utility>

#include "streamcast/decoder.hpp"
#include "streamcast/encoder.hpp"

namespace streamcast {

struct ModelHyper {
  EncoderHyper encoder;
  DecoderHyper decoder;
};

// Everything one forward pass produces; the embedding is kept so aggregation
// stages can re-attend the same scene.
struct ModelOutput {
  SceneEmbedding embedding;
  RefinedQuerySet queries;
  MixturePrediction prediction;
};

// Base model: encoder and trajectory decoder over one parameter store.
class Model {
 public:
  Model(const ModelHyper& hp, ParamStore& ps, Rng& rng)
      : hp_(validated(hp)), encoder_(hp_.encoder, ps, rng), decoder_(hp_.decoder, ps, rng) {}

  ModelOutput predict(const SceneWindow& window, const ForwardCtx& ctx = {}) const {
    SceneEmbedding embedding = encoder_.encode(window, ctx);
    auto [queries, prediction] = decoder_.decode(embedding, ctx);
    return {std::move(embedding), std::move(queries), std::move(prediction)};
  }

  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  const ModelHyper& hyper() const { return hp_; }

 private:
  static ModelHyper validated(const ModelHyper& hp) {
    if (hp.decoder.width != hp.encoder.width) {
      throw ConfigError("encoder and decoder must agree on the model width");
    }
    return hp;
  }

  ModelHyper hp_;
  Encoder encoder_;
  Decoder decoder_;
};

}  // namespace streamcast
