#include "streamcast/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace streamcast {

namespace o = ops;

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.anchor_t != b.anchor_t) return a.anchor_t > b.anchor_t;
  if (a.mode != b.mode) return a.mode < b.mode;
  return a.model_id < b.model_id;
}

namespace {

void validate_pool(const CandidateSet& cands, std::size_t n, const char* op) {
  if (cands.size() < n) {
    throw DataError(std::string(op) + ": need at least " + std::to_string(n) +
                    " candidates, have " + std::to_string(cands.size()));
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const Candidate& c = cands[i];
    if (c.trajectory.empty() || c.trajectory.size() != cands[0].trajectory.size()) {
      throw DataError(std::string(op) + ": candidate " + std::to_string(i) +
                      " trajectory length differs");
    }
    if (!(c.score > 0.0) || !std::isfinite(c.score)) {
      throw DataError(std::string(op) + ": candidate " + std::to_string(i) +
                      " score must be finite and positive");
    }
  }
}

CandidateSet sorted_by_priority(CandidateSet cands) {
  std::sort(cands.begin(), cands.end(), candidate_before);
  return cands;
}

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

CandidateSet topk(const CandidateSet& cands, std::size_t n) {
  validate_pool(cands, n, "topk");
  CandidateSet ordered = sorted_by_priority(cands);
  ordered.resize(n);
  return ordered;
}

CandidateSet nms(const CandidateSet& cands, std::size_t n, double radius) {
  validate_pool(cands, n, "nms");
  if (radius < 0.0) throw ConfigError("nms: radius must be non-negative");

  const CandidateSet ordered = sorted_by_priority(cands);
  std::vector<bool> suppressed(ordered.size(), false);
  std::vector<bool> taken(ordered.size(), false);
  CandidateSet out;
  out.reserve(n);
  for (std::size_t i = 0; i < ordered.size() && out.size() < n; ++i) {
    if (suppressed[i]) continue;
    out.push_back(ordered[i]);
    taken[i] = true;
    for (std::size_t j = 0; j < ordered.size(); ++j) {
      if (j == i || taken[j]) continue;
      if (distance(ordered[j].trajectory.back(), ordered[i].trajectory.back()) < radius) {
        suppressed[j] = true;
      }
    }
  }
  for (std::size_t i = 0; i < ordered.size() && out.size() < n; ++i) {
    if (!taken[i]) out.push_back(ordered[i]);
  }
  return out;
}

CandidateSet kmeans_agg(const CandidateSet& cands, std::size_t n, std::uint64_t seed) {
  validate_pool(cands, n, "kmeans_agg");
  if (n == 0) return {};

  std::vector<Vec2> pts;
  pts.reserve(cands.size());
  for (const Candidate& c : cands) pts.push_back(c.trajectory.back());

  // k-means++ seeding: subsequent centroids are drawn proportionally to the
  // squared distance from the nearest already-chosen centroid.
  Rng rng(seed);
  std::vector<Vec2> centroids;
  centroids.reserve(n);
  centroids.push_back(pts[rng.below(pts.size())]);
  std::vector<double> d2(pts.size());
  while (centroids.size() < n) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& c : centroids) {
        const double dx = pts[i].x - c.x, dy = pts[i].y - c.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      d2[i] = best;
      total += best;
    }
    if (total == 0.0) {
      centroids.push_back(pts[rng.below(pts.size())]);
      continue;
    }
    const double r = rng.uniform(0.0, total);
    double acc = 0.0;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      acc += d2[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    centroids.push_back(pts[pick]);
  }

  std::vector<std::size_t> assign(pts.size(), 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        const double d = distance(pts[i], centroids[k]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      assign[i] = best;
    }
    // Re-seed any empty cluster from the point farthest from its assigned
    // centroid, claiming the point so two empty clusters never pick the same
    // one.
    for (std::size_t k = 0; k < n; ++k) {
      if (std::find(assign.begin(), assign.end(), k) != assign.end()) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = distance(pts[i], centroids[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids[k] = pts[far];
      assign[far] = k;
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      Vec2 mean{0.0, 0.0};
      std::size_t count = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (assign[i] != k) continue;
        mean = mean + pts[i];
        ++count;
      }
      mean = mean * (1.0 / static_cast<double>(count));
      shift = std::max(shift, distance(mean, centroids[k]));
      centroids[k] = mean;
    }
    if (shift < 1e-6) break;
  }

  double total_score = 0.0;
  for (const Candidate& c : cands) total_score += c.score;

  const std::size_t steps = cands[0].trajectory.size();
  CandidateSet out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Candidate merged;
    merged.trajectory.assign(steps, {0.0, 0.0});
    double mass = 0.0;
    std::size_t members = 0;
    const Candidate* lead = nullptr;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (assign[i] != k) continue;
      mass += cands[i].score;
      ++members;
      for (std::size_t t = 0; t < steps; ++t) {
        merged.trajectory[t] = merged.trajectory[t] + cands[i].trajectory[t] * cands[i].score;
      }
      if (lead == nullptr || candidate_before(cands[i], *lead)) lead = &cands[i];
    }
    if (members == 1) {
      // A weighted mean of one point must reproduce it exactly, not up to the
      // rounding of score * p / score.
      merged.trajectory = lead->trajectory;
    } else {
      for (Vec2& p : merged.trajectory) p = p * (1.0 / mass);
    }
    merged.score = mass / total_score;
    merged.anchor_t = lead->anchor_t;
    merged.model_id = lead->model_id;
    merged.mode = lead->mode;
    out.push_back(std::move(merged));
  }
  std::sort(out.begin(), out.end(), candidate_before);
  return out;
}

void save_candidates(const std::string& path, const CandidateSet& cands) {
  std::string body;
  for (const Candidate& c : cands) {
    body += "{\"trajectory\":[";
    for (std::size_t t = 0; t < c.trajectory.size(); ++t) {
      if (t) body += ',';
      body += '[';
      append_double(body, c.trajectory[t].x);
      body += ',';
      append_double(body, c.trajectory[t].y);
      body += ']';
    }
    body += "],\"score\":";
    append_double(body, c.score);
    body += ",\"anchor_t\":" + std::to_string(c.anchor_t);
    body += ",\"model_id\":" + std::to_string(c.model_id);
    body += ",\"mode\":" + std::to_string(c.mode);
    body += "}\n";
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << body;
}

CandidateSet load_candidates(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  CandidateSet cands;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++record;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Candidate c;
      for (const auto& pt : j.at("trajectory")) {
        c.trajectory.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
      }
      c.score = j.at("score").get<double>();
      c.anchor_t = j.at("anchor_t").get<int>();
      c.model_id = j.at("model_id").get<int>();
      c.mode = j.at("mode").get<std::size_t>();
      if (c.trajectory.empty()) throw DataError("empty trajectory");
      if (!(c.score > 0.0) || !std::isfinite(c.score)) {
        throw DataError("score must be finite and positive");
      }
      cands.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw DataError("record " + std::to_string(record) + ": " + e.what());
    }
  }
  return cands;
}

AggregatedQuerySet add_queries(const std::vector<RefinedQuerySet>& sets) {
  if (sets.empty()) throw ShapeError("add_queries: no query sets given");
  std::vector<const RefinedQuerySet*> order;
  order.reserve(sets.size());
  for (const auto& s : sets) order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const RefinedQuerySet* a, const RefinedQuerySet* b) { return a->t0 < b->t0; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i]->queries.shape() != order[0]->queries.shape()) {
      throw ShapeError("add_queries: query sets disagree on N or width");
    }
    if (i > 0 && order[i]->t0 != order[i - 1]->t0 + 1) {
      throw DataError("add_queries: anchor times are not consecutive frames");
    }
  }
  Tensor sum = order[0]->queries;
  for (std::size_t i = 1; i < order.size(); ++i) sum = o::add(sum, order[i]->queries);
  return {sum, sets.size(), order.back()->t0};
}

RefinedQuerySet avg_queries_across_models(const std::vector<RefinedQuerySet>& sets) {
  if (sets.empty()) throw ShapeError("avg_queries_across_models: no query sets given");
  for (const auto& s : sets) {
    if (s.queries.shape() != sets[0].queries.shape()) {
      throw ShapeError("avg_queries_across_models: query sets disagree on N or width");
    }
    if (s.t0 != sets[0].t0) {
      throw DataError("avg_queries_across_models: query sets disagree on the anchor time");
    }
  }
  Tensor sum = sets[0].queries;
  for (std::size_t i = 1; i < sets.size(); ++i) sum = o::add(sum, sets[i].queries);
  return {o::scale(sum, 1.0 / static_cast<double>(sets.size())), sets[0].t0};
}

LearnedAggregator::LearnedAggregator(const AggregatorHyper& hp, ParamStore& ps, Rng& rng)
    : hp_(hp), decoder_(hp.decoder, ps, rng, "agg") {
  if (hp.window < 1) throw ConfigError("aggregator window must cover at least one anchor");
  bank_attn_ = MultiHeadAttention(ps, "agg.bank", hp.decoder.width, hp.decoder.heads, rng);
  offset_embedding_ = ps.make_weight("agg.offset", {hp.window, hp.decoder.width}, rng);
}

std::pair<ContextQuerySet, MixturePrediction> LearnedAggregator::refine(
    const AggregatedQuerySet& agg, const SceneEmbedding& embedding,
    const ForwardCtx& ctx) const {
  Tensor refined = decoder_.refine(embedding, agg.queries, ctx);
  return {{refined, agg.t0}, decoder_.heads(refined, agg.t0, embedding.anchor)};
}

std::pair<ContextQuerySet, MixturePrediction> LearnedAggregator::refine_xattn(
    const RefinedQuerySet& current, const std::vector<RefinedQuerySet>& history,
    const SceneEmbedding& embedding, const ForwardCtx& ctx) const {
  if (history.empty()) throw ShapeError("refine_xattn: empty history bank");
  std::vector<Tensor> bank_rows;
  bank_rows.reserve(history.size());
  for (const RefinedQuerySet& set : history) {
    if (set.queries.shape() != current.queries.shape()) {
      throw ShapeError("refine_xattn: history disagrees on N or width");
    }
    const int offset = current.t0 - set.t0;
    if (offset < 0 || offset >= static_cast<int>(hp_.window)) {
      throw DataError("refine_xattn: history anchor outside the aggregation window");
    }
    Tensor tag = o::reshape(
        o::slice(offset_embedding_, 0, static_cast<std::size_t>(offset), 1),
        {hp_.decoder.width});
    bank_rows.push_back(o::add(set.queries, tag));
  }
  Tensor bank = bank_rows.size() == 1 ? bank_rows[0] : o::concat(bank_rows, 0);
  Tensor mixed = o::add(current.queries, bank_attn_.apply(current.queries, bank));
  Tensor refined = decoder_.refine(embedding, mixed, ctx);
  return {{refined, current.t0}, decoder_.heads(refined, current.t0, embedding.anchor)};
}

}  // namespace streamcast
