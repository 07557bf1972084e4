#include "dnr/retrieval_dynamic.hpp"

#include <algorithm>

#include "dnr/error.hpp"

namespace dnr {

EmbeddingVector::EmbeddingVector(std::vector<double> values)
    : values_(l2_normalized(std::move(values))) {}

double visual_similarity(std::span<const double> query, std::span<const double> demo) {
  if (query.size() != demo.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query dimension " + std::to_string(query.size()) + " vs demo dimension " +
                    std::to_string(demo.size()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) dot += query[i] * demo[i];
  return std::clamp(dot, -1.0, 1.0);
}

std::vector<double> minmax_normalize(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyInput, "no scores to normalize");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  std::vector<double> out(scores.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
  }
  return out;
}

std::vector<RankedCandidate> rank_and_select(const EmbeddingVector& query,
                                             const SkillSequence& predicted_plan,
                                             const DemoLibrary& library,
                                             const RetrievalParams& params) {
  if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  if (params.k_sim < 1) throw Error(ErrorCode::kInvalidArgument, "k_sim must be >= 1");

  std::vector<const Demonstration*> pool;
  std::string missing;
  for (const auto& demo : library.demos) {
    if (params.exclude_task && demo.task_name == *params.exclude_task) continue;
    if (!demo.embedding) missing += (missing.empty() ? "" : ", ") + demo.id;
    pool.push_back(&demo);
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::kMissingEmbedding, "demos without embedding: " + missing);
  }
  if (pool.empty()) return {};

  std::vector<double> raw(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    raw[i] = visual_similarity(query.values(), *pool[i]->embedding);
  }
  const std::vector<double> normalized = minmax_normalize(raw);

  std::vector<RankedCandidate> ranked(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double plan = plan_similarity(predicted_plan, pool[i]->skills, params.lambda);
    ranked[i] = {pool[i]->id, raw[i], normalized[i], plan,
                 params.alpha * normalized[i] + (1.0 - params.alpha) * plan};
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.fused != b.fused) return a.fused > b.fused;
    return a.demo_id < b.demo_id;
  });
  if (ranked.size() > params.k_sim) ranked.resize(params.k_sim);
  return ranked;
}

}  // namespace dnr
