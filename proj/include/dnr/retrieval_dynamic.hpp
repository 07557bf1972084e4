#pragma once

// Task-adaptive retrieval: every candidate demonstration is scored by a fusion
// of min-max-normalized visual cosine similarity and plan similarity, and the
// top k_sim are kept.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnr/demo_store.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

// Unit-norm embedding. Construction normalizes; kZeroVector for zero input.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dimension() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

// Dot product of two unit vectors. Throws kDimensionMismatch.
double visual_similarity(std::span<const double> query, std::span<const double> demo);

// (s - min) / (max - min); all zeros when max == min. Throws kEmptyInput.
std::vector<double> minmax_normalize(std::span<const double> scores);

struct RankedCandidate {
  std::string demo_id;
  double s_vis = 0.0;
  double s_vis_norm = 0.0;
  double s_plan = 0.0;
  double fused = 0.0;

  friend bool operator==(const RankedCandidate&, const RankedCandidate&) = default;
};

struct RetrievalParams {
  std::size_t k_sim = 17;
  double lambda = 0.7;
  double alpha = 0.5;
  // Demonstrations of this task are excluded from the candidate pool.
  std::optional<std::string> exclude_task;
};

// Scores the whole (non-excluded) library, sorts by fused score descending
// with ascending id as tie-break, and returns the first k_sim. Throws
// kMissingEmbedding listing every candidate without an embedding.
std::vector<RankedCandidate> rank_and_select(const EmbeddingVector& query,
                                             const SkillSequence& predicted_plan,
                                             const DemoLibrary& library,
                                             const RetrievalParams& params);

}  // namespace dnr
