#pragma once

// End-to-end query processing: plan -> dynamic retrieval -> coverage gap
// filling -> prompt -> completion -> decoded controls, plus batch evaluation.

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnr/action_codec.hpp"
#include "dnr/coverage_static.hpp"
#include "dnr/demo_store.hpp"
#include "dnr/prompt_builder.hpp"
#include "dnr/providers.hpp"
#include "dnr/retrieval_dynamic.hpp"

namespace dnr {

struct PipelineConfig {
  double lambda = 0.7;
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.03;
  std::size_t k_sim = 17;
  std::size_t k_cov = 3;
  std::size_t total_demos = 20;
  double velocity_threshold = kDefaultVelocityThreshold;
  std::size_t max_prompt_chars = 0;  // 0: no cap
  bool strict_actions = false;
  int parallelism = 1;
  CodecConfig codec;
  ProviderConfig planner;
  ProviderConfig completer;
  ProviderConfig embedder;
  ProviderConfig annotator;
  std::string library_path;
  std::string static_library_path;
  std::string output_path;

  // Throws kConfigError (k_sim + k_cov != total_demos, weights outside
  // [0, 1], negative beta/gamma, bad codec or provider settings).
  void check() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults. Relative paths (libraries and mock
// scripts) are resolved against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
// Pretty-printed JSON of the effective configuration.
std::string effective_config_dump(const PipelineConfig& cfg);

struct QuerySpec {
  std::string id;
  std::string instruction;
  std::optional<std::string> task_name;
  SceneState scene;
  EmbeddingSource embedding;
  std::optional<std::vector<DiscreteAction>> oracle_actions;
};

struct QueryManifest {
  std::vector<QuerySpec> queries;
};

// {"queries": [{"id", "instruction", "task_name"?, "scene": {...},
//   "embedding": {"precomputed": path} | {"image": path}, "oracle_actions"?}]}
QueryManifest load_query_manifest(const std::filesystem::path& path);
QuerySpec query_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json query_to_json(const QuerySpec& query);

// Library handles shared by all queries.
struct Libraries {
  const DemoLibrary* demos = nullptr;
  const StaticLibrary* coverage = nullptr;
};

struct Providers {
  std::shared_ptr<Planner> planner;
  std::shared_ptr<Completer> completer;
  std::shared_ptr<Embedder> embedder;

  static Providers from_config(const PipelineConfig& cfg, const std::filesystem::path& base_dir = {});
};

enum class Phase { kPlan, kRetrieve, kCoverage, kPrompt };
std::string_view to_string(Phase phase);

struct QueryFailure {
  Phase phase;
  ErrorCode code;
  std::string message;
};

struct PhaseTimings {
  double plan_ms = 0.0;
  double retrieve_ms = 0.0;
  double coverage_ms = 0.0;
  double prompt_ms = 0.0;
};

struct QueryResult {
  std::string query_id;
  SkillSequence plan;
  std::vector<std::string> plan_skipped_lines;
  std::vector<std::string> flags;  // e.g. "plan-empty"
  std::vector<RankedCandidate> dynamic;
  std::vector<std::string> coverage_ids;
  TokenSet gap_before;
  TokenSet gap_after;
  std::size_t prompt_chars = 0;
  std::size_t prompt_dynamic_blocks = 0;
  std::size_t prompt_coverage_blocks = 0;
  std::string prompt_text;
  std::string response_text;
  std::vector<DiscreteAction> actions;
  std::vector<ContinuousControl> controls;
  std::vector<ParseEvent> events;
  std::optional<QueryFailure> failure;
  PhaseTimings timings;  // not serialized

  bool ok() const { return !failure.has_value(); }
};

// Deterministic JSON (fixed float formatting; timings omitted).
nlohmann::json query_result_to_json(const QueryResult& result);

// Never throws for provider, retrieval or parsing errors: the failing phase
// is recorded in `failure` and earlier phases stay populated.
QueryResult run_query(const QuerySpec& query, const Libraries& libraries,
                      const Providers& providers, const PipelineConfig& cfg);

struct EvalEntry {
  std::string query_id;
  bool ok = false;
  std::optional<QueryFailure> failure;
  std::size_t n_actions = 0;
  std::size_t gap_before = 0;
  std::size_t gap_after = 0;
  std::size_t n_coverage = 0;
  std::optional<bool> exact_match;
  std::optional<bool> length_match;
  std::optional<std::array<int, 7>> linf;  // per element, over the common prefix
  PhaseTimings timings;
};

struct EvalReport {
  std::vector<EvalEntry> entries;  // sorted by query id
  std::size_t successes = 0;
  std::size_t failures = 0;
  std::size_t with_oracle = 0;
  std::size_t exact_matches = 0;
  std::map<std::size_t, std::size_t> action_count_histogram;

  bool partial_failure() const { return failures > 0; }
};

EvalReport eval_batch(const QueryManifest& manifest, const Libraries& libraries,
                      const Providers& providers, const PipelineConfig& cfg);

nlohmann::json eval_report_to_json(const EvalReport& report);
std::string eval_report_table(const EvalReport& report);

// "%.6f"
std::string fixed6(double value);

}  // namespace dnr
