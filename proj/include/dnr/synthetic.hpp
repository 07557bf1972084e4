#pragma once

// Deterministic synthetic fixtures: a seen-task demonstration library with
// clustered embeddings and one rare task, unseen-task queries with scripted
// planner and completer responses, and an on-disk workspace (library, static
// library, query manifest, mock scripts, config) for the CLI and tests.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnr/demo_store.hpp"
#include "dnr/pipeline.hpp"

namespace dnr {

struct SyntheticOptions {
  std::size_t n_demos = 30;
  std::uint64_t seed = 7;
  std::size_t dimension = 16;
  // Query whose completer rule is scripted to fail like an unreachable host.
  std::optional<std::string> unreachable_query;
};

// Seen tasks are assigned round-robin; roughly one demo in fifteen (at least
// one) belongs to the rare "cap_jar" task, the only one using Close.
DemoLibrary make_synthetic_library(const SyntheticOptions& options);

struct SyntheticQuery {
  QuerySpec spec;  // embedding source is left for the writer to fill in
  SkillSequence plan;
  std::vector<double> embedding;
  std::vector<DiscreteAction> actions;
  std::string planner_response;
  std::string completer_response;
};

// Five unseen-task queries. Embeddings sit near the pick/stack/insert/drawer
// clusters and away from the rare task, so the Close tokens of "close_box"
// are a gap that only the static library can fill.
std::vector<SyntheticQuery> make_synthetic_queries(const SyntheticOptions& options);

// Mock chat scripts keyed on each query's instruction.
nlohmann::json planner_script(const std::vector<SyntheticQuery>& queries);
nlohmann::json completer_script(const std::vector<SyntheticQuery>& queries,
                                const std::optional<std::string>& unreachable_query = {});

struct SyntheticWorkspace {
  std::filesystem::path root;
  std::filesystem::path config;          // config.json
  std::filesystem::path manifest;        // queries.json
  std::filesystem::path library;         // library/
  std::filesystem::path static_library;  // static_library.json
};

// Writes the full workspace under `root` (created if missing).
SyntheticWorkspace write_synthetic_workspace(const std::filesystem::path& root,
                                             const SyntheticOptions& options);

}  // namespace dnr
