#pragma once

// Coverage-aware static library. Demonstrations are reduced to object-agnostic
// tokens (V:<verb> and B:<verb>-><verb>), tokens are IDF-weighted, and a
// greedy length-penalized cover picks demonstrations offline (whole corpus)
// and at inference (the plan's coverage gap).

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dnr/demo_store.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

struct CoverageToken {
  enum class Kind { kVerb, kBigram };

  Kind kind = Kind::kVerb;
  std::string first;
  std::string second;  // empty for verb tokens

  static CoverageToken verb(std::string v) { return {Kind::kVerb, std::move(v), {}}; }
  static CoverageToken bigram(std::string a, std::string b) {
    return {Kind::kBigram, std::move(a), std::move(b)};
  }

  // "V:<verb>" or "B:<v1>-><v2>"
  std::string to_string() const;
  static CoverageToken parse(std::string_view text);

  friend auto operator<=>(const CoverageToken&, const CoverageToken&) = default;
};

using TokenSet = std::set<CoverageToken>;

TokenSet tokens_of(const SkillSequence& seq);

struct IdfTable {
  std::size_t n_documents = 0;
  std::map<CoverageToken, std::size_t> document_frequency;
  double beta = 0.5;

  static IdfTable build(const std::vector<TokenSet>& documents, double beta);

  // Unseen tokens have df = 0.
  std::size_t df(const CoverageToken& token) const;
  double weight(const CoverageToken& token) const;

  friend bool operator==(const IdfTable&, const IdfTable&) = default;
};

// (ln((N + 1) / (df + 1)) + 1)^beta
double idf_weight(std::size_t n_documents, std::size_t df, double beta);
double idf_weight(const CoverageToken& token, const IdfTable& table);

// Sum of weights of tokens in `tokens` that are not in `covered`, divided by
// (1 + gamma * length).
double selection_score(const TokenSet& tokens, std::size_t length, const TokenSet& covered,
                       const IdfTable& table, double gamma);

TokenSet coverage_gap(const TokenSet& plan_tokens, const TokenSet& covered);

struct StaticEntry {
  std::string demo_id;
  std::size_t length = 0;  // number of skills
  TokenSet tokens;

  friend bool operator==(const StaticEntry&, const StaticEntry&) = default;
};

struct StaticLibrary {
  std::vector<StaticEntry> entries;  // offline selection order
  IdfTable idf;
  double gamma = 0.03;
  std::string log_base = "e";

  const StaticEntry* find(std::string_view id) const;

  friend bool operator==(const StaticLibrary&, const StaticLibrary&) = default;
};

// Greedy cover of the corpus token universe starting from an empty covered
// set; ties go to the smaller id. Stops when the universe is covered, the
// budget is reached, or no demonstration adds anything.
StaticLibrary build_static_library(const DemoLibrary& library, double beta, double gamma,
                                   std::optional<std::size_t> budget = std::nullopt);

// Greedy gap filling: each round picks the entry maximizing the weight of the
// remaining gap tokens it covers over (1 + gamma * length). Entries in
// `excluded_ids` are never chosen. Stops at k_cov picks, an empty gap, or a
// round where nothing scores above zero.
std::vector<std::string> fill_gaps(const TokenSet& gap, const StaticLibrary& library,
                                   std::size_t k_cov,
                                   const std::set<std::string>& excluded_ids = {});

void save_static_library(const StaticLibrary& library, const std::filesystem::path& path);
StaticLibrary load_static_library(const std::filesystem::path& path);

nlohmann::json static_library_to_json(const StaticLibrary& library);
StaticLibrary static_library_from_json(const nlohmann::json& j);

}  // namespace dnr
