#include "dnr/coverage_static.hpp"

#include <algorithm>
#include <cmath>

#include "dnr/error.hpp"

namespace dnr {

using nlohmann::json;

namespace {

constexpr const char* kStaticFormat = "dnr-static-library";

double gap_gain(const TokenSet& tokens, const TokenSet& gap, const IdfTable& table) {
  double sum = 0.0;
  for (const auto& t : tokens) {
    if (gap.contains(t)) sum += table.weight(t);
  }
  return sum;
}

}  // namespace

std::string CoverageToken::to_string() const {
  return kind == Kind::kVerb ? "V:" + first : "B:" + first + "->" + second;
}

CoverageToken CoverageToken::parse(std::string_view text) {
  if (text.starts_with("V:") && text.size() > 2) {
    return verb(std::string(text.substr(2)));
  }
  if (text.starts_with("B:")) {
    const auto arrow = text.find("->", 2);
    if (arrow != std::string_view::npos && arrow > 2 && arrow + 2 < text.size()) {
      return bigram(std::string(text.substr(2, arrow - 2)), std::string(text.substr(arrow + 2)));
    }
  }
  throw Error(ErrorCode::kMalformedRecord, "bad coverage token '" + std::string(text) + "'");
}

TokenSet tokens_of(const SkillSequence& seq) {
  TokenSet out;
  for (const auto& v : verb_set(seq)) out.insert(CoverageToken::verb(v));
  for (const auto& [a, b] : bigrams(seq)) out.insert(CoverageToken::bigram(a, b));
  return out;
}

double idf_weight(std::size_t n_documents, std::size_t df, double beta) {
  const double base = std::log(static_cast<double>(n_documents + 1) /
                               static_cast<double>(df + 1)) + 1.0;
  return std::pow(base, beta);
}

IdfTable IdfTable::build(const std::vector<TokenSet>& documents, double beta) {
  if (!(beta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be >= 0");
  IdfTable table;
  table.n_documents = documents.size();
  table.beta = beta;
  for (const auto& doc : documents) {
    for (const auto& t : doc) ++table.document_frequency[t];
  }
  return table;
}

std::size_t IdfTable::df(const CoverageToken& token) const {
  auto it = document_frequency.find(token);
  return it == document_frequency.end() ? 0 : it->second;
}

double IdfTable::weight(const CoverageToken& token) const {
  return idf_weight(n_documents, df(token), beta);
}

double idf_weight(const CoverageToken& token, const IdfTable& table) {
  return table.weight(token);
}

double selection_score(const TokenSet& tokens, std::size_t length, const TokenSet& covered,
                       const IdfTable& table, double gamma) {
  double sum = 0.0;
  for (const auto& t : tokens) {
    if (!covered.contains(t)) sum += table.weight(t);
  }
  return sum / (1.0 + gamma * static_cast<double>(length));
}

TokenSet coverage_gap(const TokenSet& plan_tokens, const TokenSet& covered) {
  TokenSet gap;
  std::set_difference(plan_tokens.begin(), plan_tokens.end(), covered.begin(), covered.end(),
                      std::inserter(gap, gap.end()));
  return gap;
}

const StaticEntry* StaticLibrary::find(std::string_view id) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const StaticEntry& e) { return e.demo_id == id; });
  return it == entries.end() ? nullptr : &*it;
}

StaticLibrary build_static_library(const DemoLibrary& library, double beta, double gamma,
                                   std::optional<std::size_t> budget) {
  if (library.demos.empty()) {
    throw Error(ErrorCode::kEmptyInput, "cannot build a static library from no demos");
  }
  if (!(gamma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be >= 0");

  std::vector<StaticEntry> candidates;
  std::vector<TokenSet> documents;
  for (const auto& demo : library.demos) {
    candidates.push_back({demo.id, demo.skills.size(), tokens_of(demo.skills)});
    documents.push_back(candidates.back().tokens);
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const StaticEntry& a, const StaticEntry& b) { return a.demo_id < b.demo_id; });

  StaticLibrary out;
  out.idf = IdfTable::build(documents, beta);
  out.gamma = gamma;

  TokenSet universe;
  for (const auto& doc : documents) universe.insert(doc.begin(), doc.end());

  TokenSet covered;
  std::vector<bool> taken(candidates.size(), false);
  while (covered.size() < universe.size() && (!budget || out.entries.size() < *budget)) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (taken[i]) continue;
      const double score = selection_score(candidates[i].tokens, candidates[i].length, covered,
                                           out.idf, gamma);
      if (score > best_score) {
        best = i;
        best_score = score;
      }
    }
    if (!best) break;
    taken[*best] = true;
    covered.insert(candidates[*best].tokens.begin(), candidates[*best].tokens.end());
    out.entries.push_back(candidates[*best]);
  }
  return out;
}

std::vector<std::string> fill_gaps(const TokenSet& gap, const StaticLibrary& library,
                                   std::size_t k_cov, const std::set<std::string>& excluded_ids) {
  std::vector<std::string> picked;
  TokenSet remaining = gap;
  std::set<std::string> used = excluded_ids;
  while (picked.size() < k_cov && !remaining.empty()) {
    const StaticEntry* best = nullptr;
    double best_score = 0.0;
    for (const auto& entry : library.entries) {
      if (used.contains(entry.demo_id)) continue;
      const double score = gap_gain(entry.tokens, remaining, library.idf) /
                           (1.0 + library.gamma * static_cast<double>(entry.length));
      if (score > best_score || (best && score == best_score && entry.demo_id < best->demo_id)) {
        if (score > 0.0) {
          best = &entry;
          best_score = score;
        }
      }
    }
    if (!best) break;
    picked.push_back(best->demo_id);
    used.insert(best->demo_id);
    for (const auto& t : best->tokens) remaining.erase(t);
  }
  return picked;
}

json static_library_to_json(const StaticLibrary& library) {
  json df = json::object();
  for (const auto& [token, count] : library.idf.document_frequency) df[token.to_string()] = count;
  json entries = json::array();
  for (const auto& e : library.entries) {
    json tokens = json::array();
    for (const auto& t : e.tokens) tokens.push_back(t.to_string());
    entries.push_back({{"id", e.demo_id}, {"length", e.length}, {"tokens", std::move(tokens)}});
  }
  return json{{"format", kStaticFormat},
              {"version", 1},
              {"log_base", library.log_base},
              {"beta", library.idf.beta},
              {"gamma", library.gamma},
              {"n_documents", library.idf.n_documents},
              {"df", std::move(df)},
              {"entries", std::move(entries)}};
}

StaticLibrary static_library_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kStaticFormat) {
      throw Error(ErrorCode::kMalformedRecord, "not a static library file");
    }
    StaticLibrary lib;
    lib.log_base = j.at("log_base").get<std::string>();
    if (lib.log_base != "e") {
      throw Error(ErrorCode::kMalformedRecord, "unsupported log base '" + lib.log_base + "'");
    }
    lib.idf.beta = j.at("beta").get<double>();
    lib.gamma = j.at("gamma").get<double>();
    lib.idf.n_documents = j.at("n_documents").get<std::size_t>();
    for (const auto& [token, count] : j.at("df").items()) {
      lib.idf.document_frequency[CoverageToken::parse(token)] = count.get<std::size_t>();
    }
    for (const auto& e : j.at("entries")) {
      StaticEntry entry{e.at("id").get<std::string>(), e.at("length").get<std::size_t>(), {}};
      for (const auto& t : e.at("tokens")) entry.tokens.insert(CoverageToken::parse(t.get<std::string>()));
      lib.entries.push_back(std::move(entry));
    }
    return lib;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("static library: ") + e.what());
  }
}

void save_static_library(const StaticLibrary& library, const std::filesystem::path& path) {
  write_text_file(path, static_library_to_json(library).dump(2) + "\n");
}

StaticLibrary load_static_library(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIoError, path.string() + " does not exist");
  }
  try {
    return static_library_from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

}  // namespace dnr
