#include "dnr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dnr/parallel.hpp"

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Rounds through a fixed decimal rendering so serialized values do not depend
// on last-bit differences between math libraries.
json fixed_number(double value, int digits = 9) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  double rounded = std::strtod(buffer, nullptr);
  if (rounded == 0.0) rounded = 0.0;  // drop negative zero
  return rounded;
}

std::string resolve_path(const fs::path& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (base_dir / path).lexically_normal().string();
}

ProviderConfig resolve_provider(ProviderConfig cfg, const fs::path& base_dir) {
  if (cfg.is_mock()) cfg.provider = "mock:" + resolve_path(base_dir, cfg.mock_script());
  return cfg;
}

json tokens_json(const TokenSet& tokens) {
  json out = json::array();
  for (const auto& t : tokens) out.push_back(t.to_string());
  return out;
}

QueryFailure failure_from(Phase phase, const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return {phase, err->code(), err->what()};
  return {phase, ErrorCode::kInvalidArgument, e.what()};
}

}  // namespace

void PipelineConfig::check() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(lambda)) throw Error(ErrorCode::kConfigError, "lambda must lie in [0, 1]");
  if (!unit(alpha)) throw Error(ErrorCode::kConfigError, "alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw Error(ErrorCode::kConfigError, "beta must be >= 0");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::kConfigError, "gamma must be >= 0");
  if (k_sim < 1) throw Error(ErrorCode::kConfigError, "k_sim must be >= 1");
  if (k_sim + k_cov != total_demos) {
    throw Error(ErrorCode::kConfigError, "k_sim + k_cov (" + std::to_string(k_sim + k_cov) +
                                             ") must equal total_demos (" +
                                             std::to_string(total_demos) + ")");
  }
  if (!(velocity_threshold > 0.0)) {
    throw Error(ErrorCode::kConfigError, "velocity_threshold must be > 0");
  }
  if (parallelism < 1) throw Error(ErrorCode::kConfigError, "parallelism must be >= 1");
  try {
    codec.check();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  for (const auto* p : {&planner, &completer, &embedder, &annotator}) p->check();
}

json config_to_json(const PipelineConfig& cfg) {
  return json{{"lambda", cfg.lambda},
              {"alpha", cfg.alpha},
              {"beta", cfg.beta},
              {"gamma", cfg.gamma},
              {"k_sim", cfg.k_sim},
              {"k_cov", cfg.k_cov},
              {"total_demos", cfg.total_demos},
              {"velocity_threshold", cfg.velocity_threshold},
              {"max_prompt_chars", cfg.max_prompt_chars},
              {"strict_actions", cfg.strict_actions},
              {"parallelism", cfg.parallelism},
              {"codec", codec_to_json(cfg.codec)},
              {"providers",
               {{"planner", provider_config_to_json(cfg.planner)},
                {"completer", provider_config_to_json(cfg.completer)},
                {"embedder", provider_config_to_json(cfg.embedder)},
                {"annotator", provider_config_to_json(cfg.annotator)}}},
              {"paths",
               {{"library", cfg.library_path},
                {"static_library", cfg.static_library_path},
                {"output", cfg.output_path}}}};
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig cfg;
  try {
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.k_sim = j.value("k_sim", cfg.k_sim);
    cfg.k_cov = j.value("k_cov", cfg.k_cov);
    cfg.total_demos = j.value("total_demos", cfg.total_demos);
    cfg.velocity_threshold = j.value("velocity_threshold", cfg.velocity_threshold);
    cfg.max_prompt_chars = j.value("max_prompt_chars", cfg.max_prompt_chars);
    cfg.strict_actions = j.value("strict_actions", cfg.strict_actions);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (j.contains("codec")) cfg.codec = codec_from_json(j.at("codec"));
    const json providers = j.value("providers", json::object());
    auto role = [&](const char* name, ProviderConfig& out) {
      if (providers.contains(name)) {
        out = resolve_provider(provider_config_from_json(providers.at(name)), base_dir);
      }
    };
    role("planner", cfg.planner);
    role("completer", cfg.completer);
    role("embedder", cfg.embedder);
    role("annotator", cfg.annotator);
    const json paths = j.value("paths", json::object());
    cfg.library_path = resolve_path(base_dir, paths.value("library", std::string()));
    cfg.static_library_path = resolve_path(base_dir, paths.value("static_library", std::string()));
    cfg.output_path = resolve_path(base_dir, paths.value("output", std::string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw Error(ErrorCode::kConfigError, e.what());
  }
  cfg.check();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kConfigError, "config file " + path.string() + " does not exist");
  }
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string effective_config_dump(const PipelineConfig& cfg) { return config_to_json(cfg).dump(2); }

QuerySpec query_from_json(const json& j, const fs::path& base_dir) {
  QuerySpec q;
  q.id = j.at("id").get<std::string>();
  q.instruction = j.at("instruction").get<std::string>();
  if (j.contains("task_name")) q.task_name = j.at("task_name").get<std::string>();
  if (j.contains("scene")) q.scene = scene_from_json(j.at("scene"));
  const json& e = j.at("embedding");
  if (e.contains("precomputed")) {
    q.embedding = EmbeddingSource::precomputed(resolve_path(base_dir, e.at("precomputed").get<std::string>()));
  } else {
    q.embedding = EmbeddingSource::image(resolve_path(base_dir, e.at("image").get<std::string>()));
  }
  if (j.contains("oracle_actions")) {
    std::vector<DiscreteAction> oracle;
    for (const auto& a : j.at("oracle_actions")) {
      oracle.push_back(DiscreteAction::from_array(a.get<std::array<int, 7>>()));
    }
    q.oracle_actions = std::move(oracle);
  }
  return q;
}

json query_to_json(const QuerySpec& q) {
  json j{{"id", q.id}, {"instruction", q.instruction}, {"scene", scene_to_json(q.scene)}};
  if (q.task_name) j["task_name"] = *q.task_name;
  j["embedding"] = q.embedding.kind == EmbeddingSource::Kind::kPrecomputed
                       ? json{{"precomputed", q.embedding.path}}
                       : json{{"image", q.embedding.path}};
  if (q.oracle_actions) {
    json oracle = json::array();
    for (const auto& a : *q.oracle_actions) oracle.push_back(a.to_array());
    j["oracle_actions"] = std::move(oracle);
  }
  return j;
}

QueryManifest load_query_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kIoError, path.string() + " does not exist");
  QueryManifest manifest;
  try {
    const json j = json::parse(read_text_file(path));
    for (const auto& q : j.value("queries", json::array())) {
      manifest.queries.push_back(query_from_json(q, path.parent_path()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  return manifest;
}

Providers Providers::from_config(const PipelineConfig& cfg, const fs::path& base_dir) {
  Providers p;
  p.planner = std::make_shared<Planner>(make_chat_backend(cfg.planner, base_dir), cfg.planner);
  p.completer = std::make_shared<Completer>(make_chat_backend(cfg.completer, base_dir), cfg.completer);
  p.embedder =
      std::make_shared<Embedder>(make_embedding_backend(cfg.embedder, base_dir), cfg.embedder);
  return p;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kPlan: return "plan";
    case Phase::kRetrieve: return "retrieve";
    case Phase::kCoverage: return "coverage";
    case Phase::kPrompt: return "prompt";
  }
  return "unknown";
}

std::string fixed6(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

json query_result_to_json(const QueryResult& r) {
  json dynamic = json::array();
  for (const auto& c : r.dynamic) {
    dynamic.push_back({{"id", c.demo_id},
                       {"s_vis", fixed_number(c.s_vis)},
                       {"s_vis_norm", fixed_number(c.s_vis_norm)},
                       {"s_plan", fixed_number(c.s_plan)},
                       {"fused", fixed_number(c.fused)}});
  }
  json actions = json::array();
  for (const auto& a : r.actions) actions.push_back(a.to_array());
  json controls = json::array();
  for (const auto& c : r.controls) {
    json position = json::array();
    for (double v : c.position) position.push_back(fixed_number(v));
    const auto& q = c.orientation;
    controls.push_back({{"position", position},
                        {"quaternion", json::array({fixed_number(q.w), fixed_number(q.x),
                                                    fixed_number(q.y), fixed_number(q.z)})},
                        {"gripper", c.gripper}});
  }
  json events = json::array();
  for (const auto& e : r.events) {
    events.push_back({{"kind", e.kind == ParseEvent::Kind::kClip ? "clip" : "skip"},
                      {"group", e.group},
                      {"detail", e.detail}});
  }
  json out{{"query_id", r.query_id},
           {"plan", format_plan(r.plan)},
           {"plan_skipped_lines", r.plan_skipped_lines},
           {"flags", r.flags},
           {"dynamic", std::move(dynamic)},
           {"coverage_ids", r.coverage_ids},
           {"gap_before", tokens_json(r.gap_before)},
           {"gap_after", tokens_json(r.gap_after)},
           {"prompt",
            {{"chars", r.prompt_chars},
             {"dynamic_blocks", r.prompt_dynamic_blocks},
             {"coverage_blocks", r.prompt_coverage_blocks},
             {"text", r.prompt_text}}},
           {"response", r.response_text},
           {"actions", std::move(actions)},
           {"controls", std::move(controls)},
           {"events", std::move(events)}};
  if (r.failure) {
    out["failure"] = {{"phase", to_string(r.failure->phase)},
                      {"code", to_string(r.failure->code)},
                      {"message", r.failure->message}};
  } else {
    out["failure"] = nullptr;
  }
  return out;
}

QueryResult run_query(const QuerySpec& query, const Libraries& libraries,
                      const Providers& providers, const PipelineConfig& cfg) {
  QueryResult r;
  r.query_id = query.id;

  // Phase 1: plan from instruction and scene state.
  auto start = Clock::now();
  const std::string scene_text = format_scene_state(query.scene, cfg.codec);
  try {
    PlannerOutput out = providers.planner->plan(query.instruction, scene_text);
    r.plan = std::move(out.plan);
    r.plan_skipped_lines = std::move(out.skipped_lines);
    if (r.plan.empty()) r.flags.emplace_back("plan-empty");
  } catch (const std::exception& e) {
    r.failure = failure_from(Phase::kPlan, e);
    r.timings.plan_ms = elapsed_ms(start);
    return r;
  }
  r.timings.plan_ms = elapsed_ms(start);

  // Phase 2: dynamic library.
  start = Clock::now();
  try {
    const EmbeddingVector embedding = providers.embedder->embed(query.embedding);
    RetrievalParams params{cfg.k_sim, cfg.lambda, cfg.alpha, query.task_name};
    r.dynamic = rank_and_select(embedding, r.plan, *libraries.demos, params);
  } catch (const std::exception& e) {
    r.failure = failure_from(Phase::kRetrieve, e);
    r.timings.retrieve_ms = elapsed_ms(start);
    return r;
  }
  r.timings.retrieve_ms = elapsed_ms(start);

  // Phase 3: coverage completion.
  start = Clock::now();
  std::vector<const Demonstration*> dynamic_demos;
  std::vector<const Demonstration*> coverage_demos;
  try {
    TokenSet covered;
    std::set<std::string> dynamic_ids;
    for (const auto& c : r.dynamic) {
      const Demonstration* demo = libraries.demos->find(c.demo_id);
      dynamic_demos.push_back(demo);
      dynamic_ids.insert(c.demo_id);
      const TokenSet t = tokens_of(demo->skills);
      covered.insert(t.begin(), t.end());
    }
    r.gap_before = coverage_gap(tokens_of(r.plan), covered);
    r.coverage_ids = fill_gaps(r.gap_before, *libraries.coverage, cfg.k_cov, dynamic_ids);
    r.gap_after = r.gap_before;
    for (const auto& id : r.coverage_ids) {
      const Demonstration* demo = libraries.demos->find(id);
      if (demo == nullptr) {
        throw Error(ErrorCode::kInvalidArgument,
                    "static library entry '" + id + "' is not in the demonstration library");
      }
      coverage_demos.push_back(demo);
      for (const auto& t : tokens_of(demo->skills)) r.gap_after.erase(t);
    }
  } catch (const std::exception& e) {
    r.failure = failure_from(Phase::kCoverage, e);
    r.timings.coverage_ms = elapsed_ms(start);
    return r;
  }
  r.timings.coverage_ms = elapsed_ms(start);

  // Phase 4: skill-augmented prompt, completion, decoding.
  start = Clock::now();
  try {
    const PromptBundle bundle = assemble_prompt(dynamic_demos, coverage_demos, query.instruction,
                                                scene_text, r.plan, cfg.codec, cfg.max_prompt_chars);
    r.prompt_text = bundle.render();
    r.prompt_chars = r.prompt_text.size();
    r.prompt_dynamic_blocks = bundle.dynamic_count;
    r.prompt_coverage_blocks = bundle.coverage_count;
    r.response_text = providers.completer->complete(bundle).text;
    ParsedResponse parsed = parse_action_response(r.response_text, cfg.codec, cfg.strict_actions);
    r.events = std::move(parsed.events);
    r.actions = std::move(parsed.actions);
    for (const auto& a : r.actions) r.controls.push_back(decode_action(a, cfg.codec));
  } catch (const std::exception& e) {
    r.failure = failure_from(Phase::kPrompt, e);
  }
  r.timings.prompt_ms = elapsed_ms(start);
  return r;
}

EvalReport eval_batch(const QueryManifest& manifest, const Libraries& libraries,
                      const Providers& providers, const PipelineConfig& cfg) {
  std::vector<EvalEntry> entries(manifest.queries.size());
  parallel_for(manifest.queries.size(), cfg.parallelism, [&](std::size_t i) {
    const QuerySpec& q = manifest.queries[i];
    const QueryResult r = run_query(q, libraries, providers, cfg);
    EvalEntry& e = entries[i];
    e.query_id = q.id;
    e.ok = r.ok();
    e.failure = r.failure;
    e.n_actions = r.actions.size();
    e.gap_before = r.gap_before.size();
    e.gap_after = r.gap_after.size();
    e.n_coverage = r.coverage_ids.size();
    e.timings = r.timings;
    if (q.oracle_actions && r.ok()) {
      const auto& oracle = *q.oracle_actions;
      const std::size_t common = std::min(oracle.size(), r.actions.size());
      std::array<int, 7> linf{};
      for (std::size_t k = 0; k < common; ++k) {
        const auto pred = r.actions[k].to_array();
        const auto want = oracle[k].to_array();
        for (std::size_t d = 0; d < 7; ++d) linf[d] = std::max(linf[d], std::abs(pred[d] - want[d]));
      }
      e.linf = linf;
      e.length_match = oracle.size() == r.actions.size();
      e.exact_match = *e.length_match && std::all_of(linf.begin(), linf.end(),
                                                     [](int v) { return v == 0; });
    } else if (q.oracle_actions) {
      e.exact_match = false;
    }
  });

  std::stable_sort(entries.begin(), entries.end(),
                   [](const EvalEntry& a, const EvalEntry& b) { return a.query_id < b.query_id; });
  EvalReport report;
  for (const auto& e : entries) {
    (e.ok ? report.successes : report.failures) += 1;
    if (e.exact_match) {
      ++report.with_oracle;
      if (*e.exact_match) ++report.exact_matches;
    }
    if (e.ok) ++report.action_count_histogram[e.n_actions];
  }
  report.entries = std::move(entries);
  return report;
}

json eval_report_to_json(const EvalReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json j{{"query_id", e.query_id},
           {"ok", e.ok},
           {"n_actions", e.n_actions},
           {"gap_before", e.gap_before},
           {"gap_after", e.gap_after},
           {"n_coverage", e.n_coverage},
           {"timings_ms",
            {{"plan", fixed_number(e.timings.plan_ms, 3)},
             {"retrieve", fixed_number(e.timings.retrieve_ms, 3)},
             {"coverage", fixed_number(e.timings.coverage_ms, 3)},
             {"prompt", fixed_number(e.timings.prompt_ms, 3)}}}};
    if (e.failure) {
      j["failure"] = {{"phase", to_string(e.failure->phase)},
                      {"code", to_string(e.failure->code)},
                      {"message", e.failure->message}};
    }
    if (e.exact_match) j["exact_match"] = *e.exact_match;
    if (e.length_match) j["length_match"] = *e.length_match;
    if (e.linf) j["linf"] = *e.linf;
    entries.push_back(std::move(j));
  }
  json histogram = json::object();
  for (const auto& [count, n] : report.action_count_histogram) histogram[std::to_string(count)] = n;
  return json{{"summary",
               {{"queries", report.entries.size()},
                {"successes", report.successes},
                {"failures", report.failures},
                {"with_oracle", report.with_oracle},
                {"exact_matches", report.exact_matches},
                {"action_count_histogram", std::move(histogram)}}},
              {"entries", std::move(entries)}};
}

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream out;
  out << "query\tstatus\tactions\tgap\tfilled\texact\tlinf\ttotal_ms\n";
  for (const auto& e : report.entries) {
    out << e.query_id << '\t'
        << (e.ok ? "ok" : "FAIL(" + std::string(to_string(e.failure->phase)) + ": " +
                              std::string(to_string(e.failure->code)) + ")")
        << '\t' << e.n_actions << '\t' << e.gap_before << "->" << e.gap_after << '\t'
        << e.n_coverage << '\t' << (e.exact_match ? (*e.exact_match ? "yes" : "no") : "-") << '\t';
    if (e.linf) {
      for (std::size_t d = 0; d < 7; ++d) out << (d ? "," : "") << (*e.linf)[d];
    } else {
      out << '-';
    }
    const double total =
        e.timings.plan_ms + e.timings.retrieve_ms + e.timings.coverage_ms + e.timings.prompt_ms;
    out << '\t' << fixed6(total) << '\n';
  }
  out << "queries=" << report.entries.size() << " ok=" << report.successes
      << " failed=" << report.failures << " exact=" << report.exact_matches << "/"
      << report.with_oracle << '\n';
  return out.str();
}

}  // namespace dnr
