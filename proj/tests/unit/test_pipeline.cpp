#include <doctest.h>

#include "dnr/error.hpp"
#include "dnr/pipeline.hpp"
#include "dnr/synthetic.hpp"
#include "fixtures.hpp"

using namespace dnr;
using nlohmann::json;

namespace {

struct Loaded {
  PipelineConfig cfg;
  DemoLibrary demos;
  StaticLibrary coverage;
  Providers providers;
  QueryManifest manifest;

  Libraries libraries() const { return {&demos, &coverage}; }
};

Loaded load_workspace(const SyntheticWorkspace& ws) {
  Loaded out;
  out.cfg = load_config(ws.config);
  out.demos = load_library(out.cfg.library_path);
  out.coverage = load_static_library(out.cfg.static_library_path);
  out.providers = Providers::from_config(out.cfg, ws.root);
  out.manifest = load_query_manifest(ws.manifest);
  return out;
}

Providers scripted(const json& planner, const json& completer) {
  Providers p;
  p.planner = std::make_shared<Planner>(std::make_shared<MockChatBackend>(planner), ProviderConfig{});
  p.completer =
      std::make_shared<Completer>(std::make_shared<MockChatBackend>(completer), ProviderConfig{});
  p.embedder = std::make_shared<Embedder>(nullptr, ProviderConfig{});
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config defaults") {
    const PipelineConfig cfg;
    CHECK(cfg.lambda == 0.7);
    CHECK(cfg.alpha == 0.5);
    CHECK(cfg.beta == 0.5);
    CHECK(cfg.gamma == 0.03);
    CHECK(cfg.k_sim == 17);
    CHECK(cfg.k_cov == 3);
    CHECK(cfg.total_demos == 20);
    CHECK_NOTHROW(cfg.check());
    const json dump = json::parse(effective_config_dump(cfg));
    CHECK(dump.at("lambda") == 0.7);
    CHECK(dump.at("k_sim") == 17);
    CHECK(dump.at("total_demos") == 20);
  }

  TEST_CASE("config validation") {
    auto fails = [](auto mutate) {
      PipelineConfig cfg;
      mutate(cfg);
      try {
        cfg.check();
      } catch (const Error& e) {
        return e.code() == ErrorCode::kConfigError;
      }
      return false;
    };
    CHECK(fails([](PipelineConfig& c) { c.k_cov = 4; }));
    CHECK(fails([](PipelineConfig& c) { c.alpha = 1.5; }));
    CHECK(fails([](PipelineConfig& c) { c.lambda = -0.1; }));
    CHECK(fails([](PipelineConfig& c) { c.gamma = -1; }));
    CHECK(fails([](PipelineConfig& c) { c.codec.angle_resolution_deg = 7; }));
    CHECK(fails([](PipelineConfig& c) { c.completer.timeout_s = 0; }));
    CHECK(fails([](PipelineConfig& c) { c.k_sim = 0; c.total_demos = 3; }));
  }

  TEST_CASE("config json round trip and file errors") {
    fixtures::TempDir dir("cfg");
    PipelineConfig cfg;
    cfg.alpha = 0.25;
    cfg.k_sim = 10;
    cfg.k_cov = 2;
    cfg.total_demos = 12;
    cfg.library_path = (dir / "lib").string();
    const PipelineConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    write_text_file(dir / "c.json", R"({"alpha": 0.1, "paths": {"library": "lib"}})");
    const PipelineConfig partial = load_config(dir / "c.json");
    CHECK(partial.alpha == 0.1);
    CHECK(partial.lambda == 0.7);
    CHECK(std::filesystem::path(partial.library_path) == dir / "lib");
    try {
      load_config(dir / "absent.json");
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigError);
      CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
    }
    write_text_file(dir / "bad.json", R"({"alpha": "high"})");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), Error);
  }

  TEST_CASE("synthetic end to end is deterministic with 17 + coverage blocks") {
    fixtures::TempDir dir("e2e");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    const Loaded w = load_workspace(ws);
    REQUIRE(w.manifest.queries.size() == 5);
    const QuerySpec& q = w.manifest.queries[0];
    const QueryResult a = run_query(q, w.libraries(), w.providers, w.cfg);
    REQUIRE(a.ok());
    CHECK(a.dynamic.size() == 17);
    CHECK(a.prompt_dynamic_blocks == 17);
    CHECK(a.prompt_coverage_blocks <= 3);
    CHECK(a.prompt_coverage_blocks == a.coverage_ids.size());
    CHECK_FALSE(a.actions.empty());
    CHECK(a.controls.size() == a.actions.size());
    for (const auto& c : a.controls) CHECK(std::abs(c.orientation.norm() - 1.0) <= 1e-9);
    const QueryResult b = run_query(q, w.libraries(), w.providers, w.cfg);
    CHECK(query_result_to_json(a).dump() == query_result_to_json(b).dump());
    CHECK(a.prompt_text == b.prompt_text);
    for (const auto& id : a.coverage_ids) {
      for (const auto& d : a.dynamic) CHECK(d.demo_id != id);
    }
  }

  TEST_CASE("coverage fills the planted gap") {
    fixtures::TempDir dir("gap");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    const Loaded w = load_workspace(ws);
    const auto it = std::find_if(w.manifest.queries.begin(), w.manifest.queries.end(),
                                 [](const auto& q) { return q.id == "q_close_box"; });
    REQUIRE(it != w.manifest.queries.end());
    const QueryResult r = run_query(*it, w.libraries(), w.providers, w.cfg);
    REQUIRE(r.ok());
    CHECK(r.gap_before.count(CoverageToken::verb("Close")) == 1);
    CHECK(r.gap_after.count(CoverageToken::verb("Close")) == 0);
    CHECK(r.gap_after.size() < r.gap_before.size());
    REQUIRE_FALSE(r.coverage_ids.empty());
    CHECK(w.demos.find(r.coverage_ids[0])->task_name == "cap_jar");

    PipelineConfig no_cov = w.cfg;
    no_cov.k_cov = 0;
    no_cov.total_demos = no_cov.k_sim;
    const QueryResult off = run_query(*it, w.libraries(), w.providers, no_cov);
    CHECK(off.coverage_ids.empty());
    CHECK(off.gap_after == off.gap_before);
  }

  TEST_CASE("empty plan is flagged and the run completes") {
    fixtures::TempDir dir("empty");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    Loaded w = load_workspace(ws);
    Providers p = scripted(json{{"default", "I am not sure."}},
                           json{{"default", "[50, 50, 50, 36, 36, 36, 1]"}});
    const QueryResult r = run_query(w.manifest.queries[1], w.libraries(), p, w.cfg);
    REQUIRE(r.ok());
    CHECK(r.plan.empty());
    CHECK(std::find(r.flags.begin(), r.flags.end(), "plan-empty") != r.flags.end());
    CHECK(r.prompt_text.find("Plan: (none)") != std::string::npos);
    CHECK(r.gap_before.empty());
    CHECK(r.coverage_ids.empty());
    // Plan similarity against any non-empty demo is 0 with an empty plan.
    for (const auto& d : r.dynamic) CHECK(d.s_plan == 0.0);
  }

  TEST_CASE("two tuples decode to two unit-quaternion controls") {
    fixtures::TempDir dir("two");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    Loaded w = load_workspace(ws);
    Providers p = scripted(json{{"default", "Reach[cup]\nGrasp[cup]"}},
                           json{{"default", "[50, 50, 50, 36, 36, 36, 1]\n[10, 20, 30, 0, 54, 71, 0]"}});
    const QueryResult r = run_query(w.manifest.queries[0], w.libraries(), p, w.cfg);
    REQUIRE(r.ok());
    REQUIRE(r.controls.size() == 2);
    for (const auto& c : r.controls) CHECK(std::abs(c.orientation.norm() - 1.0) <= 1e-12);
    CHECK(r.controls[0].gripper == 1);
    CHECK(r.controls[1].gripper == 0);
    CHECK(r.controls[0].position[2] == doctest::Approx(0.505));
  }

  TEST_CASE("a prompt-phase failure keeps the earlier phases") {
    fixtures::TempDir dir("fail");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    Loaded w = load_workspace(ws);
    Providers p = scripted(json{{"default", "Reach[cup]\nGrasp[cup]"}},
                           json{{"default", "I cannot help with that."}});
    const QueryResult r = run_query(w.manifest.queries[0], w.libraries(), p, w.cfg);
    REQUIRE_FALSE(r.ok());
    CHECK(r.failure->phase == Phase::kPrompt);
    CHECK(r.failure->code == ErrorCode::kNoActionsFound);
    CHECK(r.plan.size() == 2);
    CHECK(r.dynamic.size() == 17);
    CHECK_FALSE(r.prompt_text.empty());
    CHECK(r.response_text == "I cannot help with that.");
    const json j = query_result_to_json(r);
    CHECK(j.at("failure").at("phase") == "prompt");

    Providers down = scripted(json{{"unavailable", true}}, json{{"default", ""}});
    const QueryResult d = run_query(w.manifest.queries[0], w.libraries(), down, w.cfg);
    REQUIRE_FALSE(d.ok());
    CHECK(d.failure->phase == Phase::kPlan);
    CHECK(d.failure->code == ErrorCode::kTransportError);
  }

  TEST_CASE("retrieval failure is isolated to the query") {
    fixtures::TempDir dir("retr");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    Loaded w = load_workspace(ws);
    QuerySpec q = w.manifest.queries[0];
    q.embedding = EmbeddingSource::precomputed((dir / "missing.json").string());
    const QueryResult r = run_query(q, w.libraries(), w.providers, w.cfg);
    REQUIRE_FALSE(r.ok());
    CHECK(r.failure->phase == Phase::kRetrieve);
    CHECK(r.failure->code == ErrorCode::kMissingFile);
    CHECK_FALSE(r.plan.empty());
  }

  TEST_CASE("eval_batch") {
    fixtures::TempDir dir("eval");
    const auto ws = write_synthetic_workspace(dir.path(), SyntheticOptions{});
    Loaded w = load_workspace(ws);
    const EvalReport report = eval_batch(w.manifest, w.libraries(), w.providers, w.cfg);
    CHECK(report.successes == 5);
    CHECK(report.failures == 0);
    CHECK(report.with_oracle == 5);
    CHECK(report.exact_matches == 5);
    CHECK_FALSE(report.partial_failure());
    CHECK(std::is_sorted(report.entries.begin(), report.entries.end(),
                         [](const auto& a, const auto& b) { return a.query_id < b.query_id; }));
    for (const auto& e : report.entries) CHECK(*e.linf == std::array<int, 7>{});

    PipelineConfig par = w.cfg;
    par.parallelism = 3;
    CHECK(eval_report_to_json(eval_batch(w.manifest, w.libraries(), w.providers, par)).at("summary") ==
          eval_report_to_json(report).at("summary"));

    const EvalReport empty = eval_batch(QueryManifest{}, w.libraries(), w.providers, w.cfg);
    CHECK(empty.entries.empty());
    CHECK_FALSE(empty.partial_failure());
    CHECK(eval_report_to_json(empty).at("summary").at("queries") == 0);
  }

  TEST_CASE("one unreachable query gives four successes and one failure") {
    fixtures::TempDir dir("unreach");
    SyntheticOptions opts;
    opts.unreachable_query = "q_peg_slot";
    const auto ws = write_synthetic_workspace(dir.path(), opts);
    Loaded w = load_workspace(ws);
    const EvalReport report = eval_batch(w.manifest, w.libraries(), w.providers, w.cfg);
    CHECK(report.successes == 4);
    CHECK(report.failures == 1);
    CHECK(report.partial_failure());
    const auto it = std::find_if(report.entries.begin(), report.entries.end(),
                                 [](const auto& e) { return !e.ok; });
    REQUIRE(it != report.entries.end());
    CHECK(it->query_id == "q_peg_slot");
    CHECK(it->failure->code == ErrorCode::kTransportError);
    CHECK(eval_report_table(report).find("failed=1") != std::string::npos);
  }

  TEST_CASE("query manifest parsing") {
    fixtures::TempDir dir("manifest");
    write_text_file(dir / "m.json", R"({"queries": [{"id": "q", "instruction": "go",
      "embedding": {"image": "q.png"}, "oracle_actions": [[1,2,3,4,5,6,1]]}]})");
    const QueryManifest m = load_query_manifest(dir / "m.json");
    REQUIRE(m.queries.size() == 1);
    CHECK(m.queries[0].embedding.kind == EmbeddingSource::Kind::kImage);
    CHECK(std::filesystem::path(m.queries[0].embedding.path) == dir / "q.png");
    CHECK(m.queries[0].oracle_actions->size() == 1);
    CHECK(query_from_json(query_to_json(m.queries[0])).id == "q");
    write_text_file(dir / "bad.json", R"({"queries": [{"id": 3}]})");
    CHECK_THROWS_AS(load_query_manifest(dir / "bad.json"), Error);
    try {
      load_query_manifest(dir / "none.json");
      FAIL("expected an I/O error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIoError);
    }
  }
}
