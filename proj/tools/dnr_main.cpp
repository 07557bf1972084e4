// dnr: command-line front end for library construction, retrieval,
// inference and evaluation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dnr/coverage_static.hpp"
#include "dnr/demo_store.hpp"
#include "dnr/pipeline.hpp"
#include "dnr/providers.hpp"
#include "dnr/skill_collection.hpp"
#include "dnr/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dnr;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kProvider = 5,
  kValidation = 6,
  kPartialFailure = 7,
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
      return kConfig;
    case ErrorCode::kIoError:
    case ErrorCode::kMissingFile:
    case ErrorCode::kMissingManifest:
    case ErrorCode::kMalformedRecord:
      return kIo;
    case ErrorCode::kTransportError:
    case ErrorCode::kAuthMissing:
    case ErrorCode::kContextOverflow:
    case ErrorCode::kAnnotatorUnavailable:
      return kProvider;
    case ErrorCode::kValidationFailed:
      return kValidation;
    default:
      return kInternal;
  }
}

struct Overrides {
  std::string config_path;
  std::optional<double> lambda, alpha, beta, gamma;
  std::optional<std::size_t> k_sim, k_cov;
  std::optional<int> parallelism;
  std::string library, static_library;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--lambda", o.lambda, "verb/bigram weight in plan similarity");
  cmd->add_option("--alpha", o.alpha, "visual weight in the fused score");
  cmd->add_option("--beta", o.beta, "IDF exponent");
  cmd->add_option("--gamma", o.gamma, "length penalty");
  cmd->add_option("--k-sim", o.k_sim, "dynamic demonstrations per query");
  cmd->add_option("--k-cov", o.k_cov, "coverage demonstrations per query");
  cmd->add_option("--parallelism", o.parallelism, "concurrent workers");
  cmd->add_option("--library", o.library, "demonstration library directory");
  cmd->add_option("--static", o.static_library, "static library file");
  cmd->add_flag("--quiet", o.quiet, "do not print the effective config");
}

PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.beta) cfg.beta = *o.beta;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.k_sim) cfg.k_sim = *o.k_sim;
  if (o.k_cov) cfg.k_cov = *o.k_cov;
  // The budget follows the split when either side is overridden.
  if (o.k_sim || o.k_cov) cfg.total_demos = cfg.k_sim + cfg.k_cov;
  if (o.parallelism) cfg.parallelism = *o.parallelism;
  if (!o.library.empty()) cfg.library_path = o.library;
  if (!o.static_library.empty()) cfg.static_library_path = o.static_library;
  cfg.check();
  if (!o.quiet) std::cerr << "effective config:\n" << effective_config_dump(cfg) << "\n";
  return cfg;
}

fs::path config_dir(const Overrides& o) {
  return o.config_path.empty() ? fs::path() : fs::path(o.config_path).parent_path();
}

DemoLibrary require_library(const PipelineConfig& cfg) {
  if (cfg.library_path.empty()) {
    throw Error(ErrorCode::kConfigError, "no library path (set paths.library or --library)");
  }
  return load_library(cfg.library_path);
}

StaticLibrary require_static(const PipelineConfig& cfg) {
  if (cfg.static_library_path.empty()) {
    throw Error(ErrorCode::kConfigError,
                "no static library path (set paths.static_library or --static)");
  }
  return load_static_library(cfg.static_library_path);
}

const QuerySpec& find_query(const QueryManifest& manifest, const std::string& id) {
  for (const auto& q : manifest.queries) {
    if (q.id == id) return q;
  }
  throw Error(ErrorCode::kInvalidArgument, "query '" + id + "' is not in the manifest");
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill-decomposed demonstration retrieval for in-context robot control"};
  app.require_subcommand(1);

  Overrides o;

  // collect
  std::string raw_dir, out_dir, created;
  auto* collect = app.add_subcommand("collect", "segment and annotate raw episodes into a library");
  add_common(collect, o);
  collect->add_option("--raw", raw_dir, "directory with episodes/*.json")->required();
  collect->add_option("--out", out_dir, "output library directory")->required();
  collect->add_option("--created", created, "manifest timestamp");

  // build-static
  std::string static_out;
  std::optional<std::size_t> budget;
  auto* build_static = app.add_subcommand("build-static", "build the coverage static library");
  add_common(build_static, o);
  build_static->add_option("--out", static_out, "output file (default: config path)");
  build_static->add_option("--budget", budget, "maximum number of entries");

  // retrieve / infer / eval share the manifest
  std::string manifest_path, query_id;
  std::optional<std::size_t> top;
  auto* retrieve = app.add_subcommand("retrieve", "rank the library for one query (TSV)");
  add_common(retrieve, o);
  retrieve->add_option("--manifest", manifest_path, "query manifest")->required();
  retrieve->add_option("--query", query_id, "query id")->required();
  retrieve->add_option("--top", top, "rows to print (default: k_sim)");

  std::string dump_prompt, output;
  auto* infer = app.add_subcommand("infer", "run the full pipeline for one query");
  add_common(infer, o);
  infer->add_option("--manifest", manifest_path, "query manifest")->required();
  infer->add_option("--query", query_id, "query id")->required();
  infer->add_option("--dump-prompt", dump_prompt, "write the exact LLM payload here");
  infer->add_option("--output", output, "QueryResult JSON file (default: stdout)");

  std::string report_path, synthetic_dir;
  std::uint64_t seed = 7;
  auto* eval = app.add_subcommand("eval", "run a query manifest and report");
  add_common(eval, o);
  eval->add_option("--manifest", manifest_path, "query manifest");
  eval->add_option("--report", report_path, "machine-readable report file");
  eval->add_option("--synthetic", synthetic_dir, "generate a synthetic workspace here first");
  eval->add_option("--seed", seed, "seed for synthetic fixtures");

  bool stats = false, no_file_check = false;
  auto* validate_cmd = app.add_subcommand("validate", "validate a demonstration library");
  add_common(validate_cmd, o);
  validate_cmd->add_flag("--stats", stats, "print skill label statistics");
  validate_cmd->add_flag("--no-file-check", no_file_check, "skip referenced-file checks");

  std::size_t n_demos = 30;
  std::string unreachable;
  auto* synth = app.add_subcommand("synth", "write a synthetic workspace");
  synth->add_option("--out", out_dir, "workspace directory")->required();
  synth->add_option("--demos", n_demos, "library size");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--unreachable", unreachable, "query whose completer call fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) {
      SyntheticOptions opts;
      opts.n_demos = n_demos;
      opts.seed = seed;
      if (!unreachable.empty()) opts.unreachable_query = unreachable;
      const auto ws = write_synthetic_workspace(out_dir, opts);
      std::cout << "config\t" << ws.config.string() << "\nmanifest\t" << ws.manifest.string()
                << "\n";
      return kOk;
    }

    if (eval->parsed() && !synthetic_dir.empty()) {
      SyntheticOptions opts;
      opts.seed = seed;
      const auto ws = write_synthetic_workspace(synthetic_dir, opts);
      if (o.config_path.empty()) o.config_path = ws.config.string();
      if (manifest_path.empty()) manifest_path = ws.manifest.string();
    }

    const PipelineConfig cfg = resolve_config(o);

    if (collect->parsed()) {
      auto backend = make_chat_backend(cfg.annotator, config_dir(o));
      ChatAnnotator annotator(backend, cfg.annotator);
      CollectOptions opts;
      opts.codec = cfg.codec;
      opts.velocity_threshold = cfg.velocity_threshold;
      opts.parallelism = cfg.parallelism;
      opts.created = created;
      const CollectResult result = collect_library(raw_dir, out_dir, annotator, opts);
      for (const auto& [id, event] : result.events) {
        std::cerr << id << "\tsegment " << event.segment << "\t" << event.kind << "\t"
                  << event.detail << "\n";
      }
      std::cout << "collected " << result.library.size() << " demonstrations into " << out_dir
                << "\n";
      return kOk;
    }

    if (validate_cmd->parsed()) {
      if (cfg.library_path.empty()) {
        throw Error(ErrorCode::kConfigError, "no library path (set paths.library or --library)");
      }
      LoadOptions opts;
      opts.check_files = !no_file_check;
      const DemoLibrary library = load_library(cfg.library_path, opts);
      std::cout << "ok: " << library.size() << " demonstrations\n";
      if (stats) {
        const CorpusStats s = corpus_stats(library);
        std::cout << "segments\t" << s.total_segments << "\n";
        for (const auto& [verb, n] : s.verbs) std::cout << "verb\t" << verb << "\t" << n << "\n";
        for (const auto& [label, n] : s.labels) std::cout << "label\t" << label << "\t" << n << "\n";
      }
      return kOk;
    }

    if (build_static->parsed()) {
      const DemoLibrary library = require_library(cfg);
      const StaticLibrary lib = build_static_library(library, cfg.beta, cfg.gamma, budget);
      const std::string path = static_out.empty() ? cfg.static_library_path : static_out;
      if (path.empty()) throw Error(ErrorCode::kConfigError, "no output path for the static library");
      save_static_library(lib, path);
      std::cout << "static library: " << lib.entries.size() << " entries\n";
      for (const auto& e : lib.entries) std::cout << e.demo_id << "\t" << e.tokens.size() << "\n";
      return kOk;
    }

    const QueryManifest manifest = manifest_path.empty() ? QueryManifest{}
                                                         : load_query_manifest(manifest_path);
    if (eval->parsed() && manifest_path.empty()) {
      throw Error(ErrorCode::kConfigError, "eval needs --manifest or --synthetic");
    }
    const DemoLibrary library = require_library(cfg);
    const Providers providers = Providers::from_config(cfg, config_dir(o));

    if (retrieve->parsed()) {
      const QuerySpec& q = find_query(manifest, query_id);
      const std::string scene = format_scene_state(q.scene, cfg.codec);
      const PlannerOutput plan = providers.planner->plan(q.instruction, scene);
      RetrievalParams params{top.value_or(cfg.k_sim), cfg.lambda, cfg.alpha, q.task_name};
      const auto ranked = rank_and_select(providers.embedder->embed(q.embedding), plan.plan,
                                          library, params);
      std::cout << "# plan: " << format_plan(plan.plan) << "\n";
      std::cout << "id\ts_vis\ts_vis_norm\ts_plan\tfused\n";
      for (const auto& c : ranked) {
        std::cout << c.demo_id << "\t" << fixed6(c.s_vis) << "\t" << fixed6(c.s_vis_norm) << "\t"
                  << fixed6(c.s_plan) << "\t" << fixed6(c.fused) << "\n";
      }
      return kOk;
    }

    const StaticLibrary coverage = require_static(cfg);
    const Libraries libs{&library, &coverage};

    if (infer->parsed()) {
      const QueryResult r = run_query(find_query(manifest, query_id), libs, providers, cfg);
      if (!dump_prompt.empty() && !r.prompt_text.empty()) write_text_file(dump_prompt, r.prompt_text);
      write_or_print(output, query_result_to_json(r).dump(2) + "\n");
      if (r.failure) {
        std::cerr << "query failed in phase " << to_string(r.failure->phase) << ": "
                  << r.failure->message << "\n";
        return exit_code_for(r.failure->code);
      }
      return kOk;
    }

    if (eval->parsed()) {
      const EvalReport report = eval_batch(manifest, libs, providers, cfg);
      std::cout << eval_report_table(report);
      if (!report_path.empty()) write_text_file(report_path, eval_report_to_json(report).dump(2) + "\n");
      return report.partial_failure() ? kPartialFailure : kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
