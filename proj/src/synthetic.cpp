#include "dnr/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>

#include "dnr/coverage_static.hpp"

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TaskTemplate {
  const char* name;
  const char* instruction;
  std::vector<const char*> skills;
  std::vector<const char*> objects;  // first entries are manipulated
  std::vector<const char*> movable;
};

const std::vector<TaskTemplate>& seen_tasks() {
  static const std::vector<TaskTemplate> tasks = {
      {"pick_cup", "pick up the cup and put it on the tray",
       {"Reach[cup]", "Grasp[cup]", "Lift[cup]", "Move[cup]", "Place[cup, tray]", "Release[cup]"},
       {"cup", "tray"}, {"cup"}},
      {"stack_block", "stack the red block on the plate",
       {"Reach[block]", "Grasp[block]", "Lift[block]", "Place[block, plate]", "Release[block]"},
       {"block", "plate"}, {"block"}},
      {"insert_peg", "insert the peg into the hole",
       {"Reach[peg]", "Grasp[peg]", "Move[peg]", "Insert[peg, hole]", "Release[peg]"},
       {"peg", "hole"}, {"peg"}},
      {"slide_drawer", "pull the drawer out and push it back",
       {"Reach[drawer]", "Pull[drawer]", "Push[drawer]"}, {"drawer"}, {}},
      {"push_button", "press the button", {"Reach[button]", "Push[button]"}, {"button"}, {}},
      {"turn_knob", "turn the knob", {"Reach[knob]", "Rotate[knob]"}, {"knob"}, {}},
  };
  return tasks;
}

const TaskTemplate& rare_task() {
  static const TaskTemplate task{"cap_jar", "screw the lid onto the jar",
                                 {"Reach[lid]", "Grasp[lid]", "Close[lid, jar]", "Release[lid]"},
                                 {"lid", "jar"}, {"lid"}};
  return task;
}

// Clusters the query embeddings are drawn towards; the rare task is placed
// opposite to them.
const std::vector<std::string>& near_clusters() {
  static const std::vector<std::string> names = {"pick_cup", "stack_block", "insert_peg",
                                                 "slide_drawer"};
  return names;
}

Vec3 base_position(const std::string& object) {
  static const std::map<std::string, Vec3> table = {
      {"cup", {0.10, -0.15, 0.05}},   {"tray", {-0.20, 0.20, 0.02}},
      {"block", {0.05, 0.10, 0.04}},  {"plate", {-0.15, -0.10, 0.01}},
      {"peg", {0.20, 0.05, 0.06}},    {"hole", {-0.05, 0.25, 0.03}},
      {"drawer", {0.30, -0.30, 0.20}}, {"button", {-0.30, 0.00, 0.10}},
      {"knob", {0.00, 0.35, 0.15}},   {"lid", {0.15, 0.20, 0.08}},
      {"jar", {-0.10, -0.25, 0.07}},  {"box", {-0.25, 0.10, 0.09}},
      {"mug", {0.12, -0.05, 0.05}},   {"shelf", {-0.30, -0.20, 0.30}},
      {"slot", {0.25, 0.25, 0.04}},
  };
  return table.at(object);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) from the raw 64-bit output; std distributions are not
  // specified bit-exactly across standard libraries.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return l2_normalized(std::move(v));
}

// Cluster centres per seen task plus a rare-task centre pointing away from
// the query region.
std::map<std::string, std::vector<double>> cluster_centres(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::map<std::string, std::vector<double>> centres;
  for (const auto& t : seen_tasks()) centres[t.name] = random_unit(rng, dim);
  std::vector<double> away(dim, 0.0);
  for (const auto& name : near_clusters()) {
    for (std::size_t i = 0; i < dim; ++i) away[i] -= centres[name][i];
  }
  centres[rare_task().name] = l2_normalized(std::move(away));
  return centres;
}

std::vector<double> jittered(const std::vector<double>& centre, Rng& rng, double scale) {
  std::vector<double> v = centre;
  for (double& x : v) x += scale * rng.normal();
  return l2_normalized(std::move(v));
}

SkillSequence parse_all(const std::vector<const char*>& labels) {
  SkillSequence out;
  for (const char* label : labels) out.push_back(parse_skill(label));
  return out;
}

// Gripper state after each skill, starting open.
std::vector<int> gripper_trace(const SkillSequence& skills) {
  std::vector<int> states{1};
  for (const auto& s : skills) {
    int next = states.back();
    if (s.verb == "Grasp") next = 0;
    if (s.verb == "Release") next = 1;
    states.push_back(next);
  }
  return states;
}

std::vector<DiscreteAction> actions_for(const SkillSequence& skills,
                                        const std::map<std::string, Vec3>& positions,
                                        const CodecConfig& codec, Rng& rng) {
  const std::vector<int> gripper = gripper_trace(skills);
  std::vector<DiscreteAction> actions;
  for (std::size_t k = 0; k < skills.size(); ++k) {
    const auto& s = skills[k];
    // Relational skills end at the target object, the rest at the first one.
    const std::string& anchor = s.args.size() > 1 ? s.args[1] : s.args[0];
    Vec3 p = positions.at(anchor);
    const double lift = s.verb == "Lift" ? 0.15 : (s.verb == "Reach" ? 0.05 : 0.02);
    p[2] += lift;
    for (double& x : p) x += rng.uniform(-0.01, 0.01);
    ContinuousControl control;
    control.position = p;
    control.orientation = euler_to_quat(
        {rng.uniform(-170.0, 170.0), rng.uniform(-60.0, 60.0), rng.uniform(-170.0, 170.0)});
    control.gripper = gripper[k + 1];
    actions.push_back(encode_action(control, codec));
  }
  return actions;
}

std::map<std::string, Vec3> scene_positions(const std::vector<std::string>& objects, Rng& rng) {
  std::map<std::string, Vec3> positions;
  for (const auto& name : objects) {
    Vec3 p = base_position(name);
    for (double& x : p) x += rng.uniform(-0.02, 0.02);
    positions[name] = p;
  }
  return positions;
}

json scene_objects_json(const std::vector<std::string>& objects,
                        const std::map<std::string, Vec3>& positions) {
  json out = json::array();
  for (const auto& name : objects) out.push_back({{"name", name}, {"position", positions.at(name)}});
  return out;
}

std::string action_lines(const SkillSequence& plan, const std::vector<DiscreteAction>& actions) {
  std::string out = "Here is the action sequence.\n";
  for (std::size_t k = 0; k < actions.size(); ++k) {
    out += std::to_string(k + 1) + ". " + format_skill(plan[k]) + ": " + format_action(actions[k]) +
           "\n";
  }
  return out;
}

const std::string kPlaceholderPng = std::string("\x89PNG\r\n\x1a\n", 8) + "synthetic keyframe\n";

}  // namespace

DemoLibrary make_synthetic_library(const SyntheticOptions& options) {
  const auto centres = cluster_centres(options.seed, options.dimension);
  Rng rng(options.seed);
  DemoLibrary library;
  library.manifest = {"1970-01-01T00:00:00Z", "synthetic seed " + std::to_string(options.seed)};

  const std::size_t n_rare = std::max<std::size_t>(1, options.n_demos / 15);
  const auto& seen = seen_tasks();
  for (std::size_t i = 0; i < options.n_demos; ++i) {
    const bool rare = i >= options.n_demos - std::min(n_rare, options.n_demos);
    const TaskTemplate& task = rare ? rare_task() : seen[i % seen.size()];

    char id[32];
    std::snprintf(id, sizeof(id), "demo_%03zu", i);
    Demonstration demo;
    demo.id = id;
    demo.task_name = task.name;
    demo.instruction = task.instruction;
    demo.skills = parse_all(task.skills);

    std::vector<std::string> objects(task.objects.begin(), task.objects.end());
    const auto positions = scene_positions(objects, rng);
    demo.actions = actions_for(demo.skills, positions, library.codec, rng);
    const auto gripper = gripper_trace(demo.skills);
    for (std::size_t k = 0; k < gripper.size(); ++k) {
      KeyframeObservation kf;
      kf.step = static_cast<int>(10 * k);
      kf.image_ref = "images/" + demo.id + "/kf" + std::to_string(k) + ".png";
      kf.gripper_state = gripper[k];
      demo.keyframes.push_back(std::move(kf));
    }
    demo.embedding = jittered(centres.at(task.name), rng, 0.15);
    demo.metadata = {{"objects", objects},
                     {"movable_objects", std::vector<std::string>(task.movable.begin(), task.movable.end())},
                     {"scene_objects", scene_objects_json(objects, positions)}};
    library.demos.push_back(std::move(demo));
  }
  return library;
}

std::vector<SyntheticQuery> make_synthetic_queries(const SyntheticOptions& options) {
  struct QueryTemplate {
    const char* id;
    const char* task;
    const char* instruction;
    std::vector<const char*> plan;
    std::vector<const char*> objects;
  };
  static const std::vector<QueryTemplate> templates = {
      {"q_close_box", "close_box", "shut the box by lifting its lid into place",
       {"Reach[lid]", "Grasp[lid]", "Lift[lid]", "Close[lid, box]", "Release[lid]"},
       {"lid", "box"}},
      {"q_mug_shelf", "mug_to_shelf", "move the mug onto the top shelf",
       {"Reach[mug]", "Grasp[mug]", "Lift[mug]", "Move[mug]", "Place[mug, shelf]", "Release[mug]"},
       {"mug", "shelf"}},
      {"q_button_drawer", "button_then_drawer", "hit the button then open the drawer",
       {"Reach[button]", "Push[button]", "Reach[drawer]", "Pull[drawer]"},
       {"button", "drawer"}},
      {"q_peg_slot", "peg_in_slot", "slot the peg sideways into the slot",
       {"Reach[peg]", "Grasp[peg]", "Lift[peg]", "Insert[peg, slot]", "Release[peg]"},
       {"peg", "slot"}},
      {"q_knob_cup", "knob_then_cup", "twist the knob and then raise the cup",
       {"Reach[knob]", "Rotate[knob]", "Reach[cup]", "Grasp[cup]", "Lift[cup]", "Release[cup]"},
       {"knob", "cup"}},
  };

  const auto centres = cluster_centres(options.seed, options.dimension);
  Rng rng(options.seed + 1000003);
  const CodecConfig codec;
  std::vector<SyntheticQuery> out;
  for (const auto& t : templates) {
    SyntheticQuery q;
    q.spec.id = t.id;
    q.spec.task_name = t.task;
    q.spec.instruction = t.instruction;
    q.plan = parse_all(t.plan);

    std::vector<std::string> objects(t.objects.begin(), t.objects.end());
    const auto positions = scene_positions(objects, rng);
    for (const auto& name : objects) q.spec.scene.objects.push_back({name, positions.at(name)});
    q.spec.scene.gripper_open = true;

    std::vector<double> mix(options.dimension, 0.0);
    for (const auto& name : near_clusters()) {
      const double w = rng.uniform(0.5, 1.0);
      for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += w * centres.at(name)[i];
    }
    q.embedding = jittered(l2_normalized(std::move(mix)), rng, 0.05);

    q.actions = actions_for(q.plan, positions, codec, rng);
    q.spec.oracle_actions = q.actions;
    for (const auto& s : q.plan) q.planner_response += format_skill(s) + "\n";
    q.completer_response = action_lines(q.plan, q.actions);
    out.push_back(std::move(q));
  }
  return out;
}

json planner_script(const std::vector<SyntheticQuery>& queries) {
  json rules = json::array();
  for (const auto& q : queries) {
    rules.push_back({{"contains", "Instruction: " + q.spec.instruction + "\n"},
                     {"response", q.planner_response}});
  }
  return json{{"rules", std::move(rules)}, {"default", ""}};
}

json completer_script(const std::vector<SyntheticQuery>& queries,
                      const std::optional<std::string>& unreachable_query) {
  json rules = json::array();
  for (const auto& q : queries) {
    json rule{{"contains", "Instruction: " + q.spec.instruction + "\n"},
              {"response", q.completer_response}};
    if (unreachable_query && *unreachable_query == q.spec.id) rule["unavailable"] = true;
    rules.push_back(std::move(rule));
  }
  return json{{"rules", std::move(rules)}, {"default", "I cannot help with that."}};
}

SyntheticWorkspace write_synthetic_workspace(const fs::path& root, const SyntheticOptions& options) {
  SyntheticWorkspace ws;
  ws.root = root;
  ws.library = root / "library";
  ws.static_library = root / "static_library.json";
  ws.manifest = root / "queries.json";
  ws.config = root / "config.json";
  fs::create_directories(root);

  const DemoLibrary library = make_synthetic_library(options);
  save_library(library, ws.library);
  for (const auto& demo : library.demos) {
    for (const auto& kf : demo.keyframes) write_text_file(ws.library / kf.image_ref, kPlaceholderPng);
  }

  PipelineConfig cfg;
  save_static_library(build_static_library(library, cfg.beta, cfg.gamma), ws.static_library);

  auto queries = make_synthetic_queries(options);
  json manifest_queries = json::array();
  json embedder_vectors = json::object();
  for (auto& q : queries) {
    const std::string emb_rel = "queries/" + q.spec.id + ".embedding.json";
    write_text_file(root / emb_rel, json(q.embedding).dump() + "\n");
    q.spec.embedding = EmbeddingSource::precomputed(emb_rel);
    embedder_vectors[q.spec.id + ".png"] = q.embedding;
    manifest_queries.push_back(query_to_json(q.spec));
  }
  write_text_file(ws.manifest, json{{"queries", manifest_queries}}.dump(2) + "\n");

  write_text_file(root / "mocks/planner.json", planner_script(queries).dump(2) + "\n");
  write_text_file(root / "mocks/completer.json",
                  completer_script(queries, options.unreachable_query).dump(2) + "\n");
  write_text_file(root / "mocks/embedder.json", json{{"vectors", embedder_vectors}}.dump(2) + "\n");
  write_text_file(root / "mocks/annotator.json", json{{"default", "Move[cup]"}}.dump(2) + "\n");

  json config = config_to_json(cfg);
  config["providers"]["planner"]["provider"] = "mock:mocks/planner.json";
  config["providers"]["completer"]["provider"] = "mock:mocks/completer.json";
  config["providers"]["embedder"]["provider"] = "mock:mocks/embedder.json";
  config["providers"]["annotator"]["provider"] = "mock:mocks/annotator.json";
  config["paths"] = {{"library", "library"},
                     {"static_library", "static_library.json"},
                     {"output", "out"}};
  write_text_file(ws.config, config.dump(2) + "\n");
  return ws;
}

}  // namespace dnr
