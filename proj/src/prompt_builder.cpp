#include "dnr/prompt_builder.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <optional>

#include "dnr/error.hpp"

namespace dnr {

using nlohmann::json;

namespace {

bool is_separator(char c) { return c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Integers in a bracket body, or nullopt when the body holds anything else.
// Values beyond the int64 range saturate.
std::optional<std::vector<long long>> integer_list(std::string_view body) {
  std::vector<long long> values;
  std::size_t i = 0;
  while (i < body.size()) {
    if (is_separator(body[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    if (body[j] == '-' || body[j] == '+') ++j;
    const std::size_t digits = j;
    while (j < body.size() && body[j] >= '0' && body[j] <= '9') ++j;
    if (j == digits || (j < body.size() && !is_separator(body[j]))) return std::nullopt;
    std::string_view token = body.substr(i, j - i);
    const bool negative = token.front() == '-';
    if (token.front() == '+' || token.front() == '-') token.remove_prefix(1);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec == std::errc::result_out_of_range) {
      value = std::numeric_limits<long long>::max();
    } else if (ec != std::errc()) {
      return std::nullopt;
    }
    values.push_back(negative ? -value : value);
    i = j;
  }
  if (values.empty()) return std::nullopt;
  return values;
}

}  // namespace

std::string format_scene_state(const SceneState& scene, const CodecConfig& codec) {
  std::string out = "objects: ";
  if (scene.objects.empty()) out += "(none)";
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto idx = encode_translation(scene.objects[i].position, codec);
    if (i > 0) out += "; ";
    out += scene.objects[i].name + "@(" + std::to_string(idx[0]) + "," + std::to_string(idx[1]) +
           "," + std::to_string(idx[2]) + ")";
  }
  out += "; gripper: ";
  out += scene.gripper_open ? "open" : "closed";
  return out;
}

SceneState scene_from_json(const json& j) {
  SceneState scene;
  if (j.contains("objects")) {
    for (const auto& o : j.at("objects")) {
      scene.objects.push_back({o.at("name").get<std::string>(), o.at("position").get<Vec3>()});
    }
  }
  scene.gripper_open = j.value("gripper_open", true);
  return scene;
}

json scene_to_json(const SceneState& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) objects.push_back({{"name", o.name}, {"position", o.position}});
  return json{{"objects", std::move(objects)}, {"gripper_open", scene.gripper_open}};
}

SceneState demo_scene(const Demonstration& demo) {
  SceneState scene;
  if (demo.metadata.is_object() && demo.metadata.contains("scene_objects")) {
    scene = scene_from_json(json{{"objects", demo.metadata.at("scene_objects")}});
  }
  scene.gripper_open = demo.keyframes.empty() || demo.keyframes.front().gripper_state == 1;
  return scene;
}

std::string build_query_block(std::string_view instruction, std::string_view scene_state_text,
                              const SkillSequence& plan) {
  std::string out;
  out += "Instruction: ";
  out += instruction;
  out += "\nObservation: ";
  out += scene_state_text;
  out += "\nPlan: ";
  out += plan.empty() ? "(none)" : format_plan(plan);
  return out;
}

std::string format_demo(const Demonstration& demo, const CodecConfig& codec) {
  std::string out = build_query_block(demo.instruction,
                                      format_scene_state(demo_scene(demo), codec), demo.skills);
  const std::size_t steps = std::min(demo.skills.size(), demo.actions.size());
  for (std::size_t k = 0; k < steps; ++k) {
    out += "\n" + std::to_string(k + 1) + ". " + format_skill(demo.skills[k]) + ": " +
           format_action(demo.actions[k]);
  }
  return out;
}

const std::string& build_system_prompt() {
  static const std::string text =
      "You control a robot arm by predicting discrete end-effector actions.\n"
      "Each demonstration below gives an instruction, an observation of the scene "
      "(object voxel coordinates and gripper state), a plan of atomic skills, and the "
      "numbered steps that executed it. Every step pairs an atomic skill label such as "
      "Grasp[obj] or Place[obj, target] with the action that realizes it.\n"
      "An action is a list of seven integers [x, y, z, roll, pitch, yaw, gripper]: "
      "three voxel indices for the position, three Euler-angle bins for the orientation, "
      "and gripper 1 for open or 0 for closed.\n"
      "Use the skill labels to understand what each action accomplishes and how skills "
      "compose, then solve the final task, which has no steps yet.\n"
      "For the final task, output only the action sequence: one seven-integer list per "
      "line, in execution order, with no skill labels, numbering, or explanation.";
  return text;
}

std::string PromptBundle::user_text() const {
  const std::string delimiter = "\n" + std::string(kBlockDelimiter) + "\n";
  std::string out;
  for (const auto& block : demo_blocks) {
    out += block;
    out += delimiter;
  }
  out += query_block;
  out += "\n";
  return out;
}

std::string PromptBundle::render() const { return system_text + "\n\n" + user_text(); }

PromptBundle assemble_prompt(const std::vector<const Demonstration*>& dynamic_demos,
                             const std::vector<const Demonstration*>& coverage_demos,
                             std::string_view instruction, std::string_view scene_state_text,
                             const SkillSequence& plan, const CodecConfig& codec,
                             std::size_t max_chars) {
  PromptBundle bundle;
  bundle.system_text = build_system_prompt();
  for (const auto* demo : dynamic_demos) bundle.demo_blocks.push_back(format_demo(*demo, codec));
  for (const auto* demo : coverage_demos) bundle.demo_blocks.push_back(format_demo(*demo, codec));
  bundle.dynamic_count = dynamic_demos.size();
  bundle.coverage_count = coverage_demos.size();
  bundle.query_block = build_query_block(instruction, scene_state_text, plan);
  if (max_chars > 0 && bundle.total_chars() > max_chars) {
    throw Error(ErrorCode::kPromptTooLong, "prompt has " + std::to_string(bundle.total_chars()) +
                                               " characters, cap is " + std::to_string(max_chars));
  }
  return bundle;
}

ParsedResponse parse_action_response(std::string_view text, const CodecConfig& codec,
                                     bool strict) {
  ParsedResponse out;
  const std::array<int, 7> upper{codec.bins_per_axis - 1, codec.bins_per_axis - 1,
                                 codec.bins_per_axis - 1, codec.rotation_bins() - 1,
                                 codec.rotation_bins() - 1, codec.rotation_bins() - 1,
                                 1};
  std::size_t group = 0;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string_view::npos) {
    const auto close = text.find_first_of("[]", pos + 1);
    if (close == std::string_view::npos) break;
    if (text[close] == '[') {  // unbalanced; restart at the inner bracket
      pos = close;
      continue;
    }
    const auto body = text.substr(pos + 1, close - pos - 1);
    pos = close + 1;
    const auto values = integer_list(body);
    if (!values) continue;
    const std::size_t index = group++;
    if (values->size() != 7) {
      out.events.push_back({ParseEvent::Kind::kSkip, index,
                            "group with " + std::to_string(values->size()) + " integers skipped"});
      continue;
    }
    std::array<int, 7> clipped{};
    for (std::size_t i = 0; i < 7; ++i) {
      const long long v = (*values)[i];
      const long long c = std::clamp<long long>(v, 0, upper[i]);
      if (c != v) {
        const std::string detail = "element " + std::to_string(i) + " value " + std::to_string(v) +
                                   " clipped to " + std::to_string(c);
        if (strict) throw Error(ErrorCode::kActionOutOfRange, detail);
        out.events.push_back({ParseEvent::Kind::kClip, index, detail});
      }
      clipped[i] = static_cast<int>(c);
    }
    out.actions.push_back(DiscreteAction::from_array(clipped));
  }
  if (out.actions.empty()) {
    throw Error(ErrorCode::kNoActionsFound, "response contains no 7-integer action");
  }
  return out;
}

}  // namespace dnr
