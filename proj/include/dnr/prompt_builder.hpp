#pragma once

// Skill-augmented in-context prompts. Each demonstration renders as
//
//   Instruction: <text>
//   Observation: objects: cup@(50,50,50); plate@(40,61,50); gripper: open
//   Plan: Reach[cup] -> Grasp[cup]
//   1. Reach[cup]: [50, 50, 52, 36, 36, 36, 1]
//   2. Grasp[cup]: [50, 50, 50, 36, 36, 36, 0]
//
// Blocks are separated by a "---" line; the query block repeats the header
// lines without steps. The model is asked to answer with action lists only.

#include <string>
#include <string_view>
#include <vector>

#include "dnr/action_codec.hpp"
#include "dnr/demo_store.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

struct SceneObject {
  std::string name;
  Vec3 position{};
};

struct SceneState {
  std::vector<SceneObject> objects;
  bool gripper_open = true;
};

// "objects: name@(ix,iy,iz); ...; gripper: open|closed", positions in voxel
// indices of `codec`.
std::string format_scene_state(const SceneState& scene, const CodecConfig& codec);

SceneState scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneState& scene);

// Scene of a stored demonstration: metadata "scene_objects" plus the gripper
// state of the first keyframe.
SceneState demo_scene(const Demonstration& demo);

std::string format_demo(const Demonstration& demo, const CodecConfig& codec);
const std::string& build_system_prompt();
std::string build_query_block(std::string_view instruction, std::string_view scene_state_text,
                              const SkillSequence& plan);

inline constexpr std::string_view kBlockDelimiter = "---";

struct PromptBundle {
  std::string system_text;
  std::vector<std::string> demo_blocks;
  std::string query_block;
  std::size_t dynamic_count = 0;
  std::size_t coverage_count = 0;

  // Demonstration blocks and the query joined by delimiter lines.
  std::string user_text() const;
  // System text, a blank line, then user_text(): the exact text handed to the
  // completer.
  std::string render() const;
  std::size_t total_chars() const { return render().size(); }
};

// Dynamic demonstrations first (retrieval order), then coverage
// demonstrations (fill order). Throws kPromptTooLong when max_chars > 0 and
// the rendered prompt is longer.
PromptBundle assemble_prompt(const std::vector<const Demonstration*>& dynamic_demos,
                             const std::vector<const Demonstration*>& coverage_demos,
                             std::string_view instruction, std::string_view scene_state_text,
                             const SkillSequence& plan, const CodecConfig& codec,
                             std::size_t max_chars = 0);

struct ParseEvent {
  enum class Kind { kClip, kSkip };

  Kind kind;
  std::size_t group = 0;  // index of the bracketed group in the response
  std::string detail;
};

struct ParsedResponse {
  std::vector<DiscreteAction> actions;
  std::vector<ParseEvent> events;
};

// Extracts every bracketed group of exactly seven integers (comma or
// whitespace separated) in order of appearance. Integer groups of another
// length are skipped with an event; out-of-range values are clipped with an
// event, or rejected with kActionOutOfRange when `strict`. Throws
// kNoActionsFound when nothing parses.
ParsedResponse parse_action_response(std::string_view text, const CodecConfig& codec,
                                     bool strict = false);

}  // namespace dnr
