#pragma once

// Offline annotation: segmented demonstrations are labeled segment by segment
// by a pluggable vision-language annotator, then forced through the gripper
// constraints and post-processing rules.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnr/action_codec.hpp"
#include "dnr/demo_store.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

// (g_k, g_{k+1}); 1 open, 0 closed.
using GripperTransition = std::pair<int, int>;

struct AnnotationRequest {
  std::string start_image_ref;
  std::string end_image_ref;
  GripperTransition gripper_transition{1, 1};
  std::vector<std::string> object_names;
  ObjectSet movable_objects;
  std::string instruction;
};

struct AnnotatorResult {
  std::string raw_label_text;
  std::optional<double> confidence;
};

class Annotator {
 public:
  virtual ~Annotator() = default;

  // `feedback` is empty on the first attempt and explains the previous
  // failure on the retry. Transport failures throw Error(kTransportError).
  virtual AnnotatorResult annotate(const AnnotationRequest& request,
                                   std::string_view feedback) = 0;
};

// Text part of the annotation request sent to a chat-style annotator.
std::string build_annotation_prompt(const AnnotationRequest& request,
                                    std::string_view feedback);

// Open->closed forces Grasp and closed->open forces Release on the movable
// argument; the result is then normalized with "gripper open throughout" set
// for (1, 1). Throws kNoMovableArgument when a forced label has no movable
// argument.
SkillLabel constrain_label(const SkillLabel& raw, GripperTransition transition,
                           const ObjectSet& movable_objects);

// First line of `text` that parses as a skill label.
std::optional<SkillLabel> extract_label(std::string_view text);

struct SegmentedEpisode {
  std::string id;
  std::string task_name;
  std::string instruction;
  std::vector<std::string> object_names;
  ObjectSet movable_objects;
  std::vector<KeyframeObservation> keyframes;
  std::vector<DiscreteAction> actions;  // one per segment
};

struct SkillActionPair {
  SkillLabel skill;
  DiscreteAction action;
};

struct AnnotationEvent {
  std::size_t segment = 0;
  std::string kind;  // "retry" or "fallback"
  std::string detail;
};

struct AnnotatedEpisode {
  std::vector<SkillActionPair> pairs;
  std::vector<AnnotationEvent> events;
};

// One annotator call per segment, one retry with feedback on failure, then a
// fallback to the gripper-implied verb or Move. Throws kAnnotatorUnavailable
// on transport failure and kUnparseableAnnotation when no fallback object
// exists.
AnnotatedEpisode annotate_demo(const SegmentedEpisode& episode, Annotator& annotator);

// Object used by fallbacks: lexicographically first movable object that the
// instruction mentions, else the first movable scene object, else (when
// `require_movable` is false) the first scene object.
std::optional<std::string> fallback_object(const SegmentedEpisode& episode,
                                           bool require_movable);

struct CorpusStats {
  std::vector<std::pair<std::string, std::size_t>> verbs;   // count desc, name asc
  std::vector<std::pair<std::string, std::size_t>> labels;  // count desc, label asc
  std::size_t total_segments = 0;
};

CorpusStats corpus_stats(const DemoLibrary& library);

// Raw trajectory input for `collect`: <dir>/episodes/<id>.json.
struct RawEpisode {
  std::string id;
  std::string task_name;
  std::string instruction;
  std::vector<std::string> object_names;
  ObjectSet movable_objects;
  std::vector<TrajectoryFrame> frames;
  std::optional<std::vector<double>> embedding;
  nlohmann::json scene_objects = nlohmann::json::array();
};

RawEpisode raw_episode_from_json(const nlohmann::json& j);
nlohmann::json raw_episode_to_json(const RawEpisode& episode);

// Keyframes from the trajectory; action k targets the pose and gripper state
// of keyframe k + 1.
SegmentedEpisode segment_episode(const RawEpisode& episode, const CodecConfig& codec,
                                 double velocity_threshold);

struct CollectOptions {
  CodecConfig codec;
  double velocity_threshold = kDefaultVelocityThreshold;
  int parallelism = 1;
  std::string created;  // manifest timestamp
};

struct CollectResult {
  DemoLibrary library;
  std::vector<std::pair<std::string, AnnotationEvent>> events;  // (demo id, event)
};

// Reads <raw_dir>/episodes/*.json, annotates, copies referenced images into
// <output_dir>/images/<id>/ and saves the library.
CollectResult collect_library(const std::filesystem::path& raw_dir,
                              const std::filesystem::path& output_dir,
                              Annotator& annotator, const CollectOptions& options);

}  // namespace dnr
