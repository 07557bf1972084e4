#pragma once

// Seen-task demonstration library: data model, keyframe segmentation,
// structural validation, and the on-disk layout
//
//   <root>/manifest.json
//   <root>/demos/<id>.json
//   <root>/embeddings/<id>.json
//   <root>/images/...

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnr/action_codec.hpp"
#include "dnr/error.hpp"
#include "dnr/skill_grammar.hpp"

namespace dnr {

inline constexpr double kDefaultVelocityThreshold = 0.05;  // rad/s

struct TrajectoryFrame {
  int step = 0;
  std::vector<double> joint_velocities;
  int gripper_state = 1;  // 1 open, 0 closed
  ContinuousControl pose;
  double timestamp = 0.0;
  std::string image_ref;
};

// Keyframe steps: the first frame, every gripper change, every frame where
// max |joint velocity| drops from >= threshold to < threshold, and the last
// frame. Sorted and unique. Throws kEmptyTrajectory, or kInvalidArgument when
// steps are not strictly increasing.
std::vector<int> extract_keyframes(std::span<const TrajectoryFrame> trajectory,
                                   double velocity_threshold = kDefaultVelocityThreshold);

struct KeyframeObservation {
  int step = 0;
  std::string image_ref;
  int gripper_state = 1;
  std::optional<std::string> embedding_ref;

  friend bool operator==(const KeyframeObservation&, const KeyframeObservation&) = default;
};

struct Demonstration {
  std::string id;
  std::string task_name;
  std::string instruction;
  std::vector<KeyframeObservation> keyframes;
  std::vector<DiscreteAction> actions;  // actions[k] moves keyframe k to k+1
  SkillSequence skills;                 // skills[k] labels actions[k]
  std::optional<std::vector<double>> embedding;
  // Optional scene description: "objects", "movable_objects" (name lists)
  // and "scene_objects" ([{name, position}]).
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct LibraryManifest {
  std::string created;
  std::string source;

  friend bool operator==(const LibraryManifest&, const LibraryManifest&) = default;
};

struct DemoLibrary {
  std::vector<Demonstration> demos;
  CodecConfig codec;
  LibraryManifest manifest;

  const Demonstration* find(std::string_view id) const;
  std::size_t size() const { return demos.size(); }

  friend bool operator==(const DemoLibrary&, const DemoLibrary&) = default;
};

enum class ViolationKind {
  kEmptyId,
  kDuplicateId,
  kSkillActionLength,
  kKeyframeCount,
  kStepOrder,
  kEmptyImageRef,
  kMissingFile,
  kKeyframeGripperValue,
  kTranslationRange,
  kRotationRange,
  kActionGripperValue,
  kMalformedSkill,
  kGraspWithoutClose,
  kReleaseWithoutOpen,
  kUnlabeledGripperTransition,
  kNonMovableTarget,
  kUnknownObject,
  kEmbeddingInvalid,
  kEmbeddingDimension,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  std::string demo_id;
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  void merge(const ValidationReport& other);
  std::string to_string() const;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report)
      : Error(ErrorCode::kValidationFailed, report.to_string()),
        report_(std::move(report)) {}

  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

ValidationReport validate(const Demonstration& demo, const CodecConfig& codec);

// Per-demo validation plus library-wide checks (duplicate ids, embedding
// dimension agreement).
ValidationReport validate_library(const DemoLibrary& library);

struct LoadOptions {
  bool check_files = true;  // referenced image/embedding files must exist
};

// Loads, L2-normalizes embeddings and validates. Throws kMissingManifest,
// kMalformedRecord, kIoError or ValidationError.
DemoLibrary load_library(const std::filesystem::path& root, const LoadOptions& options = {});

// Writes the canonical form (sorted keys, sorted demo ids, round-trip float
// formatting). Stale record files under demos/ and embeddings/ are removed.
void save_library(const DemoLibrary& library, const std::filesystem::path& root);

nlohmann::json codec_to_json(const CodecConfig& codec);
CodecConfig codec_from_json(const nlohmann::json& j);

nlohmann::json demo_to_json(const Demonstration& demo);
Demonstration demo_from_json(const nlohmann::json& j);

// Returns the input scaled to unit L2 norm. Vectors already within 1e-12 of
// unit norm are returned unchanged so repeated normalization is a fixed point.
// Throws kZeroVector for zero or non-finite vectors.
std::vector<double> l2_normalized(std::vector<double> values);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dnr
