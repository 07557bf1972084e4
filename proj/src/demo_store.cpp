#include "dnr/demo_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "dnr-demo-library";
constexpr int kManifestVersion = 1;

double max_abs(const std::vector<double>& values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

std::string dump_canonical(const json& j) { return j.dump(2) + "\n"; }

json parse_json_file(const fs::path& path, ErrorCode on_error) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(on_error, path.string() + ": " + e.what());
  }
}

std::set<std::string> lowered_names(const json& metadata, const char* key) {
  std::set<std::string> out;
  if (!metadata.is_object() || !metadata.contains(key)) return out;
  for (const auto& name : metadata.at(key)) {
    if (name.is_string()) out.insert(ascii_lower(name.get<std::string>()));
  }
  return out;
}

}  // namespace

std::vector<int> extract_keyframes(std::span<const TrajectoryFrame> trajectory,
                                   double velocity_threshold) {
  if (trajectory.empty()) {
    throw Error(ErrorCode::kEmptyTrajectory, "trajectory has no frames");
  }
  std::vector<int> keyframes{trajectory.front().step};
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const auto& prev = trajectory[i - 1];
    const auto& cur = trajectory[i];
    if (cur.step <= prev.step) {
      throw Error(ErrorCode::kInvalidArgument,
                  "trajectory steps must be strictly increasing (step " +
                      std::to_string(cur.step) + ")");
    }
    const bool gripper_changed = cur.gripper_state != prev.gripper_state;
    const bool motion_stopped = max_abs(prev.joint_velocities) >= velocity_threshold &&
                                max_abs(cur.joint_velocities) < velocity_threshold;
    if (gripper_changed || motion_stopped) keyframes.push_back(cur.step);
  }
  if (keyframes.back() != trajectory.back().step) {
    keyframes.push_back(trajectory.back().step);
  }
  return keyframes;
}

const Demonstration* DemoLibrary::find(std::string_view id) const {
  auto it = std::find_if(demos.begin(), demos.end(),
                         [&](const Demonstration& d) { return d.id == id; });
  return it == demos.end() ? nullptr : &*it;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyId: return "empty-id";
    case ViolationKind::kDuplicateId: return "duplicate-id";
    case ViolationKind::kSkillActionLength: return "skill-action-length";
    case ViolationKind::kKeyframeCount: return "keyframe-count";
    case ViolationKind::kStepOrder: return "step-order";
    case ViolationKind::kEmptyImageRef: return "empty-image-ref";
    case ViolationKind::kMissingFile: return "missing-file";
    case ViolationKind::kKeyframeGripperValue: return "keyframe-gripper-value";
    case ViolationKind::kTranslationRange: return "translation-range";
    case ViolationKind::kRotationRange: return "rotation-range";
    case ViolationKind::kActionGripperValue: return "action-gripper-value";
    case ViolationKind::kMalformedSkill: return "malformed-skill";
    case ViolationKind::kGraspWithoutClose: return "grasp-without-close";
    case ViolationKind::kReleaseWithoutOpen: return "release-without-open";
    case ViolationKind::kUnlabeledGripperTransition: return "unlabeled-gripper-transition";
    case ViolationKind::kNonMovableTarget: return "non-movable-target";
    case ViolationKind::kUnknownObject: return "unknown-object";
    case ViolationKind::kEmbeddingInvalid: return "embedding-invalid";
    case ViolationKind::kEmbeddingDimension: return "embedding-dimension";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

void ValidationReport::merge(const ValidationReport& other) {
  violations.insert(violations.end(), other.violations.begin(), other.violations.end());
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  out << violations.size() << " violation(s)";
  for (const auto& v : violations) {
    out << "\n  [" << v.demo_id << "] " << dnr::to_string(v.kind) << ": " << v.detail;
  }
  return out.str();
}

ValidationReport validate(const Demonstration& demo, const CodecConfig& codec) {
  ValidationReport report;
  auto flag = [&](ViolationKind kind, std::string detail) {
    report.violations.push_back({demo.id, kind, std::move(detail)});
  };

  if (demo.id.empty()) flag(ViolationKind::kEmptyId, "demonstration id is empty");
  if (demo.skills.size() != demo.actions.size()) {
    flag(ViolationKind::kSkillActionLength,
         std::to_string(demo.skills.size()) + " skills vs " +
             std::to_string(demo.actions.size()) + " actions");
  }
  if (demo.keyframes.size() != demo.actions.size() + 1) {
    flag(ViolationKind::kKeyframeCount,
         std::to_string(demo.keyframes.size()) + " keyframes for " +
             std::to_string(demo.actions.size()) + " actions");
  }

  for (std::size_t k = 0; k < demo.keyframes.size(); ++k) {
    const auto& kf = demo.keyframes[k];
    if (k > 0 && kf.step <= demo.keyframes[k - 1].step) {
      flag(ViolationKind::kStepOrder, "keyframe " + std::to_string(k) + " step " +
                                          std::to_string(kf.step) + " not increasing");
    }
    if (kf.image_ref.empty()) {
      flag(ViolationKind::kEmptyImageRef, "keyframe " + std::to_string(k));
    }
    if (kf.gripper_state != 0 && kf.gripper_state != 1) {
      flag(ViolationKind::kKeyframeGripperValue,
           "keyframe " + std::to_string(k) + " gripper " + std::to_string(kf.gripper_state));
    }
  }

  const int rot_bins = codec.rotation_bins();
  for (std::size_t k = 0; k < demo.actions.size(); ++k) {
    const auto& a = demo.actions[k];
    const std::string where = "action " + std::to_string(k) + " " + format_action(a);
    for (int axis = 0; axis < 3; ++axis) {
      if (a.translation[axis] < 0 || a.translation[axis] >= codec.bins_per_axis) {
        flag(ViolationKind::kTranslationRange, where);
        break;
      }
    }
    for (int axis = 0; axis < 3; ++axis) {
      if (a.rotation[axis] < 0 || a.rotation[axis] >= rot_bins) {
        flag(ViolationKind::kRotationRange, where);
        break;
      }
    }
    if (a.gripper != 0 && a.gripper != 1) flag(ViolationKind::kActionGripperValue, where);
  }

  const auto objects = lowered_names(demo.metadata, "objects");
  const auto movable = lowered_names(demo.metadata, "movable_objects");
  const bool has_objects = demo.metadata.is_object() && demo.metadata.contains("objects");
  const bool has_movable =
      demo.metadata.is_object() && demo.metadata.contains("movable_objects");

  for (std::size_t k = 0; k < demo.skills.size(); ++k) {
    const auto& skill = demo.skills[k];
    const std::string where = "skill " + std::to_string(k) + " " + format_skill(skill);
    try {
      if (parse_skill(format_skill(skill)) != skill) {
        flag(ViolationKind::kMalformedSkill, where + " is not canonical");
      }
    } catch (const Error& e) {
      flag(ViolationKind::kMalformedSkill, where + ": " + e.what());
    }

    if (has_objects) {
      for (const auto& arg : skill.args) {
        if (!objects.contains(ascii_lower(arg))) {
          flag(ViolationKind::kUnknownObject, where + ": '" + arg + "' not in scene objects");
        }
      }
    }
    const bool grasp_or_release = skill.verb == "Grasp" || skill.verb == "Release";
    if (has_movable && grasp_or_release) {
      for (const auto& arg : skill.args) {
        if (!movable.contains(ascii_lower(arg))) {
          flag(ViolationKind::kNonMovableTarget, where + ": '" + arg + "' is not movable");
        }
      }
    }

    if (k + 1 >= demo.keyframes.size()) continue;
    const int before = demo.keyframes[k].gripper_state;
    const int after = demo.keyframes[k + 1].gripper_state;
    const bool closes = before == 1 && after == 0;
    const bool opens = before == 0 && after == 1;
    if (skill.verb == "Grasp" && !closes) {
      flag(ViolationKind::kGraspWithoutClose, where);
    } else if (skill.verb == "Release" && !opens) {
      flag(ViolationKind::kReleaseWithoutOpen, where);
    } else if ((closes && skill.verb != "Grasp") || (opens && skill.verb != "Release")) {
      flag(ViolationKind::kUnlabeledGripperTransition,
           where + " spans gripper " + std::to_string(before) + "->" + std::to_string(after));
    }
  }

  if (demo.embedding) {
    const auto& e = *demo.embedding;
    double norm2 = 0.0;
    bool finite = true;
    for (double v : e) {
      finite = finite && std::isfinite(v);
      norm2 += v * v;
    }
    if (e.empty() || !finite || norm2 == 0.0) {
      flag(ViolationKind::kEmbeddingInvalid, "embedding is empty, zero or non-finite");
    } else if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
      flag(ViolationKind::kEmbeddingInvalid, "embedding is not unit norm");
    }
  }
  return report;
}

ValidationReport validate_library(const DemoLibrary& library) {
  ValidationReport report;
  std::map<std::string, int> seen;
  std::optional<std::size_t> dim;
  for (const auto& demo : library.demos) {
    if (++seen[demo.id] == 2) {
      report.violations.push_back(
          {demo.id, ViolationKind::kDuplicateId, "id '" + demo.id + "' appears more than once"});
    }
    report.merge(validate(demo, library.codec));
    if (demo.embedding && !demo.embedding->empty()) {
      if (!dim) {
        dim = demo.embedding->size();
      } else if (*dim != demo.embedding->size()) {
        report.violations.push_back(
            {demo.id, ViolationKind::kEmbeddingDimension,
             std::to_string(demo.embedding->size()) + " vs library " + std::to_string(*dim)});
      }
    }
  }
  return report;
}

std::vector<double> l2_normalized(std::vector<double> values) {
  double norm2 = 0.0;
  for (double v : values) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (values.empty() || !std::isfinite(norm) || norm == 0.0) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a zero or non-finite vector");
  }
  if (std::abs(norm - 1.0) <= 1e-12) return values;
  for (double& v : values) v /= norm;
  return values;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

json codec_to_json(const CodecConfig& codec) {
  return json{{"bins_per_axis", codec.bins_per_axis},
              {"angle_resolution_deg", codec.angle_resolution_deg},
              {"bounds", {{"min", codec.bounds.min}, {"max", codec.bounds.max}}},
              {"euler_convention", std::string(to_string(codec.euler_convention))}};
}

CodecConfig codec_from_json(const json& j) {
  CodecConfig codec;
  codec.bins_per_axis = j.value("bins_per_axis", codec.bins_per_axis);
  codec.angle_resolution_deg = j.value("angle_resolution_deg", codec.angle_resolution_deg);
  if (j.contains("bounds")) {
    codec.bounds.min = j.at("bounds").at("min").get<Vec3>();
    codec.bounds.max = j.at("bounds").at("max").get<Vec3>();
  }
  if (j.contains("euler_convention")) {
    codec.euler_convention =
        parse_euler_convention(j.at("euler_convention").get<std::string>());
  }
  codec.check();
  return codec;
}

json demo_to_json(const Demonstration& demo) {
  json keyframes = json::array();
  for (const auto& kf : demo.keyframes) {
    json k{{"step", kf.step}, {"image_ref", kf.image_ref}, {"gripper_state", kf.gripper_state}};
    if (kf.embedding_ref) k["embedding_ref"] = *kf.embedding_ref;
    keyframes.push_back(std::move(k));
  }
  json actions = json::array();
  for (const auto& a : demo.actions) actions.push_back(a.to_array());
  json skills = json::array();
  for (const auto& s : demo.skills) skills.push_back(format_skill(s));
  return json{{"id", demo.id},
              {"task_name", demo.task_name},
              {"instruction", demo.instruction},
              {"keyframes", std::move(keyframes)},
              {"actions", std::move(actions)},
              {"skills", std::move(skills)},
              {"metadata", demo.metadata.is_null() ? json::object() : demo.metadata}};
}

Demonstration demo_from_json(const json& j) {
  const std::string id = j.is_object() ? j.value("id", std::string("<unknown>")) : "<unknown>";
  std::string field = "id";
  try {
    Demonstration demo;
    demo.id = j.at("id").get<std::string>();
    field = "task_name";
    demo.task_name = j.at("task_name").get<std::string>();
    field = "instruction";
    demo.instruction = j.at("instruction").get<std::string>();
    field = "keyframes";
    for (const auto& k : j.at("keyframes")) {
      KeyframeObservation kf;
      kf.step = k.at("step").get<int>();
      kf.image_ref = k.at("image_ref").get<std::string>();
      kf.gripper_state = k.at("gripper_state").get<int>();
      if (k.contains("embedding_ref")) kf.embedding_ref = k.at("embedding_ref").get<std::string>();
      demo.keyframes.push_back(std::move(kf));
    }
    field = "actions";
    for (const auto& a : j.at("actions")) {
      demo.actions.push_back(DiscreteAction::from_array(a.get<std::array<int, 7>>()));
    }
    field = "skills";
    for (const auto& s : j.at("skills")) {
      demo.skills.push_back(parse_skill(s.get<std::string>()));
    }
    field = "metadata";
    demo.metadata = j.value("metadata", json::object());
    if (!demo.metadata.is_object()) throw Error(ErrorCode::kMalformedRecord, "not an object");
    return demo;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, "demo '" + id + "' field '" + field + "': " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedRecord, "demo '" + id + "' field '" + field + "': " + e.what());
  }
}

DemoLibrary load_library(const fs::path& root, const LoadOptions& options) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorCode::kMissingManifest, manifest_path.string() + " does not exist");
  }
  const json manifest = parse_json_file(manifest_path, ErrorCode::kMalformedRecord);

  DemoLibrary library;
  std::vector<std::string> ids;
  try {
    if (manifest.at("format").get<std::string>() != kManifestFormat) {
      throw Error(ErrorCode::kMalformedRecord, "manifest format is not " +
                                                   std::string(kManifestFormat));
    }
    library.codec = codec_from_json(manifest.at("codec"));
    library.manifest.created = manifest.value("created", std::string());
    library.manifest.source = manifest.value("source", std::string());
    ids = manifest.at("demos").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, "manifest: " + std::string(e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformedRecord) throw;
    throw Error(ErrorCode::kMalformedRecord, "manifest: " + std::string(e.what()));
  }

  ValidationReport file_report;
  for (const auto& id : ids) {
    const fs::path record = root / "demos" / (id + ".json");
    if (!fs::exists(record)) {
      throw Error(ErrorCode::kMalformedRecord, "demo '" + id + "': missing " + record.string());
    }
    Demonstration demo = demo_from_json(parse_json_file(record, ErrorCode::kMalformedRecord));

    const fs::path embedding_path = root / "embeddings" / (id + ".json");
    if (fs::exists(embedding_path)) {
      const json e = parse_json_file(embedding_path, ErrorCode::kMalformedRecord);
      try {
        std::vector<double> values = e.get<std::vector<double>>();
        try {
          demo.embedding = l2_normalized(values);
        } catch (const Error&) {
          demo.embedding = std::move(values);  // reported by validation
        }
      } catch (const json::exception& ex) {
        throw Error(ErrorCode::kMalformedRecord,
                    "demo '" + id + "' field 'embedding': " + ex.what());
      }
    }

    if (options.check_files) {
      for (const auto& kf : demo.keyframes) {
        if (!kf.image_ref.empty() && !fs::exists(root / kf.image_ref)) {
          file_report.violations.push_back(
              {demo.id, ViolationKind::kMissingFile, "image " + kf.image_ref});
        }
        if (kf.embedding_ref && !fs::exists(root / *kf.embedding_ref)) {
          file_report.violations.push_back(
              {demo.id, ViolationKind::kMissingFile, "embedding " + *kf.embedding_ref});
        }
      }
    }
    library.demos.push_back(std::move(demo));
  }

  ValidationReport report = validate_library(library);
  report.merge(file_report);
  if (!report.ok()) throw ValidationError(std::move(report));
  return library;
}

void save_library(const DemoLibrary& library, const fs::path& root) {
  std::vector<const Demonstration*> sorted;
  for (const auto& d : library.demos) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(),
            [](const Demonstration* a, const Demonstration* b) { return a->id < b->id; });

  json ids = json::array();
  for (const auto* d : sorted) ids.push_back(d->id);
  const json manifest{{"format", kManifestFormat},
                      {"version", kManifestVersion},
                      {"created", library.manifest.created},
                      {"source", library.manifest.source},
                      {"codec", codec_to_json(library.codec)},
                      {"demos", std::move(ids)}};

  for (const char* sub : {"demos", "embeddings"}) {
    const fs::path dir = root / sub;
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".json") fs::remove(entry.path());
    }
  }

  write_text_file(root / "manifest.json", dump_canonical(manifest));
  for (const auto* d : sorted) {
    write_text_file(root / "demos" / (d->id + ".json"), dump_canonical(demo_to_json(*d)));
    if (d->embedding) {
      write_text_file(root / "embeddings" / (d->id + ".json"),
                      json(*d->embedding).dump() + "\n");
    }
  }
}

}  // namespace dnr
