#include "dnr/skill_collection.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dnr/error.hpp"
#include "dnr/parallel.hpp"

namespace dnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool closes(GripperTransition t) { return t.first == 1 && t.second == 0; }
bool opens(GripperTransition t) { return t.first == 0 && t.second == 1; }

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

std::string transition_text(GripperTransition t) {
  if (closes(t)) return "open -> closed";
  if (opens(t)) return "closed -> open";
  return t.first == 1 ? "open throughout" : "closed throughout";
}

// Rewrites arguments to the scene's spelling. Returns the offending name when
// an argument is not a scene object.
std::optional<std::string> canonicalize_objects(SkillLabel& label,
                                                const std::vector<std::string>& objects) {
  if (objects.empty()) return std::nullopt;
  for (auto& arg : label.args) {
    const std::string lowered = ascii_lower(arg);
    auto it = std::find_if(objects.begin(), objects.end(), [&](const std::string& o) {
      return ascii_lower(o) == lowered;
    });
    if (it == objects.end()) return arg;
    arg = *it;
  }
  return std::nullopt;
}

template <typename Map>
std::vector<std::pair<std::string, std::size_t>> sorted_counts(const Map& counts) {
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  return out;
}

}  // namespace

std::string build_annotation_prompt(const AnnotationRequest& request,
                                    std::string_view feedback) {
  std::vector<std::string> movable(request.movable_objects.begin(),
                                   request.movable_objects.end());
  std::ostringstream out;
  out << "Label the robot action segment between the two keyframe images with one "
         "atomic skill.\n"
      << "Format: Verb[object] or Verb[movable_object, target_object].\n"
      << "Verbs: Reach, Move, Grasp, Release, Place, Insert, Close, Push, Pull, Lift, "
         "Rotate.\n"
      << "Task instruction: " << request.instruction << "\n"
      << "Gripper: " << transition_text(request.gripper_transition) << "\n"
      << "Objects: " << join(request.object_names, ", ") << "\n"
      << "Movable objects: " << join(movable, ", ") << "\n"
      << "Answer with the label only.";
  if (!feedback.empty()) {
    out << "\nYour previous answer was rejected: " << feedback;
  }
  return out.str();
}

SkillLabel constrain_label(const SkillLabel& raw, GripperTransition transition,
                           const ObjectSet& movable_objects) {
  SkillLabel label = raw;
  if (closes(transition) || opens(transition)) {
    auto it = std::find_if(raw.args.begin(), raw.args.end(), [&](const std::string& arg) {
      return is_movable(arg, movable_objects);
    });
    if (it == raw.args.end()) {
      throw Error(ErrorCode::kNoMovableArgument,
                  format_skill(raw) + " names no movable object for a forced " +
                      (closes(transition) ? "Grasp" : "Release"));
    }
    label = SkillLabel{closes(transition) ? "Grasp" : "Release", {*it}};
  }
  const bool open_throughout = transition.first == 1 && transition.second == 1;
  return normalize_skill(label, movable_objects, open_throughout);
}

std::optional<SkillLabel> extract_label(std::string_view text) {
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    // Tolerate list markers and code fences around the label.
    while (!line.empty() && (line.front() == '-' || line.front() == '*' ||
                             line.front() == '`' || line.front() == '"')) {
      line = trim(line.substr(1));
    }
    while (!line.empty() && (line.back() == '`' || line.back() == '"' || line.back() == '.')) {
      line = trim(line.substr(0, line.size() - 1));
    }
    if (!line.empty()) {
      try {
        return parse_skill(line);
      } catch (const Error&) {
      }
    }
    start = end + 1;
  }
  return std::nullopt;
}

std::optional<std::string> fallback_object(const SegmentedEpisode& episode,
                                           bool require_movable) {
  const std::string instruction = ascii_lower(episode.instruction);
  std::optional<std::string> mentioned;
  for (const auto& name : episode.object_names) {
    if (!is_movable(name, episode.movable_objects)) continue;
    if (instruction.find(ascii_lower(name)) == std::string::npos) continue;
    if (!mentioned || name < *mentioned) mentioned = name;
  }
  if (mentioned) return mentioned;
  for (const auto& name : episode.object_names) {
    if (is_movable(name, episode.movable_objects)) return name;
  }
  if (!episode.movable_objects.empty()) return *episode.movable_objects.begin();
  if (!require_movable && !episode.object_names.empty()) return episode.object_names.front();
  return std::nullopt;
}

AnnotatedEpisode annotate_demo(const SegmentedEpisode& episode, Annotator& annotator) {
  if (episode.keyframes.size() != episode.actions.size() + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "episode '" + episode.id + "' needs one more keyframe than actions");
  }
  AnnotatedEpisode result;
  result.pairs.reserve(episode.actions.size());

  for (std::size_t k = 0; k < episode.actions.size(); ++k) {
    AnnotationRequest request{episode.keyframes[k].image_ref,
                              episode.keyframes[k + 1].image_ref,
                              {episode.keyframes[k].gripper_state,
                               episode.keyframes[k + 1].gripper_state},
                              episode.object_names,
                              episode.movable_objects,
                              episode.instruction};

    auto attempt = [&](std::string_view feedback, std::string& why) -> std::optional<SkillLabel> {
      AnnotatorResult answer;
      try {
        answer = annotator.annotate(request, feedback);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kTransportError || e.code() == ErrorCode::kAuthMissing) {
          throw Error(ErrorCode::kAnnotatorUnavailable,
                      "episode '" + episode.id + "' segment " + std::to_string(k) + ": " +
                          e.what());
        }
        throw;
      }
      auto label = extract_label(answer.raw_label_text);
      if (!label) {
        why = "'" + answer.raw_label_text + "' is not of the form Verb[object] or "
              "Verb[object1, object2]";
        return std::nullopt;
      }
      if (auto unknown = canonicalize_objects(*label, episode.object_names)) {
        why = "'" + *unknown + "' is not one of the scene objects (" +
              join(episode.object_names, ", ") + ")";
        return std::nullopt;
      }
      SkillLabel constrained;
      try {
        constrained = constrain_label(*label, request.gripper_transition, episode.movable_objects);
      } catch (const Error& e) {
        why = e.what();
        return std::nullopt;
      }
      const auto t = request.gripper_transition;
      if ((constrained.verb == "Grasp" && !closes(t)) ||
          (constrained.verb == "Release" && !opens(t))) {
        why = format_skill(constrained) + " does not match the gripper (" + transition_text(t) + ")";
        return std::nullopt;
      }
      return constrained;
    };

    std::string why;
    auto label = attempt("", why);
    if (!label) {
      result.events.push_back({k, "retry", why});
      std::string why_again;
      label = attempt(why, why_again);
      if (!label) {
        const auto t = request.gripper_transition;
        const bool forced = closes(t) || opens(t);
        const auto object = fallback_object(episode, forced);
        if (!object) {
          throw Error(ErrorCode::kUnparseableAnnotation,
                      "episode '" + episode.id + "' segment " + std::to_string(k) +
                          ": annotation failed twice and no fallback object exists");
        }
        const char* verb = closes(t) ? "Grasp" : opens(t) ? "Release" : "Move";
        label = SkillLabel{verb, {*object}};
        result.events.push_back({k, "fallback", why_again + "; using " + format_skill(*label)});
      }
    }
    result.pairs.push_back({std::move(*label), episode.actions[k]});
  }
  return result;
}

CorpusStats corpus_stats(const DemoLibrary& library) {
  std::map<std::string, std::size_t> verbs;
  std::map<std::string, std::size_t> labels;
  CorpusStats stats;
  for (const auto& demo : library.demos) {
    for (const auto& skill : demo.skills) {
      ++verbs[skill.verb];
      ++labels[format_skill(skill)];
      ++stats.total_segments;
    }
  }
  stats.verbs = sorted_counts(verbs);
  stats.labels = sorted_counts(labels);
  return stats;
}

RawEpisode raw_episode_from_json(const json& j) {
  RawEpisode ep;
  ep.id = j.at("id").get<std::string>();
  ep.task_name = j.at("task_name").get<std::string>();
  ep.instruction = j.at("instruction").get<std::string>();
  ep.object_names = j.value("object_names", std::vector<std::string>{});
  for (const auto& m : j.value("movable_objects", std::vector<std::string>{})) {
    ep.movable_objects.insert(m);
  }
  for (const auto& f : j.at("frames")) {
    TrajectoryFrame frame;
    frame.step = f.at("step").get<int>();
    frame.joint_velocities = f.value("joint_velocities", std::vector<double>{});
    frame.gripper_state = f.at("gripper_state").get<int>();
    frame.pose.position = f.at("position").get<Vec3>();
    const auto q = f.at("quaternion").get<std::array<double, 4>>();
    frame.pose.orientation = Quaternion{q[0], q[1], q[2], q[3]};
    frame.pose.gripper = frame.gripper_state;
    frame.timestamp = f.value("timestamp", 0.0);
    frame.image_ref = f.value("image_ref", std::string());
    ep.frames.push_back(std::move(frame));
  }
  if (j.contains("embedding")) ep.embedding = j.at("embedding").get<std::vector<double>>();
  ep.scene_objects = j.value("scene_objects", json::array());
  return ep;
}

json raw_episode_to_json(const RawEpisode& ep) {
  json frames = json::array();
  for (const auto& f : ep.frames) {
    const auto& q = f.pose.orientation;
    frames.push_back({{"step", f.step},
                      {"joint_velocities", f.joint_velocities},
                      {"gripper_state", f.gripper_state},
                      {"position", f.pose.position},
                      {"quaternion", std::array<double, 4>{q.w, q.x, q.y, q.z}},
                      {"timestamp", f.timestamp},
                      {"image_ref", f.image_ref}});
  }
  json j{{"id", ep.id},
         {"task_name", ep.task_name},
         {"instruction", ep.instruction},
         {"object_names", ep.object_names},
         {"movable_objects", ep.movable_objects},
         {"frames", std::move(frames)},
         {"scene_objects", ep.scene_objects}};
  if (ep.embedding) j["embedding"] = *ep.embedding;
  return j;
}

SegmentedEpisode segment_episode(const RawEpisode& episode, const CodecConfig& codec,
                                 double velocity_threshold) {
  const auto steps = extract_keyframes(episode.frames, velocity_threshold);
  SegmentedEpisode seg{episode.id,          episode.task_name,       episode.instruction,
                       episode.object_names, episode.movable_objects, {}, {}};
  std::size_t cursor = 0;
  for (int step : steps) {
    while (episode.frames[cursor].step != step) ++cursor;
    const auto& frame = episode.frames[cursor];
    seg.keyframes.push_back({frame.step, frame.image_ref, frame.gripper_state, std::nullopt});
    if (seg.keyframes.size() > 1) {
      ContinuousControl target = frame.pose;
      target.gripper = frame.gripper_state;
      seg.actions.push_back(encode_action(target, codec));
    }
  }
  return seg;
}

CollectResult collect_library(const fs::path& raw_dir, const fs::path& output_dir,
                              Annotator& annotator, const CollectOptions& options) {
  options.codec.check();
  const fs::path episodes_dir = raw_dir / "episodes";
  if (!fs::is_directory(episodes_dir)) {
    throw Error(ErrorCode::kIoError, episodes_dir.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(episodes_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<RawEpisode> episodes;
  for (const auto& file : files) {
    try {
      episodes.push_back(raw_episode_from_json(json::parse(read_text_file(file))));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, file.string() + ": " + e.what());
    }
  }

  std::vector<Demonstration> demos(episodes.size());
  std::vector<std::vector<AnnotationEvent>> events(episodes.size());
  parallel_for(episodes.size(), options.parallelism, [&](std::size_t i) {
    const RawEpisode& ep = episodes[i];
    SegmentedEpisode seg = segment_episode(ep, options.codec, options.velocity_threshold);
    // The annotator sees images where they live in the raw directory.
    SegmentedEpisode for_annotator = seg;
    for (auto& kf : for_annotator.keyframes) {
      if (!kf.image_ref.empty()) kf.image_ref = (raw_dir / kf.image_ref).string();
    }
    AnnotatedEpisode annotated = annotate_demo(for_annotator, annotator);
    events[i] = std::move(annotated.events);

    Demonstration demo;
    demo.id = ep.id;
    demo.task_name = ep.task_name;
    demo.instruction = ep.instruction;
    for (auto& kf : seg.keyframes) {
      if (!kf.image_ref.empty()) {
        const fs::path source = raw_dir / kf.image_ref;
        const fs::path relative = fs::path("images") / ep.id / source.filename();
        if (fs::exists(source)) {
          fs::create_directories((output_dir / relative).parent_path());
          fs::copy_file(source, output_dir / relative, fs::copy_options::overwrite_existing);
        }
        kf.image_ref = relative.generic_string();
      }
    }
    demo.keyframes = std::move(seg.keyframes);
    for (auto& pair : annotated.pairs) {
      demo.skills.push_back(std::move(pair.skill));
      demo.actions.push_back(pair.action);
    }
    if (ep.embedding) demo.embedding = l2_normalized(*ep.embedding);
    demo.metadata = json{{"objects", ep.object_names},
                         {"movable_objects", ep.movable_objects},
                         {"scene_objects", ep.scene_objects}};
    demos[i] = std::move(demo);
  });

  CollectResult result;
  result.library.codec = options.codec;
  result.library.manifest = {options.created, "collect:" + raw_dir.generic_string()};
  result.library.demos = std::move(demos);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    for (auto& e : events[i]) result.events.emplace_back(episodes[i].id, std::move(e));
  }

  ValidationReport report = validate_library(result.library);
  if (!report.ok()) throw ValidationError(std::move(report));
  save_library(result.library, output_dir);
  return result;
}

}  // namespace dnr
