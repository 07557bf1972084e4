#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "dnr/demo_store.hpp"
#include "dnr/skill_grammar.hpp"

namespace fixtures {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dnr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline dnr::SkillSequence seq(std::initializer_list<const char*> labels) {
  dnr::SkillSequence out;
  for (const char* l : labels) out.push_back(dnr::parse_skill(l));
  return out;
}

// A valid demo whose gripper trace follows its Grasp/Release labels.
inline dnr::Demonstration make_demo(const std::string& id, const dnr::SkillSequence& skills,
                                    std::vector<double> embedding = {1.0, 0.0}) {
  dnr::Demonstration d;
  d.id = id;
  d.task_name = "task_" + id;
  d.instruction = "do " + id;
  d.skills = skills;
  int gripper = 1;
  d.keyframes.push_back({0, "images/" + id + "/0.png", gripper, std::nullopt});
  for (std::size_t k = 0; k < skills.size(); ++k) {
    if (skills[k].verb == "Grasp") gripper = 0;
    if (skills[k].verb == "Release") gripper = 1;
    d.keyframes.push_back({static_cast<int>(k + 1) * 5,
                           "images/" + id + "/" + std::to_string(k + 1) + ".png", gripper,
                           std::nullopt});
    dnr::DiscreteAction a;
    a.translation = {10 + static_cast<int>(k), 20, 30};
    a.rotation = {36, 36, 36};
    a.gripper = gripper;
    d.actions.push_back(a);
  }
  if (!embedding.empty()) d.embedding = dnr::l2_normalized(std::move(embedding));
  return d;
}

}  // namespace fixtures
