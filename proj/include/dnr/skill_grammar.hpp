#pragma once

// Atomic skill labels of the form `Verb[obj]` or `Verb[obj1, obj2]`, plus the
// verb-level set algebra used for plan similarity.

#include <compare>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dnr {

struct SkillLabel {
  std::string verb;
  std::vector<std::string> args;

  friend auto operator<=>(const SkillLabel&, const SkillLabel&) = default;
};

using SkillSequence = std::vector<SkillLabel>;
using VerbSet = std::set<std::string>;
using VerbBigram = std::pair<std::string, std::string>;
using BigramSet = std::set<VerbBigram>;
using ObjectSet = std::set<std::string>;

// Open verb vocabulary. Verbs that are not registered parse as
// non-relational (one argument).
class VerbRegistry {
 public:
  // Seeded with Reach, Move, Grasp, Release, Place, Insert, Close, Push,
  // Pull, Lift, Rotate. Place, Insert and Close are relational.
  VerbRegistry();

  static const VerbRegistry& standard();

  // Throws kInvalidArgument for names that are not `[A-Z][A-Za-z]*` and for
  // attempts to make Grasp or Release relational.
  void add(std::string name, bool relational);

  bool contains(std::string_view verb) const;
  bool is_relational(std::string_view verb) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, bool, std::less<>> verbs_;
};

bool is_valid_verb_name(std::string_view name);

// Parses `Verb[obj]` / `Verb[obj1, obj2]`; whitespace around the label and
// around arguments is tolerated. Throws kMalformedLabel or kArityMismatch.
SkillLabel parse_skill(std::string_view text,
                       const VerbRegistry& registry = VerbRegistry::standard());

std::string format_skill(const SkillLabel& label);

// Plans are rendered as canonical labels joined by " -> ".
std::string format_plan(const SkillSequence& seq);
SkillSequence parse_plan(std::string_view text,
                         const VerbRegistry& registry = VerbRegistry::standard());

VerbSet verb_set(const SkillSequence& seq);
BigramSet bigrams(const SkillSequence& seq);

// |a ∩ b| / |a ∪ b|, with two empty sets scoring 1.
template <typename T>
double jaccard(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t united = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

// lambda * J(verbs) + (1 - lambda) * J(bigrams). Object names do not
// participate.
double plan_similarity(const SkillSequence& a, const SkillSequence& b,
                       double lambda);

// Object membership is case-insensitive.
bool is_movable(std::string_view object, const ObjectSet& movable_objects);

// Post-processing of an annotated label:
//  - relational labels are reordered to (movable, target) when exactly one
//    argument is movable;
//  - Grasp/Release must name a movable object (kNonMovableGrasp otherwise);
//  - a relational label performed with the gripper open throughout becomes
//    Move[first argument].
SkillLabel normalize_skill(const SkillLabel& label,
                           const ObjectSet& movable_objects,
                           bool gripper_open_throughout,
                           const VerbRegistry& registry = VerbRegistry::standard());

std::string ascii_lower(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace dnr
