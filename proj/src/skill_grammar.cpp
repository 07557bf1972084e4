#include "dnr/skill_grammar.hpp"

#include <algorithm>
#include <cctype>

#include "dnr/error.hpp"

namespace dnr {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_grasp_or_release(std::string_view verb) {
  return verb == "Grasp" || verb == "Release";
}

}  // namespace

std::string_view trim(std::string_view text) {
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

bool is_valid_verb_name(std::string_view name) {
  if (name.empty()) return false;
  if (!std::isupper(static_cast<unsigned char>(name.front()))) return false;
  return std::all_of(name.begin(), name.end(), is_alpha);
}

VerbRegistry::VerbRegistry() {
  for (const char* verb : {"Reach", "Move", "Grasp", "Release", "Push", "Pull",
                           "Lift", "Rotate"}) {
    verbs_.emplace(verb, false);
  }
  for (const char* verb : {"Place", "Insert", "Close"}) {
    verbs_.emplace(verb, true);
  }
}

const VerbRegistry& VerbRegistry::standard() {
  static const VerbRegistry registry;
  return registry;
}

void VerbRegistry::add(std::string name, bool relational) {
  if (!is_valid_verb_name(name)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid verb name '" + name + "'");
  }
  if (relational && is_grasp_or_release(name)) {
    throw Error(ErrorCode::kInvalidArgument, name + " cannot be relational");
  }
  verbs_[std::move(name)] = relational;
}

bool VerbRegistry::contains(std::string_view verb) const {
  return verbs_.find(verb) != verbs_.end();
}

bool VerbRegistry::is_relational(std::string_view verb) const {
  auto it = verbs_.find(verb);
  return it != verbs_.end() && it->second;
}

std::vector<std::string> VerbRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(verbs_.size());
  for (const auto& [name, relational] : verbs_) out.push_back(name);
  return out;
}

SkillLabel parse_skill(std::string_view text, const VerbRegistry& registry) {
  const std::string_view body = trim(text);
  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::kMalformedLabel,
                 "'" + std::string(body) + "': " + why);
  };

  const auto open = body.find('[');
  if (open == std::string_view::npos) throw malformed("missing '['");
  if (body.back() != ']') throw malformed("missing closing ']'");

  SkillLabel label;
  label.verb = std::string(body.substr(0, open));
  if (!is_valid_verb_name(label.verb)) throw malformed("invalid verb");

  const std::string_view inner = body.substr(open + 1, body.size() - open - 2);
  if (inner.find_first_of("[]") != std::string_view::npos) {
    throw malformed("nested brackets");
  }
  std::size_t start = 0;
  while (true) {
    const auto comma = inner.find(',', start);
    const auto arg = trim(inner.substr(start, comma == std::string_view::npos
                                                  ? std::string_view::npos
                                                  : comma - start));
    if (arg.empty()) throw malformed("empty argument");
    label.args.emplace_back(arg);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (label.args.size() > 2) throw malformed("more than two arguments");

  const std::size_t expected = registry.is_relational(label.verb) ? 2 : 1;
  if (label.args.size() != expected) {
    throw Error(ErrorCode::kArityMismatch,
                "'" + std::string(body) + "': " + label.verb + " takes " +
                    std::to_string(expected) + " argument(s)");
  }
  return label;
}

std::string format_skill(const SkillLabel& label) {
  std::string out = label.verb;
  out += '[';
  for (std::size_t i = 0; i < label.args.size(); ++i) {
    if (i > 0) out += ", ";
    out += label.args[i];
  }
  out += ']';
  return out;
}

std::string format_plan(const SkillSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out += " -> ";
    out += format_skill(seq[i]);
  }
  return out;
}

SkillSequence parse_plan(std::string_view text, const VerbRegistry& registry) {
  SkillSequence seq;
  std::string normalized(text);
  for (std::size_t pos = 0; (pos = normalized.find("->", pos)) != std::string::npos;) {
    normalized.replace(pos, 2, "\n");
  }
  std::replace(normalized.begin(), normalized.end(), ';', '\n');
  std::size_t start = 0;
  while (start <= normalized.size()) {
    auto end = normalized.find('\n', start);
    if (end == std::string::npos) end = normalized.size();
    const auto piece = trim(std::string_view(normalized).substr(start, end - start));
    if (!piece.empty() && piece != "(none)") seq.push_back(parse_skill(piece, registry));
    start = end + 1;
  }
  return seq;
}

VerbSet verb_set(const SkillSequence& seq) {
  VerbSet out;
  for (const auto& label : seq) out.insert(label.verb);
  return out;
}

BigramSet bigrams(const SkillSequence& seq) {
  BigramSet out;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    out.emplace(seq[i].verb, seq[i + 1].verb);
  }
  return out;
}

double plan_similarity(const SkillSequence& a, const SkillSequence& b,
                       double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must lie in [0, 1]");
  }
  return lambda * jaccard(verb_set(a), verb_set(b)) +
         (1.0 - lambda) * jaccard(bigrams(a), bigrams(b));
}

bool is_movable(std::string_view object, const ObjectSet& movable_objects) {
  const std::string needle = ascii_lower(object);
  return std::any_of(movable_objects.begin(), movable_objects.end(),
                     [&](const std::string& m) { return ascii_lower(m) == needle; });
}

SkillLabel normalize_skill(const SkillLabel& label,
                           const ObjectSet& movable_objects,
                           bool gripper_open_throughout,
                           const VerbRegistry& registry) {
  SkillLabel out = label;
  if (registry.is_relational(out.verb) && out.args.size() == 2) {
    const bool first = is_movable(out.args[0], movable_objects);
    const bool second = is_movable(out.args[1], movable_objects);
    if (!first && second) std::swap(out.args[0], out.args[1]);
    if (gripper_open_throughout) {
      out = SkillLabel{"Move", {out.args[0]}};
    }
  }
  if (is_grasp_or_release(out.verb)) {
    for (const auto& arg : out.args) {
      if (!is_movable(arg, movable_objects)) {
        throw Error(ErrorCode::kNonMovableGrasp,
                    format_skill(out) + ": '" + arg + "' is not movable");
      }
    }
  }
  return out;
}

}  // namespace dnr
