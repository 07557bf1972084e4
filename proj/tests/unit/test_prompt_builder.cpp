#include <doctest.h>

#include <regex>

#include "dnr/error.hpp"
#include "dnr/prompt_builder.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dnr;
using fixtures::make_demo;
using fixtures::seq;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    out.push_back(text.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

const std::regex kStepLine(R"(^(\d+)\. (.+): (\[[-\d, ]+\])$)");
const std::regex kSevenInts(R"(\[\s*-?\d+(\s*,?\s*-?\d+){6}\s*\])");

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_SUITE("prompt_builder") {
  TEST_CASE("format_demo has three header lines and one line per step") {
    auto demo = make_demo("d", seq({"Reach[cup]", "Grasp[cup]"}));
    demo.metadata = {{"scene_objects", {{{"name", "cup"}, {"position", {0.0, 0.1, 0.5}}}}}};
    const auto lines = lines_of(format_demo(demo, CodecConfig{}));
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "Instruction: do d");
    CHECK(lines[1] == "Observation: objects: cup@(50,60,50); gripper: open");
    CHECK(lines[2] == "Plan: Reach[cup] -> Grasp[cup]");
    CHECK(lines[3] == "1. Reach[cup]: [10, 20, 30, 36, 36, 36, 1]");
    for (std::size_t k = 3; k < 5; ++k) {
      std::smatch m;
      REQUIRE(std::regex_match(lines[k], m, kStepLine));
      CHECK(parse_skill(m[2].str()) == demo.skills[k - 3]);
      const auto parsed = parse_action_response(m[3].str(), CodecConfig{});
      CHECK(parsed.actions == std::vector<DiscreteAction>{demo.actions[k - 3]});
      CHECK_NOTHROW(decode_action(parsed.actions[0], CodecConfig{}));
    }
  }

  TEST_CASE("scene text") {
    SceneState s;
    CHECK(format_scene_state(s, CodecConfig{}) == "objects: (none); gripper: open");
    s.objects = {{"a", {-0.5, -0.5, 0.0}}, {"b", {0.5, 0.5, 1.0}}};
    s.gripper_open = false;
    CHECK(format_scene_state(s, CodecConfig{}) == "objects: a@(0,0,0); b@(99,99,99); gripper: closed");
    CHECK(scene_from_json(scene_to_json(s)).objects.size() == 2);
  }

  TEST_CASE("system prompt") {
    const std::string& a = build_system_prompt();
    CHECK(&a == &build_system_prompt());
    CHECK(a == build_system_prompt());
    CHECK(a.find("output only") != std::string::npos);
    CHECK_FALSE(std::regex_search(a, kSevenInts));
    CHECK(a.find("Instruction:") == std::string::npos);
  }

  TEST_CASE("query block") {
    const std::string q = build_query_block("stack the cups", "objects: (none); gripper: open", {});
    const auto lines = lines_of(q);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "Instruction: stack the cups");
    CHECK(lines[2] == "Plan: (none)");
    CHECK_FALSE(std::regex_search(q, kSevenInts));
    CHECK(build_query_block("x", "y", seq({"Reach[a]"})).find("Plan: Reach[a]") != std::string::npos);
  }

  TEST_CASE("assembled prompt keeps order and round-trips actions") {
    oracle::Rng rng(71);
    const std::vector<const char*> labels = {"Reach[a]", "Grasp[a]", "Move[a]", "Release[a]"};
    std::vector<Demonstration> demos;
    for (int i = 0; i < 6; ++i) {
      SkillSequence s;
      const int n = rng.integer(1, 5);
      for (int k = 0; k < n; ++k) s.push_back(parse_skill(labels[rng.integer(0, 3)]));
      auto d = make_demo("d" + std::to_string(i), s);
      for (auto& a : d.actions) {
        a = DiscreteAction::from_array({rng.integer(0, 99), rng.integer(0, 99), rng.integer(0, 99),
                                        rng.integer(0, 71), rng.integer(0, 71), rng.integer(0, 71),
                                        a.gripper});
      }
      demos.push_back(d);
    }
    const std::vector<const Demonstration*> dyn{&demos[3], &demos[0], &demos[5]};
    const std::vector<const Demonstration*> cov{&demos[1]};
    const PromptBundle b = assemble_prompt(dyn, cov, "go", "objects: (none); gripper: open",
                                           seq({"Reach[a]"}), CodecConfig{});
    CHECK(b.dynamic_count == 3);
    CHECK(b.coverage_count == 1);
    REQUIRE(b.demo_blocks.size() == 4);
    CHECK(b.demo_blocks[0].find("Instruction: do d3") == 0);
    CHECK(b.demo_blocks[3].find("Instruction: do d1") == 0);

    std::vector<DiscreteAction> expected;
    for (const auto* d : {dyn[0], dyn[1], dyn[2], cov[0]}) {
      expected.insert(expected.end(), d->actions.begin(), d->actions.end());
    }
    const auto parsed = parse_action_response(b.user_text(), CodecConfig{});
    CHECK(parsed.actions == expected);
    CHECK(parsed.events.empty());

    const std::string text = b.render();
    CHECK(text.starts_with(build_system_prompt()));
    CHECK(text == assemble_prompt(dyn, cov, "go", "objects: (none); gripper: open",
                                  seq({"Reach[a]"}), CodecConfig{})
                      .render());
    std::size_t delimiters = 0;
    for (const auto& line : lines_of(text)) delimiters += line == "---";
    CHECK(delimiters == 4);
    CHECK(b.total_chars() == text.size());
    CHECK(code_of([&] {
            assemble_prompt(dyn, cov, "go", "", {}, CodecConfig{}, 100);
          }) == ErrorCode::kPromptTooLong);
  }

  TEST_CASE("parse_action_response examples") {
    const auto two =
        parse_action_response("Step 1: [50, 50, 50, 36, 36, 36, 1]\n[51,50,50,36,36,36,0]", CodecConfig{});
    REQUIRE(two.actions.size() == 2);
    CHECK(two.actions[1] == DiscreteAction::from_array({51, 50, 50, 36, 36, 36, 0}));
    CHECK(code_of([] { parse_action_response("I cannot help.", CodecConfig{}); }) ==
          ErrorCode::kNoActionsFound);
    const auto clipped = parse_action_response("[200, 50, 50, 36, 36, 36, 1]", CodecConfig{});
    CHECK(clipped.actions[0].translation[0] == 99);
    REQUIRE(clipped.events.size() == 1);
    CHECK(clipped.events[0].kind == ParseEvent::Kind::kClip);
  }

  TEST_CASE("parse tolerates prose, fences and whitespace separators") {
    const std::string text =
        "Sure.\n```\n[1 2 3 4 5 6 1]\n[1, 2, 3]\n[a, b]\n[7,8,9,10,11,12,0]\n```\nDone [x]";
    const auto r = parse_action_response(text, CodecConfig{});
    REQUIRE(r.actions.size() == 2);
    CHECK(r.actions[0] == DiscreteAction::from_array({1, 2, 3, 4, 5, 6, 1}));
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].kind == ParseEvent::Kind::kSkip);
    CHECK(r.events[0].group == 1);
  }

  TEST_CASE("gripper and angles clip into range, strict mode rejects") {
    const auto r = parse_action_response("[0, 0, 0, 80, -3, 71, 5]", CodecConfig{});
    CHECK(r.actions[0] == DiscreteAction::from_array({0, 0, 0, 71, 0, 71, 1}));
    CHECK(r.events.size() == 3);
    CHECK(code_of([] { parse_action_response("[0, 0, 0, 80, 0, 0, 1]", CodecConfig{}, true); }) ==
          ErrorCode::kActionOutOfRange);
    CHECK(parse_action_response("[0, 0, 0, 0, 0, 0, 1]", CodecConfig{}, true).actions.size() == 1);
  }

  TEST_CASE("parsed values always land in range") {
    oracle::Rng rng(72);
    for (int trial = 0; trial < 500; ++trial) {
      std::string text = "[";
      for (int i = 0; i < 7; ++i) {
        if (i) text += ", ";
        text += std::to_string(rng.integer(-1000, 1000));
      }
      text += "]";
      const auto a = parse_action_response(text, CodecConfig{}).actions.at(0);
      for (int v : a.translation) CHECK((v >= 0 && v <= 99));
      for (int v : a.rotation) CHECK((v >= 0 && v <= 71));
      CHECK((a.gripper == 0 || a.gripper == 1));
    }
  }
}
