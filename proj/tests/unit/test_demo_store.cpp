#include <doctest.h>

#include <algorithm>

#include "dnr/demo_store.hpp"
#include "dnr/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dnr;
using fixtures::make_demo;
using fixtures::seq;
using nlohmann::json;

namespace {

std::vector<TrajectoryFrame> trajectory(int n, double speed, int gripper = 1) {
  std::vector<TrajectoryFrame> frames(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    frames[i].step = i;
    frames[i].joint_velocities = {speed, -speed * 0.5};
    frames[i].gripper_state = gripper;
  }
  return frames;
}

void write_images(const DemoLibrary& lib, const std::filesystem::path& root) {
  for (const auto& d : lib.demos) {
    for (const auto& kf : d.keyframes) write_text_file(root / kf.image_ref, "img");
  }
}

DemoLibrary small_library() {
  DemoLibrary lib;
  lib.manifest = {"2026-01-01T00:00:00Z", "unit"};
  lib.demos.push_back(make_demo("b", seq({"Reach[cup]", "Grasp[cup]", "Release[cup]"}), {0.3, 0.4}));
  lib.demos.push_back(make_demo("a", seq({"Reach[cup]", "Push[cup]"}), {1.0, 1.0}));
  return lib;
}

std::string slurp_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) {
    out += std::filesystem::relative(f, root).string() + "\n" + read_text_file(f);
  }
  return out;
}

}  // namespace

TEST_SUITE("demo_store") {
  TEST_CASE("keyframes from gripper flips, a motion stop and the terminal step") {
    auto frames = trajectory(51, 0.2);
    for (int i = 10; i < 25; ++i) frames[i].gripper_state = 0;
    for (int i = 40; i <= 50; ++i) frames[i].joint_velocities = {0.01, 0.0};
    CHECK(extract_keyframes(frames, 0.05) == std::vector<int>{0, 10, 25, 40, 50});
  }

  TEST_CASE("constant motion gives only the endpoints") {
    CHECK(extract_keyframes(trajectory(30, 0.2), 0.05) == std::vector<int>{0, 29});
  }

  TEST_CASE("a flip on the terminal step is listed once") {
    auto frames = trajectory(20, 0.2);
    frames.back().gripper_state = 0;
    CHECK(extract_keyframes(frames, 0.05) == std::vector<int>{0, 19});
  }

  TEST_CASE("dwell below the threshold does not add keyframes") {
    auto frames = trajectory(30, 0.01);
    CHECK(extract_keyframes(frames, 0.05) == std::vector<int>{0, 29});
  }

  TEST_CASE("keyframe errors") {
    CHECK_THROWS_AS(extract_keyframes({}, 0.05), Error);
    auto frames = trajectory(5, 0.2);
    frames[3].step = 1;
    CHECK_THROWS_AS(extract_keyframes(frames, 0.05), Error);
  }

  TEST_CASE("keyframe properties on random trajectories") {
    oracle::Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = rng.integer(1, 60);
      auto frames = trajectory(n, 0.0);
      int g = 1;
      for (int i = 0; i < n; ++i) {
        frames[i].step = i * 2 + 3;
        if (rng.uniform() < 0.1) g = 1 - g;
        frames[i].gripper_state = g;
        frames[i].joint_velocities = {rng.uniform(0.0, 0.1), rng.uniform(-0.1, 0.1)};
      }
      const auto keys = extract_keyframes(frames, 0.05);
      CHECK(std::is_sorted(keys.begin(), keys.end()));
      CHECK(std::adjacent_find(keys.begin(), keys.end()) == keys.end());
      CHECK(keys.front() == frames.front().step);
      CHECK(keys.back() == frames.back().step);

      // Adding a flip where the gripper was steady keeps every keyframe.
      const int s = rng.integer(0, n - 1);
      if (s > 0 && frames[s].gripper_state == frames[s - 1].gripper_state) {
        auto flipped = frames;
        for (int i = s; i < n; ++i) flipped[i].gripper_state = 1 - flipped[i].gripper_state;
        const auto more = extract_keyframes(flipped, 0.05);
        CHECK(std::includes(more.begin(), more.end(), keys.begin(), keys.end()));
        CHECK(std::binary_search(more.begin(), more.end(), frames[s].step));
      }
    }
  }

  TEST_CASE("validate accepts a consistent demo") {
    const auto demo = make_demo("ok", seq({"Reach[cup]", "Grasp[cup]"}));
    CHECK(demo.keyframes.size() == 3);
    CHECK(validate(demo, CodecConfig{}).ok());
  }

  TEST_CASE("validate reports length mismatches") {
    auto demo = make_demo("bad", seq({"Reach[cup]", "Move[cup]"}));
    demo.skills.push_back(parse_skill("Move[cup]"));
    const auto report = validate(demo, CodecConfig{});
    CHECK(report.has(ViolationKind::kSkillActionLength));
  }

  TEST_CASE("validate reports Grasp without a closing gripper") {
    auto demo = make_demo("g", seq({"Reach[cup]", "Move[cup]"}));
    demo.skills[1] = parse_skill("Grasp[cup]");
    CHECK(validate(demo, CodecConfig{}).has(ViolationKind::kGraspWithoutClose));
  }

  TEST_CASE("validate reports range, object and embedding problems") {
    auto demo = make_demo("r", seq({"Reach[cup]", "Grasp[cup]"}));
    demo.actions[0].translation[1] = 100;
    demo.actions[1].rotation[2] = -1;
    demo.metadata = {{"objects", {"plate"}}, {"movable_objects", json::array()}};
    demo.embedding = std::vector<double>{0.5, 0.5};
    const auto report = validate(demo, CodecConfig{});
    CHECK(report.has(ViolationKind::kTranslationRange));
    CHECK(report.has(ViolationKind::kRotationRange));
    CHECK(report.has(ViolationKind::kUnknownObject));
    CHECK(report.has(ViolationKind::kNonMovableTarget));
    CHECK(report.has(ViolationKind::kEmbeddingInvalid));
  }

  TEST_CASE("save then load is the identity") {
    fixtures::TempDir dir("store");
    DemoLibrary lib = small_library();
    lib.demos[0].metadata = {{"objects", {"cup"}}, {"movable_objects", {"cup"}}};
    save_library(lib, dir.path());
    write_images(lib, dir.path());
    const DemoLibrary back = load_library(dir.path());
    std::sort(lib.demos.begin(), lib.demos.end(),
              [](const auto& x, const auto& y) { return x.id < y.id; });
    CHECK(back == lib);
  }

  TEST_CASE("save, load, save is byte-stable") {
    fixtures::TempDir a("stable-a"), b("stable-b");
    const DemoLibrary lib = small_library();
    save_library(lib, a.path());
    write_images(lib, a.path());
    save_library(load_library(a.path()), b.path());
    CHECK(slurp_tree(a.path()) == slurp_tree(b.path()));
  }

  TEST_CASE("embeddings are normalized on load") {
    fixtures::TempDir dir("norm");
    DemoLibrary lib = small_library();
    save_library(lib, dir.path());
    write_images(lib, dir.path());
    write_text_file(dir / "embeddings/a.json", "[2.0, 0.0]");
    const DemoLibrary back = load_library(dir.path());
    const auto& e = *back.find("a")->embedding;
    CHECK(e[0] == 1.0);
    CHECK(e[1] == 0.0);
  }

  TEST_CASE("duplicate ids fail validation naming the id") {
    fixtures::TempDir dir("dup");
    DemoLibrary lib = small_library();
    save_library(lib, dir.path());
    write_images(lib, dir.path());
    json manifest = json::parse(read_text_file(dir / "manifest.json"));
    manifest["demos"].push_back("a");
    write_text_file(dir / "manifest.json", manifest.dump(2));
    try {
      load_library(dir.path());
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.report().has(ViolationKind::kDuplicateId));
      CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    }
  }

  TEST_CASE("load errors") {
    fixtures::TempDir dir("err");
    try {
      load_library(dir.path());
      FAIL("expected MissingManifest");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingManifest);
    }
    save_library(small_library(), dir.path());
    write_text_file(dir / "demos/b.json", R"({"id": "b", "task_name": 3})");
    try {
      load_library(dir.path(), {.check_files = false});
      FAIL("expected MalformedRecord");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedRecord);
      const std::string msg = e.what();
      CHECK(msg.find("'b'") != std::string::npos);
    }
  }

  TEST_CASE("missing images are reported") {
    fixtures::TempDir dir("img");
    save_library(small_library(), dir.path());
    try {
      load_library(dir.path());
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.report().has(ViolationKind::kMissingFile));
    }
    CHECK_NOTHROW(load_library(dir.path(), {.check_files = false}));
  }

  TEST_CASE("stale records are removed on save") {
    fixtures::TempDir dir("stale");
    DemoLibrary lib = small_library();
    save_library(lib, dir.path());
    lib.demos.pop_back();
    save_library(lib, dir.path());
    CHECK_FALSE(std::filesystem::exists(dir / "demos/a.json"));
    CHECK_FALSE(std::filesystem::exists(dir / "embeddings/a.json"));
  }

  TEST_CASE("l2_normalized") {
    const auto v = l2_normalized({3.0, 4.0});
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(l2_normalized(v) == v);
    CHECK_THROWS_AS(l2_normalized({0.0, 0.0}), Error);
  }
}
