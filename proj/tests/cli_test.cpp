#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "crowdassign/config.hpp"

using namespace crowdassign;
namespace fs = std::filesystem;

namespace {

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string bin() { return CROWD_ASSIGN_BIN; }

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("crowd_assign_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kSmallConfig = R"({
  "assigner": {"name": "lla", "k": 6},
  "scene": {"n_people": 6, "crowd_iou": 0.3, "image_w": 384, "image_h": 384},
  "seeds": {"base": 2, "count": 3}
})";

}  // namespace

TEST_CASE("config defaults are filled in") {
  const HarnessConfig cfg = parse_config({{"assigner", {{"name", "lla"}}}});
  CHECK(cfg.assigner == "lla");
  CHECK(cfg.lla.k == 10);
  CHECK(cfg.lla.lambda == 1.0);
  CHECK(cfg.scene.n_people == 12);
  CHECK(cfg.seeds.count == 20);
  CHECK(cfg.metrics.nms_iou == 0.5);
  CHECK_FALSE(cfg.anchors_overridden);
  CHECK(cfg.anchors.mode == AnchorMode::kBoxes);
  CHECK(cfg.anchors.anchors_per_location() == 1);
}

TEST_CASE("each assigner gets the grid it was designed for") {
  const HarnessConfig retina =
      parse_config({{"assigner", {{"name", "retinanet"}}}});
  CHECK(retina.anchors.anchors_per_location() == 9);
  CHECK(retina.anchors.base_scale == 4.0);

  const HarnessConfig fcos = parse_config({{"assigner", {{"name", "fcos"}}}});
  CHECK(fcos.anchors.mode == AnchorMode::kPoints);

  const HarnessConfig atss = parse_config({{"assigner", {{"name", "atss"}}}});
  CHECK(atss.anchors.anchors_per_location() == 1);
}

TEST_CASE("unknown keys fail with their dotted path") {
  try {
    parse_config({{"assigner", {{"name", "lla"}}}, {"scene", {{"n_peoople", 5}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "scene.n_peoople");
    CHECK(std::string(e.what()).find("scene.n_peoople") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "lla"}, {"radius", 2.0}}}}),
                  ConfigError);
}

TEST_CASE("structural config mistakes are rejected") {
  // No assigner name at all.
  CHECK_THROWS_AS(parse_config({{"assigner", nlohmann::json::object()}}), ConfigError);
  CHECK_THROWS_AS(parse_config(nlohmann::json::object()), ConfigError);
  // Wrong type.
  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "lla"}, {"k", "ten"}}}}),
                  ConfigError);
  // Unknown assigner.
  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "randomly"}}}}), ConfigError);
  // Out-of-range values.
  CHECK_THROWS_AS(
      parse_config({{"assigner", {{"name", "lla"}}}, {"scene", {{"crowd_iou", 1.0}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config({{"assigner", {{"name", "lla"}, {"inbox_penalty", 1.0}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config({{"assigner", {{"name", "retinanet"}, {"neg_iou", 0.7}}}}),
      ConfigError);
  // Point grids cannot carry the center-sampling assigner's box math.
  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "fcos"}}},
                                {"anchors", {{"mode", "boxes"}}}}),
                  ConfigError);
}

TEST_CASE("anchor overrides are validated") {
  const HarnessConfig cfg = parse_config(
      {{"assigner", {{"name", "lla"}}},
       {"anchors", {{"strides", {8, 16}}, {"base_scale", 6.0}}}});
  CHECK(cfg.anchors_overridden);
  REQUIRE(cfg.anchors.strides.size() == 2);
  CHECK(cfg.anchors.base_scale == 6.0);

  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "lla"}}},
                                {"anchors", {{"strides", nlohmann::json::array()}}}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_config({{"assigner", {{"name", "lla"}}},
                                {"anchors", {{"mode", "spheres"}}}}),
                  ConfigError);
}

TEST_CASE("assign subcommand writes a report and exits cleanly") {
  const fs::path dir = fresh_dir("assign");
  write_file(dir / "cfg.json", kSmallConfig);
  const std::string cmd = bin() + " assign --config " + (dir / "cfg.json").string() +
                          " --seed 5 --out " + (dir / "out").string() +
                          " > /dev/null 2>&1";
  REQUIRE(run(cmd) == 0);
  CHECK(fs::exists(dir / "out" / "assign_report.json"));
}

TEST_CASE("assign output is byte-identical across reruns and thread counts") {
  const fs::path dir = fresh_dir("determinism");
  write_file(dir / "cfg.json", kSmallConfig);
  const std::string base = bin() + " assign --config " + (dir / "cfg.json").string() +
                           " --seed 11 --out ";
  REQUIRE(run("CROWD_ASSIGN_THREADS=1 " + base + (dir / "a").string() +
              " > /dev/null 2>&1") == 0);
  REQUIRE(run("CROWD_ASSIGN_THREADS=4 " + base + (dir / "b").string() +
              " > /dev/null 2>&1") == 0);
  REQUIRE(run(base + (dir / "c").string() + " > /dev/null 2>&1") == 0);
  const std::string a = slurp(dir / "a" / "assign_report.json");
  CHECK(a == slurp(dir / "b" / "assign_report.json"));
  CHECK(a == slurp(dir / "c" / "assign_report.json"));
}

TEST_CASE("csv and svg formats are produced on request") {
  const fs::path dir = fresh_dir("formats");
  write_file(dir / "cfg.json", kSmallConfig);
  const std::string base = bin() + " assign --config " + (dir / "cfg.json").string() +
                           " --seed 5 --out " + (dir / "out").string();
  REQUIRE(run(base + " --format csv > /dev/null 2>&1") == 0);
  CHECK(fs::exists(dir / "out" / "assign_report.csv"));
  REQUIRE(run(base + " --format svg > /dev/null 2>&1") == 0);
  CHECK(fs::exists(dir / "out" / "assign_overlay.svg"));
  const std::string svg = slurp(dir / "out" / "assign_overlay.svg");
  CHECK(svg.find("<svg") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  const fs::path dir = fresh_dir("usage");
  write_file(dir / "cfg.json", kSmallConfig);
  CHECK(run(bin() + " assign --no-such-flag > /dev/null 2>&1") == 2);
  CHECK(run(bin() + " assign --config " + (dir / "missing.json").string() +
            " > /dev/null 2>&1") == 2);
  CHECK(run(bin() + " sweep-k --config " + (dir / "cfg.json").string() +
            " --k-min 0 --out " + (dir / "out").string() + " > /dev/null 2>&1") == 2);
  write_file(dir / "bad.json", "{\"assigner\": {\"name\": \"lla\"}, \"scene\": 7}");
  CHECK(run(bin() + " assign --config " + (dir / "bad.json").string() +
            " > /dev/null 2>&1") == 2);
}

TEST_CASE("compare subcommand reports every requested assigner") {
  const fs::path dir = fresh_dir("compare");
  write_file(dir / "cfg.json", kSmallConfig);
  const std::string cmd = bin() + " compare --config " + (dir / "cfg.json").string() +
                          " --assigners lla retinanet fcos --out " +
                          (dir / "out").string() + " > /dev/null 2>&1";
  REQUIRE(run(cmd) == 0);
  const std::string report = slurp(dir / "out" / "compare.json");
  const nlohmann::json j = nlohmann::json::parse(report);
  REQUIRE(j.contains("assigners"));
  CHECK(j["assigners"].size() == 3);
}

TEST_CASE("eval subcommand scores an external detection dump") {
  const fs::path dir = fresh_dir("eval");
  // Two tiny images, detections that nail one GT and miss the other.
  write_file(dir / "gt.odgt",
             R"({"ID": "i0", "width": 100, "height": 100, "gtboxes": [{"tag": "person", "fbox": [10, 10, 20, 40]}]})"
             "\n"
             R"({"ID": "i1", "width": 100, "height": 100, "gtboxes": [{"tag": "person", "fbox": [40, 10, 20, 40]}]})"
             "\n");
  write_file(dir / "dets.json",
             R"([{"image_id": "i0", "bbox": [10, 10, 20, 40], "score": 0.9}])");
  const std::string cmd = bin() + " eval --gt " + (dir / "gt.odgt").string() +
                          " --dets " + (dir / "dets.json").string() + " --out " +
                          (dir / "out").string() + " > /dev/null 2>&1";
  REQUIRE(run(cmd) == 0);
  const nlohmann::json j =
      nlohmann::json::parse(slurp(dir / "out" / "eval_report.json"));
  CHECK(j["images"] == 2);
  CHECK(j["recall"].get<double>() == Catch::Approx(50.0).margin(1e-9));
}

TEST_CASE("evolve subcommand traces the schedule") {
  const fs::path dir = fresh_dir("evolve");
  write_file(dir / "cfg.json", kSmallConfig);
  const std::string cmd = bin() + " evolve --config " + (dir / "cfg.json").string() +
                          " --schedule 0 0.5 1.0 --format svg --out " +
                          (dir / "out").string() + " > /dev/null 2>&1";
  REQUIRE(run(cmd) == 0);
  CHECK(fs::exists(dir / "out" / "evolve_trajectory.csv"));
  CHECK(fs::exists(dir / "out" / "evolve_00.svg"));
  CHECK(fs::exists(dir / "out" / "evolve_02.svg"));
}
