// crowd-assign: label-assignment harness for dense pedestrian detection.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdassign/cli.hpp"
#include "crowdassign/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Label-assignment harness for crowded pedestrian scenes"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global flags after the subcommand name

  std::string config_path;
  std::uint64_t seed_flag = 0;
  crowdassign::CliOptions opt;
  app.add_option("--config", config_path, "Harness configuration JSON");
  auto* seed_opt = app.add_option("--seed", seed_flag, "Override the base RNG seed");
  app.add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  app.add_option("--format", opt.format, "Report format")
      ->check(CLI::IsMember({"json", "csv", "svg"}))
      ->capture_default_str();

  auto* assign = app.add_subcommand("assign", "Run one assigner on a synthetic scene");

  auto* sweep = app.add_subcommand("sweep-k", "Sweep the per-GT match budget K");
  int k_min = 1;
  int k_max = 16;
  sweep->add_option("--k-min", k_min, "Smallest K")->capture_default_str();
  sweep->add_option("--k-max", k_max, "Largest K")->capture_default_str();

  auto* compare = app.add_subcommand("compare", "Compare assigners on a seed batch");
  std::vector<std::string> assigners{"lla", "retinanet"};
  compare->add_option("--assigners", assigners, "Assigners to compare (>= 2)")
      ->capture_default_str();

  auto* evolve = app.add_subcommand("evolve", "Snapshot assignments over maturities");
  std::vector<double> schedule{0.0, 0.25, 0.5, 0.75, 1.0};
  evolve->add_option("--schedule", schedule, "Nondecreasing maturity steps")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Score a detection dump against annotations");
  std::string gt_path;
  std::string det_path;
  eval->add_option("--gt", gt_path, "Annotation file (JSON lines)")->required();
  eval->add_option("--dets", det_path, "Detections JSON array")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    crowdassign::HarnessConfig cfg =
        config_path.empty() ? crowdassign::HarnessConfig{}
                            : crowdassign::load_config(config_path);
    if (seed_opt->count() > 0) opt.seed = seed_flag;

    if (*assign) return crowdassign::cmd_assign(cfg, opt);
    if (*sweep) return crowdassign::cmd_sweep_k(cfg, opt, k_min, k_max);
    if (*compare) return crowdassign::cmd_compare(cfg, opt, assigners);
    if (*evolve) return crowdassign::cmd_evolve(cfg, opt, schedule);
    if (*eval) return crowdassign::cmd_eval(cfg, opt, gt_path, det_path);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const crowdassign::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid arguments: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
