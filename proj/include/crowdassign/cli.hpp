#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdassign/anchors.hpp"
#include "crowdassign/assign.hpp"
#include "crowdassign/config.hpp"
#include "crowdassign/dataset.hpp"
#include "crowdassign/metrics.hpp"
#include "crowdassign/parallel.hpp"
#include "crowdassign/report.hpp"
#include "crowdassign/scene.hpp"

namespace crowdassign {

struct CliOptions {
  std::optional<std::uint64_t> seed;  // overrides config seeds.base
  std::string out_dir = "out";
  std::string format = "json";  // json | csv | svg
};

namespace detail {

inline std::uint64_t base_seed(const HarnessConfig& cfg, const CliOptions& opt) {
  return opt.seed.value_or(cfg.seeds.base);
}

inline void ensure_out_dir(const CliOptions& opt) {
  std::filesystem::create_directories(opt.out_dir);
}

inline std::string out_path(const CliOptions& opt, const std::string& name) {
  return (std::filesystem::path(opt.out_dir) / name).string();
}

/// Loss-aware assignment over the non-ignore GTs only, with labels and
/// stage-1 sets mapped back to original GT indices.
inline Assignment lla_assign_scene(const Scene& scene, const AnchorSet& anchors,
                                   const Predictions& preds, const LlaConfig& lla) {
  std::vector<int> keep;
  GroundTruthSet active;
  for (std::size_t i = 0; i < scene.gts.size(); ++i) {
    if (scene.gts.ignore[i]) continue;
    keep.push_back(static_cast<int>(i));
    active.push_back(scene.gts.boxes[i], scene.gts.classes[i], false);
  }
  const CostMatrix c = cost_matrix(preds, active, anchors, lla);
  Assignment sub = lla_assign(restrict(c, active, anchors, lla), lla);

  Assignment out;
  out.labels.assign(sub.labels.size(), kNegative);
  for (std::size_t j = 0; j < sub.labels.size(); ++j)
    if (sub.labels[j] >= 0)
      out.labels[j] = keep[static_cast<std::size_t>(sub.labels[j])];
  out.stage1.assign(scene.gts.size(), {});
  for (std::size_t i = 0; i < sub.stage1.size(); ++i)
    out.stage1[static_cast<std::size_t>(keep[i])] = sub.stage1[i];
  return out;
}

inline Assignment run_assigner(const std::string& name, const HarnessConfig& cfg,
                               const Scene& scene, const AnchorSet& anchors,
                               const Predictions& preds) {
  if (name == "lla") return lla_assign_scene(scene, anchors, preds, cfg.lla);
  if (name == "retinanet")
    return retinanet_assign(anchors, scene.gts, cfg.retinanet.pos_iou,
                            cfg.retinanet.neg_iou);
  if (name == "fcos") return fcos_assign(anchors, scene.gts, cfg.fcos.radius);
  if (name == "atss") return atss_assign(anchors, scene.gts, cfg.atss.top_candidates);
  throw ConfigError("assigner.name", "unknown assigner \"" + name + "\"");
}

/// Fraction of positives assigned to heavily occluded GTs whose centers fall
/// inside those GTs' visible rectangles; returns -1 when no such positive.
inline double occluded_visible_fraction(const Scene& scene, const AnchorSet& anchors,
                                        const Assignment& assignment,
                                        double min_occlusion = 0.5) {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (std::size_t j = 0; j < assignment.labels.size(); ++j) {
    const int gt = assignment.labels[j];
    if (gt < 0) continue;
    const auto i = static_cast<std::size_t>(gt);
    if (scene.occlusion[i] < min_occlusion) continue;
    ++total;
    inside += contains(scene.visible[i], anchors.centers[j]) ? 1 : 0;
  }
  if (total == 0) return -1.0;
  return static_cast<double>(inside) / static_cast<double>(total);
}

/// One seed's trip through the mock training loop: predict, assign, absorb
/// the labels, detect, suppress, match.
struct SeedEval {
  ImageMatches matches;
  double aar = -1.0;  // -1 when undefined (no positives)
  int positives = 0;
  int ambiguous = 0;
  std::vector<AllocationEntry> allocation;
  double occ_vis_fraction = -1.0;
  double mean_neighbor_iou = 0.0;
  double max_occlusion = 0.0;
};

inline SeedEval evaluate_seed(const std::string& assigner, const HarnessConfig& cfg,
                              const AnchorConfig& grid_cfg, std::uint64_t seed,
                              int image_id) {
  const Scene scene = generate_scene(cfg.scene.n_people, cfg.scene.crowd_iou, seed,
                                     cfg.scene.geometry);
  const AnchorSet grid = build_anchor_grid(cfg.scene.geometry.image_w,
                                           cfg.scene.geometry.image_h, grid_cfg);
  MockPredictorConfig pred_cfg = cfg.predictor;
  pred_cfg.seed = seed;
  const Predictions preds = mock_predict(scene, grid, pred_cfg);
  const Assignment assignment = run_assigner(assigner, cfg, scene, grid, preds);

  SeedEval ev;
  ev.positives = static_cast<int>(assignment.positive_count());
  ev.ambiguous = ambiguous_count(assignment.stage1);
  if (ev.positives > 0)
    ev.aar = 100.0 * static_cast<double>(ev.ambiguous) / static_cast<double>(ev.positives);
  ev.allocation = fpn_allocation(assignment, grid, scene.gts);
  ev.occ_vis_fraction = occluded_visible_fraction(scene, grid, assignment);
  ev.mean_neighbor_iou = mean_max_neighbor_iou(scene.gts);
  for (double o : scene.occlusion) ev.max_occlusion = std::max(ev.max_occlusion, o);

  const Predictions trained =
      apply_training_feedback(preds, assignment, scene, grid, cfg.feedback_strength);
  std::vector<Detection> dets =
      detections_from_predictions(trained, cfg.metrics.score_floor, image_id);
  dets = nms(dets, cfg.metrics.nms_iou);
  ev.matches = match_detections(dets, scene.gts, cfg.metrics.match_iou);
  return ev;
}

/// Seed batch evaluated in parallel; slot order (hence every aggregate) is
/// independent of the worker count.
inline std::vector<SeedEval> evaluate_batch(const std::string& assigner,
                                            const HarnessConfig& cfg,
                                            const AnchorConfig& grid_cfg,
                                            std::uint64_t base_seed) {
  std::vector<SeedEval> evals(static_cast<std::size_t>(cfg.seeds.count));
  parallel_for(evals.size(), [&](std::size_t s) {
    evals[s] = evaluate_seed(assigner, cfg, grid_cfg, base_seed + s,
                             static_cast<int>(s));
  });
  return evals;
}

struct BatchSummary {
  double proxy_mr = -1.0;
  double ap = 0.0;
  double recall = 0.0;
  double aar_mean = -1.0;
  double occ_vis_mean = -1.0;
  int stage01_gts = 0;
  int stage4_gts = 0;
  int unassigned_gts = 0;
  std::vector<int> modal_hist;
  double positives_mean = 0.0;
};

inline BatchSummary summarize_batch(const std::vector<SeedEval>& evals, int num_stages) {
  BatchSummary s;
  s.modal_hist.assign(static_cast<std::size_t>(num_stages), 0);
  std::vector<ImageMatches> matches;
  double aar_sum = 0.0;
  int aar_n = 0;
  double occ_sum = 0.0;
  int occ_n = 0;
  double pos_sum = 0.0;
  for (const SeedEval& ev : evals) {
    matches.push_back(ev.matches);
    if (ev.aar >= 0.0) {
      aar_sum += ev.aar;
      ++aar_n;
    }
    if (ev.occ_vis_fraction >= 0.0) {
      occ_sum += ev.occ_vis_fraction;
      ++occ_n;
    }
    pos_sum += static_cast<double>(ev.positives);
    for (const AllocationEntry& e : ev.allocation) {
      if (e.modal_stage < 0) {
        ++s.unassigned_gts;
        continue;
      }
      ++s.modal_hist[static_cast<std::size_t>(e.modal_stage)];
      if (e.modal_stage <= 1) ++s.stage01_gts;
      if (e.modal_stage == num_stages - 1) ++s.stage4_gts;
    }
  }
  s.proxy_mr = log_average_miss_rate(matches);
  s.ap = average_precision(matches);
  s.recall = recall_percent(matches);
  if (aar_n > 0) s.aar_mean = aar_sum / static_cast<double>(aar_n);
  if (occ_n > 0) s.occ_vis_mean = occ_sum / static_cast<double>(occ_n);
  s.positives_mean = pos_sum / static_cast<double>(evals.size());
  return s;
}

inline nlohmann::json summary_to_json(const BatchSummary& s) {
  nlohmann::json j;
  j["proxy_mr"] = jnum(s.proxy_mr);
  j["ap"] = jnum(s.ap);
  j["recall"] = jnum(s.recall);
  j["aar_mean"] = s.aar_mean >= 0.0 ? jnum(s.aar_mean) : nlohmann::json();
  j["occluded_visible_fraction"] =
      s.occ_vis_mean >= 0.0 ? jnum(s.occ_vis_mean) : nlohmann::json();
  j["stage01_gts"] = s.stage01_gts;
  j["stage4_gts"] = s.stage4_gts;
  j["unassigned_gts"] = s.unassigned_gts;
  j["modal_hist"] = s.modal_hist;
  j["positives_mean"] = jnum(s.positives_mean);
  return j;
}

}  // namespace detail

/// Runs the configured assigner on one synthetic scene and reports per-GT
/// positive counts, ambiguity inputs, and stage allocation.
inline int cmd_assign(const HarnessConfig& cfg, const CliOptions& opt) {
  detail::ensure_out_dir(opt);
  const std::uint64_t seed = detail::base_seed(cfg, opt);
  const Scene scene =
      generate_scene(cfg.scene.n_people, cfg.scene.crowd_iou, seed, cfg.scene.geometry);
  const AnchorSet grid = build_anchor_grid(cfg.scene.geometry.image_w,
                                           cfg.scene.geometry.image_h, cfg.anchors);
  MockPredictorConfig pred_cfg = cfg.predictor;
  pred_cfg.seed = seed;
  const Predictions preds = mock_predict(scene, grid, pred_cfg);
  const Assignment assignment = detail::run_assigner(cfg.assigner, cfg, scene, grid, preds);
  const auto allocation = fpn_allocation(assignment, grid, scene.gts);

  if (opt.format == "svg") {
    write_text_file(detail::out_path(opt, "assign_overlay.svg"),
                    scene_overlay_svg(scene, grid, assignment,
                                      cfg.assigner + " seed " + std::to_string(seed)));
    return 0;
  }

  std::vector<int> stage1_sizes(scene.gts.size(), 0);
  std::vector<int> positives(scene.gts.size(), 0);
  for (std::size_t i = 0; i < scene.gts.size(); ++i)
    stage1_sizes[i] = static_cast<int>(assignment.stage1[i].size());
  for (int label : assignment.labels)
    if (label >= 0) ++positives[static_cast<std::size_t>(label)];

  if (opt.format == "csv") {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < scene.gts.size(); ++i) {
      rows.push_back({std::to_string(i), fmt6(scene.gts.boxes[i].area()),
                      fmt6(scene.occlusion[i]), std::to_string(positives[i]),
                      std::to_string(stage1_sizes[i]),
                      std::to_string(allocation[i].modal_stage)});
    }
    write_text_file(detail::out_path(opt, "assign_report.csv"),
                    csv_table({"gt", "area", "occlusion", "positives", "stage1_matches",
                               "modal_stage"},
                              rows));
    return 0;
  }

  nlohmann::json j;
  j["assigner"] = cfg.assigner;
  j["seed"] = seed;
  j["num_anchors"] = grid.size();
  j["positives"] = assignment.positive_count();
  j["negatives"] = assignment.negative_count();
  j["ignored"] = assignment.ignore_count();
  j["ambiguous"] = ambiguous_count(assignment.stage1);
  j["rect_approx_error"] = jnum(scene.rect_approx_error);
  j["gts"] = nlohmann::json::array();
  for (std::size_t i = 0; i < scene.gts.size(); ++i) {
    nlohmann::json g;
    g["area"] = jnum(scene.gts.boxes[i].area());
    g["occlusion"] = jnum(scene.occlusion[i]);
    g["positives"] = positives[i];
    g["stage1_matches"] = stage1_sizes[i];
    g["modal_stage"] = allocation[i].modal_stage;
    j["gts"].push_back(g);
  }
  write_text_file(detail::out_path(opt, "assign_report.json"), j.dump(2) + "\n");
  return 0;
}

/// Sweeps the per-GT match budget K and reports proxy detection metrics per
/// value; the spread across K is the headline number.
inline int cmd_sweep_k(const HarnessConfig& cfg, const CliOptions& opt, int k_lo,
                       int k_hi) {
  if (k_lo < 1 || k_hi < k_lo)
    throw ConfigError("sweep-k", "need 1 <= k_lo <= k_hi");
  detail::ensure_out_dir(opt);
  const std::uint64_t seed = detail::base_seed(cfg, opt);

  std::vector<detail::BatchSummary> summaries;
  for (int k = k_lo; k <= k_hi; ++k) {
    HarnessConfig kcfg = cfg;
    kcfg.assigner = "lla";
    kcfg.lla.k = k;
    const auto evals = detail::evaluate_batch("lla", kcfg, kcfg.anchors, seed);
    summaries.push_back(
        detail::summarize_batch(evals, static_cast<int>(kcfg.anchors.strides.size())));
  }

  double mr_min = summaries.front().proxy_mr;
  double mr_max = mr_min;
  for (const auto& s : summaries) {
    mr_min = std::min(mr_min, s.proxy_mr);
    mr_max = std::max(mr_max, s.proxy_mr);
  }
  const double spread = mr_min > 0.0 ? (mr_max - mr_min) / mr_min : 0.0;

  if (opt.format == "json") {
    nlohmann::json j;
    j["metric"] = "proxy_mr";
    j["seed"] = seed;
    j["relative_spread"] = jnum(spread);
    j["rows"] = nlohmann::json::array();
    for (std::size_t n = 0; n < summaries.size(); ++n) {
      nlohmann::json row = detail::summary_to_json(summaries[n]);
      row["k"] = k_lo + static_cast<int>(n);
      j["rows"].push_back(row);
    }
    write_text_file(detail::out_path(opt, "sweep_k.json"), j.dump(2) + "\n");
    return 0;
  }

  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 0; n < summaries.size(); ++n) {
    const auto& s = summaries[n];
    rows.push_back({std::to_string(k_lo + static_cast<int>(n)), fmt6(s.proxy_mr),
                    fmt6(s.ap), fmt6(s.recall),
                    s.aar_mean >= 0.0 ? fmt6(s.aar_mean) : "n/a",
                    fmt6(s.positives_mean)});
  }
  write_text_file(detail::out_path(opt, "sweep_k.csv"),
                  csv_table({"k", "proxy_mr", "ap", "recall", "aar_mean",
                             "positives_mean"},
                            rows));
  return 0;
}

/// Side-by-side assigner comparison over one seeded scene batch. Every
/// assigner runs on its own natural grid; metrics that depend on anchors
/// (AAR, allocation) are therefore about the assignment rule, not the grid.
inline int cmd_compare(const HarnessConfig& cfg, const CliOptions& opt,
                       const std::vector<std::string>& assigners) {
  if (assigners.size() < 2) throw ConfigError("compare", "need at least two assigners");
  detail::ensure_out_dir(opt);
  const std::uint64_t seed = detail::base_seed(cfg, opt);

  std::vector<detail::BatchSummary> summaries;
  std::vector<std::vector<AllocationEntry>> allocation_groups;
  for (const std::string& name : assigners) {
    HarnessConfig acfg = cfg;
    acfg.assigner = name;
    const AnchorConfig grid_cfg =
        cfg.anchors_overridden && name == cfg.assigner ? cfg.anchors
                                                       : natural_grid_for(name);
    const auto evals = detail::evaluate_batch(name, acfg, grid_cfg, seed);
    summaries.push_back(
        detail::summarize_batch(evals, static_cast<int>(grid_cfg.strides.size())));
    std::vector<AllocationEntry> pooled;
    for (const auto& ev : evals)
      pooled.insert(pooled.end(), ev.allocation.begin(), ev.allocation.end());
    allocation_groups.push_back(std::move(pooled));
  }

  // Directional flag: the loss-aware assigner should not be more ambiguous
  // than any baseline in the lineup.
  bool aar_ordering_ok = true;
  for (std::size_t a = 0; a < assigners.size(); ++a) {
    if (assigners[a] != "lla" || summaries[a].aar_mean < 0.0) continue;
    for (std::size_t b = 0; b < assigners.size(); ++b) {
      if (b == a || summaries[b].aar_mean < 0.0) continue;
      if (summaries[a].aar_mean > summaries[b].aar_mean) aar_ordering_ok = false;
    }
  }

  if (opt.format == "svg") {
    write_text_file(
        detail::out_path(opt, "compare_allocation.svg"),
        allocation_scatter_svg(allocation_groups, assigners,
                               static_cast<int>(cfg.anchors.strides.size())));
    return 0;
  }
  if (opt.format == "csv") {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t a = 0; a < assigners.size(); ++a) {
      const auto& s = summaries[a];
      rows.push_back({assigners[a], fmt6(s.proxy_mr), fmt6(s.ap), fmt6(s.recall),
                      s.aar_mean >= 0.0 ? fmt6(s.aar_mean) : "n/a",
                      s.occ_vis_mean >= 0.0 ? fmt6(s.occ_vis_mean) : "n/a",
                      std::to_string(s.stage01_gts), std::to_string(s.stage4_gts)});
    }
    write_text_file(detail::out_path(opt, "compare.csv"),
                    csv_table({"assigner", "proxy_mr", "ap", "recall", "aar_mean",
                               "occluded_visible_fraction", "stage01_gts", "stage4_gts"},
                              rows));
    return 0;
  }

  nlohmann::json j;
  j["seed"] = seed;
  j["seeds"] = cfg.seeds.count;
  j["aar_ordering_ok"] = aar_ordering_ok;
  j["assigners"] = nlohmann::json::array();
  for (std::size_t a = 0; a < assigners.size(); ++a) {
    nlohmann::json row = detail::summary_to_json(summaries[a]);
    row["name"] = assigners[a];
    j["assigners"].push_back(row);
  }
  write_text_file(detail::out_path(opt, "compare.json"), j.dump(2) + "\n");
  return 0;
}

/// Renders the assignment at several maturity steps of the mock detector,
/// one overlay per step, plus a visible-fraction trajectory.
inline int cmd_evolve(const HarnessConfig& cfg, const CliOptions& opt,
                      const std::vector<double>& schedule) {
  detail::ensure_out_dir(opt);
  if (schedule.empty()) return 0;
  const std::uint64_t seed = detail::base_seed(cfg, opt);
  const Scene scene =
      generate_scene(cfg.scene.n_people, cfg.scene.crowd_iou, seed, cfg.scene.geometry);
  const AnchorConfig grid_cfg =
      cfg.anchors_overridden ? cfg.anchors : natural_grid_for("lla");
  const AnchorSet grid = build_anchor_grid(cfg.scene.geometry.image_w,
                                           cfg.scene.geometry.image_h, grid_cfg);
  MockPredictorConfig pred_cfg = cfg.predictor;
  pred_cfg.seed = seed;
  const auto snapshots = evolution_snapshots(scene, grid, pred_cfg, schedule, cfg.lla);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 0; n < snapshots.size(); ++n) {
    char name[64];
    std::snprintf(name, sizeof(name), "evolve_%02zu.svg", n);
    write_text_file(detail::out_path(opt, name),
                    scene_overlay_svg(scene, grid, snapshots[n],
                                      "maturity " + fmt6(schedule[n])));
    std::size_t inside = 0;
    std::size_t total = 0;
    for (std::size_t j = 0; j < snapshots[n].labels.size(); ++j) {
      const int gt = snapshots[n].labels[j];
      if (gt < 0) continue;
      ++total;
      inside += contains(scene.visible[static_cast<std::size_t>(gt)], grid.centers[j])
                    ? 1
                    : 0;
    }
    rows.push_back({fmt6(schedule[n]), std::to_string(total),
                    total > 0 ? fmt6(static_cast<double>(inside) /
                                     static_cast<double>(total))
                              : "n/a"});
  }
  write_text_file(detail::out_path(opt, "evolve_trajectory.csv"),
                  csv_table({"maturity", "positives", "visible_fraction"}, rows));
  return 0;
}

/// Scores an external detection dump against annotations: match per image,
/// then MR / AP / Recall over the whole set.
inline int cmd_eval(const HarnessConfig& cfg, const CliOptions& opt,
                    const std::string& gt_path, const std::string& det_path) {
  detail::ensure_out_dir(opt);
  const auto records = parse_odgt_file(gt_path);
  std::ifstream det_in(det_path);
  if (!det_in) throw std::runtime_error("cannot open detections file: " + det_path);
  nlohmann::json det_doc;
  det_in >> det_doc;
  const auto per_image = parse_detections(det_doc, records);

  std::vector<ImageMatches> matches(records.size());
  parallel_for(records.size(), [&](std::size_t r) {
    const Scene scene = record_to_scene(records[r]);
    matches[r] = match_detections(per_image[r], scene.gts, cfg.metrics.match_iou);
  });

  const double mr = log_average_miss_rate(matches);
  const double ap = average_precision(matches);
  const double rec = recall_percent(matches);

  if (opt.format == "csv") {
    write_text_file(detail::out_path(opt, "eval_report.csv"),
                    csv_table({"images", "mr", "ap", "recall"},
                              {{std::to_string(records.size()), fmt6(mr), fmt6(ap),
                                fmt6(rec)}}));
    return 0;
  }
  nlohmann::json j;
  j["images"] = records.size();
  j["mr"] = jnum(mr);
  j["ap"] = jnum(ap);
  j["recall"] = jnum(rec);
  write_text_file(detail::out_path(opt, "eval_report.json"), j.dump(2) + "\n");
  return 0;
}

}  // namespace crowdassign
