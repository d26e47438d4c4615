#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crowdassign/assign.hpp"
#include "crowdassign/geometry.hpp"

namespace crowdassign {

struct Detection {
  Box box;
  double score = 0.0;
  int image_id = 0;
};

/// Greedy descending-score suppression: a detection is dropped when it
/// overlaps an already kept one beyond iou_thr. Equal scores keep their
/// input order, so the result is stable.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thr) {
  if (!(iou_thr > 0.0 && iou_thr < 1.0))
    throw std::invalid_argument("nms: iou_thr must be in (0,1)");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (iou(dets[idx].box, k.box) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[idx]);
  }
  return kept;
}

enum class DetOutcome { kTruePositive, kFalsePositive, kIgnored };

/// One image's detections after greedy matching, in descending score order.
struct ImageMatches {
  std::vector<Detection> dets;        // sorted by (score desc, input order)
  std::vector<DetOutcome> outcomes;   // parallel to dets
  std::vector<int> matched_gt;        // GT index per det, -1 if unmatched
  std::vector<bool> gt_matched;       // per GT
  std::size_t num_gt = 0;             // non-ignore GTs
};

/// Caltech-style greedy matching: detections in descending score order each
/// claim the highest-IoU still-unmatched GT at or above the threshold.
/// Claims on ignore-flagged GTs count neither as hit nor as false positive.
inline ImageMatches match_detections(const std::vector<Detection>& dets,
                                     const GroundTruthSet& gts,
                                     double iou_thr = 0.5) {
  if (!(iou_thr > 0.0 && iou_thr <= 1.0))
    throw std::invalid_argument("match_detections: iou_thr must be in (0,1]");

  ImageMatches out;
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });

  out.gt_matched.assign(gts.size(), false);
  for (std::size_t i = 0; i < gts.size(); ++i) out.num_gt += gts.ignore[i] ? 0 : 1;

  for (std::size_t idx : order) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      if (out.gt_matched[i]) continue;
      const double v = iou(dets[idx].box, gts.boxes[i]);
      if (v >= iou_thr && v > best) {
        best = v;
        best_gt = static_cast<int>(i);
      }
    }
    out.dets.push_back(dets[idx]);
    out.matched_gt.push_back(best_gt);
    if (best_gt < 0) {
      out.outcomes.push_back(DetOutcome::kFalsePositive);
    } else {
      out.gt_matched[static_cast<std::size_t>(best_gt)] = true;
      out.outcomes.push_back(gts.ignore[static_cast<std::size_t>(best_gt)]
                                 ? DetOutcome::kIgnored
                                 : DetOutcome::kTruePositive);
    }
  }
  return out;
}

namespace detail {

/// Pools every image's matched detections into one score-ordered sequence of
/// (threshold, cumulative TP, cumulative FP) steps. Greedy matching is
/// prefix-consistent — the outcome of a detection depends only on
/// higher-scored ones — so per-threshold counts are plain prefix sums.
struct PooledCurve {
  std::vector<double> scores;   // distinct thresholds, descending
  std::vector<std::size_t> tp;  // cumulative at score >= threshold
  std::vector<std::size_t> fp;
  std::size_t num_gt = 0;
  std::size_t num_images = 0;
};

inline PooledCurve pool_matches(const std::vector<ImageMatches>& images) {
  PooledCurve curve;
  curve.num_images = images.size();
  std::vector<std::pair<double, DetOutcome>> all;
  for (const ImageMatches& im : images) {
    curve.num_gt += im.num_gt;
    for (std::size_t d = 0; d < im.dets.size(); ++d)
      if (im.outcomes[d] != DetOutcome::kIgnored)
        all.emplace_back(im.dets[d].score, im.outcomes[d]);
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t d = 0; d < all.size(); ++d) {
    tp += all[d].second == DetOutcome::kTruePositive ? 1 : 0;
    fp += all[d].second == DetOutcome::kFalsePositive ? 1 : 0;
    const bool last_at_score = d + 1 == all.size() || all[d + 1].first != all[d].first;
    if (last_at_score) {
      curve.scores.push_back(all[d].first);
      curve.tp.push_back(tp);
      curve.fp.push_back(fp);
    }
  }
  return curve;
}

}  // namespace detail

/// The nine FPPI sampling points: log-spaced over [1e-2, 1e2].
inline std::vector<double> fppi_reference_points() {
  std::vector<double> refs(9);
  for (int k = 0; k < 9; ++k) refs[static_cast<std::size_t>(k)] = std::pow(10.0, -2.0 + 0.5 * k);
  return refs;
}

struct MissRateCurve {
  std::vector<double> fppi;
  std::vector<double> miss;
};

inline MissRateCurve miss_rate_curve(const std::vector<ImageMatches>& images) {
  const auto pooled = detail::pool_matches(images);
  if (pooled.num_gt == 0)
    throw std::invalid_argument("MR undefined: zero ground-truth objects");
  MissRateCurve curve;
  for (std::size_t s = 0; s < pooled.scores.size(); ++s) {
    curve.fppi.push_back(static_cast<double>(pooled.fp[s]) /
                         static_cast<double>(pooled.num_images));
    curve.miss.push_back(1.0 - static_cast<double>(pooled.tp[s]) /
                                   static_cast<double>(pooled.num_gt));
  }
  return curve;
}

/// Log-average miss rate (percent) over nine FPPI points in [1e-2, 1e2].
/// Step interpolation: each reference takes the last curve point at or below
/// it; references left of the whole curve take the first point. No
/// detections means every reference misses everything: exactly 100.
inline double log_average_miss_rate(const std::vector<ImageMatches>& images) {
  const MissRateCurve curve = miss_rate_curve(images);
  double log_sum = 0.0;
  const auto refs = fppi_reference_points();
  for (double ref : refs) {
    double miss = 1.0;
    if (!curve.fppi.empty()) {
      miss = curve.miss.front();  // clamp below the curve start
      for (std::size_t s = 0; s < curve.fppi.size(); ++s) {
        if (curve.fppi[s] <= ref) miss = curve.miss[s];
      }
    }
    log_sum += std::log(std::max(miss, 1e-10));
  }
  return 100.0 * std::exp(log_sum / static_cast<double>(refs.size()));
}

/// 101-point interpolated average precision (percent) at the matching IoU.
inline double average_precision(const std::vector<ImageMatches>& images) {
  const auto pooled = detail::pool_matches(images);
  if (pooled.num_gt == 0)
    throw std::invalid_argument("AP undefined: zero ground-truth objects");
  std::vector<double> recall;
  std::vector<double> precision;
  for (std::size_t s = 0; s < pooled.scores.size(); ++s) {
    const double tp = static_cast<double>(pooled.tp[s]);
    const double fp = static_cast<double>(pooled.fp[s]);
    recall.push_back(tp / static_cast<double>(pooled.num_gt));
    precision.push_back(tp + fp > 0.0 ? tp / (tp + fp) : 0.0);
  }
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double want = static_cast<double>(r) / 100.0;
    double best = 0.0;
    for (std::size_t s = 0; s < recall.size(); ++s)
      if (recall[s] >= want) best = std::max(best, precision[s]);
    ap += best;
  }
  return 100.0 * ap / 101.0;
}

/// Fraction of non-ignore GTs matched when every detection is kept (percent).
inline double recall_percent(const std::vector<ImageMatches>& images) {
  std::size_t matched = 0;
  std::size_t total = 0;
  for (const ImageMatches& im : images) {
    total += im.num_gt;
    for (std::size_t d = 0; d < im.dets.size(); ++d)
      matched += im.outcomes[d] == DetOutcome::kTruePositive ? 1 : 0;
  }
  if (total == 0) throw std::invalid_argument("recall undefined: zero ground-truth objects");
  return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

/// Share of surviving positives that more than one GT had claimed in stage 1.
struct AarResult {
  double aar = 0.0;        // percent
  int ambiguous = 0;       // anchors in >= 2 stage-1 sets
  int positives = 0;       // unique positives after conflict resolution
  int stage1_slots = 0;    // total stage-1 claims, multiplicity included
};

inline AarResult aar(const Assignment& assignment) {
  AarResult r;
  r.positives = static_cast<int>(assignment.positive_count());
  if (r.positives == 0)
    throw std::invalid_argument("AAR undefined: zero positive anchors");
  r.ambiguous = ambiguous_count(assignment.stage1);
  for (const auto& set : assignment.stage1)
    r.stage1_slots += static_cast<int>(set.size());
  r.aar = 100.0 * static_cast<double>(r.ambiguous) / static_cast<double>(r.positives);
  return r;
}

/// Which pyramid stage carries most of a GT's positives, with its area; the
/// scatter behind level-allocation plots. Ties take the lower (finer) stage;
/// a GT with no positives reports stage -1.
struct AllocationEntry {
  int gt = 0;
  double area = 0.0;
  int modal_stage = -1;
  std::vector<int> per_stage;
};

inline std::vector<AllocationEntry> fpn_allocation(const Assignment& assignment,
                                                   const AnchorSet& anchors,
                                                   const GroundTruthSet& gts) {
  if (assignment.labels.size() != anchors.size())
    throw std::invalid_argument("fpn_allocation: assignment/anchor mismatch");
  std::vector<AllocationEntry> entries(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    entries[i].gt = static_cast<int>(i);
    entries[i].area = gts.boxes[i].area();
    entries[i].per_stage.assign(static_cast<std::size_t>(anchors.num_levels), 0);
  }
  for (std::size_t j = 0; j < assignment.labels.size(); ++j) {
    const int label = assignment.labels[j];
    if (label < 0) continue;
    ++entries[static_cast<std::size_t>(label)]
          .per_stage[static_cast<std::size_t>(anchors.levels[j])];
  }
  for (auto& e : entries) {
    int best = 0;
    for (std::size_t s = 0; s < e.per_stage.size(); ++s) {
      if (e.per_stage[s] > best) {
        best = e.per_stage[s];
        e.modal_stage = static_cast<int>(s);
      }
    }
  }
  return entries;
}

/// Visibility/height band used to ignore out-of-subset GTs during eval,
/// mirroring the usual pedestrian-benchmark splits.
struct SubsetFilter {
  double min_height = 50.0;
  double vis_lo = 0.0;
  double vis_hi = 1.0;

  static SubsetFilter reasonable() { return {50.0, 0.65, 1.0}; }
  static SubsetFilter heavy() { return {50.0, 0.20, 0.65}; }

  /// Marks GTs outside the band as ignore; never removes them, so matching
  /// still discounts detections that land on them.
  GroundTruthSet apply(const GroundTruthSet& gts,
                       const std::vector<double>& visibility) const {
    if (visibility.size() != gts.size())
      throw std::invalid_argument("SubsetFilter: visibility size mismatch");
    GroundTruthSet out = gts;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double h = out.boxes[i].height();
      if (h < min_height || visibility[i] < vis_lo || visibility[i] > vis_hi)
        out.ignore[i] = true;
    }
    return out;
  }
};

/// Every anchor whose score clears the floor becomes a detection candidate.
inline std::vector<Detection> detections_from_predictions(const Predictions& preds,
                                                          double score_floor = 0.05,
                                                          int image_id = 0) {
  std::vector<Detection> dets;
  for (std::size_t j = 0; j < preds.boxes.size(); ++j) {
    const double s = preds.scores(j, 0);
    if (s >= score_floor) dets.push_back({preds.boxes[j], s, image_id});
  }
  return dets;
}

}  // namespace crowdassign
