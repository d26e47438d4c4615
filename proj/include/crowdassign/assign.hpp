#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "crowdassign/anchors.hpp"
#include "crowdassign/geometry.hpp"
#include "crowdassign/losses.hpp"
#include "crowdassign/parallel.hpp"

namespace crowdassign {

/// Dense row-major double matrix, just large enough for cost matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Per-anchor class scores (J x N, unit interval) and regressed boxes.
struct Predictions {
  Matrix scores;
  std::vector<Box> boxes;
};

struct GroundTruthSet {
  std::vector<Box> boxes;
  std::vector<int> classes;
  std::vector<bool> ignore;  // ignore regions; never positive sources

  std::size_t size() const { return boxes.size(); }

  void push_back(const Box& b, int cls = 0, bool ign = false) {
    boxes.push_back(b);
    classes.push_back(cls);
    ignore.push_back(ign);
  }
};

enum class ClsLossKind { kFocal, kBce };
enum class RegLossKind { kIou, kGiou, kLogIou };

struct LlaConfig {
  int k = 10;
  double lambda = 1.0;  // regression weight; 1.3 is the anchor-free default
  double inbox_penalty = 100.0;
  ClsLossKind cls_loss = ClsLossKind::kFocal;
  RegLossKind reg_loss = RegLossKind::kIou;
  FocalParams focal{};
  bool keep_components = false;

  void validate() const {
    if (k < 1) throw std::invalid_argument("LlaConfig: k must be >= 1");
    // lambda = 0 is permitted: classification-only costs are degenerate for
    // training but the assignment stays well-defined.
    if (!(lambda >= 0.0)) throw std::invalid_argument("LlaConfig: lambda must be >= 0");
    if (!(inbox_penalty > 10.0))
      throw std::invalid_argument("LlaConfig: inbox_penalty must exceed 10");
    if (focal.alpha < 0.0 || focal.alpha > 1.0)
      throw std::invalid_argument("LlaConfig: focal alpha must be in [0,1]");
    if (focal.gamma < 0.0)
      throw std::invalid_argument("LlaConfig: focal gamma must be >= 0");
  }
};

/// Joint per-pair losses. values = cls + lambda * reg (+ inbox once restricted).
struct CostMatrix {
  Matrix values;
  // Per-term matrices, retained only when LlaConfig::keep_components is set.
  Matrix cls;
  Matrix reg;
  Matrix inbox;
  bool has_components = false;
  bool restricted = false;
};

inline constexpr int kNegative = -1;
inline constexpr int kIgnoreLabel = -2;

/// Per-anchor labels plus the per-GT match sets from before conflict
/// resolution (the stage-1 sets that define ambiguous anchors).
struct Assignment {
  std::vector<int> labels;  // >= 0: positive for that GT index
  std::vector<std::vector<int>> stage1;

  std::size_t positive_count() const {
    std::size_t n = 0;
    for (int l : labels) n += l >= 0 ? 1 : 0;
    return n;
  }
  std::size_t negative_count() const {
    std::size_t n = 0;
    for (int l : labels) n += l == kNegative ? 1 : 0;
    return n;
  }
  std::size_t ignore_count() const {
    std::size_t n = 0;
    for (int l : labels) n += l == kIgnoreLabel ? 1 : 0;
    return n;
  }
};

inline double classification_cost(double score, const LlaConfig& cfg) {
  return cfg.cls_loss == ClsLossKind::kFocal ? focal_loss(score, true, cfg.focal)
                                             : bce_loss(score, true);
}

inline double regression_cost(const Box& pred, const Box& gt, const LlaConfig& cfg) {
  switch (cfg.reg_loss) {
    case RegLossKind::kGiou: return giou_loss(pred, gt);
    case RegLossKind::kLogIou: return log_iou_loss(pred, gt);
    case RegLossKind::kIou: break;
  }
  return iou_loss(pred, gt);
}

/// All-pairs joint loss matrix (I x J). Rows are evaluated independently and
/// the result is identical for any thread count.
inline CostMatrix cost_matrix(const Predictions& preds, const GroundTruthSet& gts,
                              const AnchorSet& anchors, const LlaConfig& cfg) {
  cfg.validate();
  const std::size_t num_anchors = anchors.size();
  if (preds.boxes.size() != num_anchors || preds.scores.rows != num_anchors)
    throw std::invalid_argument("cost_matrix: predictions do not match anchor count");
  const std::size_t num_gt = gts.size();
  if (gts.classes.size() != num_gt || gts.ignore.size() != num_gt)
    throw std::invalid_argument("cost_matrix: inconsistent ground-truth fields");

  CostMatrix out;
  out.values = Matrix(num_gt, num_anchors);
  out.has_components = cfg.keep_components;
  if (cfg.keep_components) {
    out.cls = Matrix(num_gt, num_anchors);
    out.reg = Matrix(num_gt, num_anchors);
  }

  for (std::size_t i = 0; i < num_gt; ++i) {
    if (gts.classes[i] < 0 ||
        static_cast<std::size_t>(gts.classes[i]) >= preds.scores.cols)
      throw std::invalid_argument("cost_matrix: ground-truth class out of range");
  }

  parallel_for(num_gt, [&](std::size_t i) {
    const Box& gt_box = gts.boxes[i];
    const auto cls_idx = static_cast<std::size_t>(gts.classes[i]);
    for (std::size_t j = 0; j < num_anchors; ++j) {
      const double c_cls = classification_cost(preds.scores(j, cls_idx), cfg);
      const double c_reg = regression_cost(preds.boxes[j], gt_box, cfg);
      out.values(i, j) = c_cls + cfg.lambda * c_reg;
      if (cfg.keep_components) {
        out.cls(i, j) = c_cls;
        out.reg(i, j) = c_reg;
      }
    }
  });
  return out;
}

/// Adds the in-box spatial prior: pairs whose anchor center falls outside the
/// GT box are penalized by a constant large enough to rank below every
/// in-box pair.
inline CostMatrix restrict(const CostMatrix& c, const GroundTruthSet& gts,
                           const AnchorSet& anchors, const LlaConfig& cfg) {
  if (c.values.rows != gts.size() || c.values.cols != anchors.size())
    throw std::invalid_argument("restrict: dimension mismatch");
  CostMatrix out = c;
  out.restricted = true;
  if (out.has_components) out.inbox = Matrix(c.values.rows, c.values.cols);
  for (std::size_t i = 0; i < c.values.rows; ++i) {
    const Box& gt_box = gts.boxes[i];
    for (std::size_t j = 0; j < c.values.cols; ++j) {
      if (!contains(gt_box, anchors.centers[j])) {
        out.values(i, j) += cfg.inbox_penalty;
        if (out.has_components) out.inbox(i, j) = cfg.inbox_penalty;
      }
    }
  }
  return out;
}

/// Loss-aware assignment on a restricted cost matrix. Stage 1 marks the K
/// cheapest anchors of every GT as matching; stage 2 gives each multiply
/// matched anchor to its cheapest GT. Ties break toward the lower anchor
/// index, then the lower GT index. Unmatched anchors are negative; no ignore
/// labels are produced.
inline Assignment lla_assign(const CostMatrix& c_r, const LlaConfig& cfg) {
  cfg.validate();
  const std::size_t num_gt = c_r.values.rows;
  const std::size_t num_anchors = c_r.values.cols;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), num_anchors);

  Assignment out;
  out.labels.assign(num_anchors, kNegative);
  out.stage1.assign(num_gt, {});

  std::vector<int> order(num_anchors);
  for (std::size_t i = 0; i < num_gt; ++i) {
    std::iota(order.begin(), order.end(), 0);
    const double* row = c_r.values.data.data() + i * num_anchors;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), [row](int a, int b) {
                        if (row[a] != row[b]) return row[a] < row[b];
                        return a < b;
                      });
    auto& matches = out.stage1[i];
    matches.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(matches.begin(), matches.end());
  }

  // Conflict resolution on the same (restricted) costs.
  std::vector<double> best_cost(num_anchors, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < num_gt; ++i) {
    for (int j : out.stage1[i]) {
      const double cost = c_r.values(i, static_cast<std::size_t>(j));
      if (cost < best_cost[static_cast<std::size_t>(j)]) {
        best_cost[static_cast<std::size_t>(j)] = cost;
        out.labels[static_cast<std::size_t>(j)] = static_cast<int>(i);
      }
    }
  }
  return out;
}

/// Max-IoU assignment with a positive/negative threshold band. Anchors whose
/// best IoU falls inside [neg_thr, pos_thr] are ignored for training.
/// Ignore-flagged GTs are skipped entirely.
inline Assignment retinanet_assign(const AnchorSet& anchors, const GroundTruthSet& gts,
                                   double pos_thr = 0.5, double neg_thr = 0.4) {
  if (!(0.0 <= neg_thr && neg_thr <= pos_thr && pos_thr <= 1.0))
    throw std::invalid_argument("retinanet_assign: need 0 <= neg_thr <= pos_thr <= 1");

  const std::size_t num_anchors = anchors.size();
  const std::size_t num_gt = gts.size();
  Assignment out;
  out.labels.assign(num_anchors, kNegative);
  out.stage1.assign(num_gt, {});

  for (std::size_t j = 0; j < num_anchors; ++j) {
    double best = 0.0;
    int best_gt = kNegative;
    for (std::size_t i = 0; i < num_gt; ++i) {
      if (gts.ignore[i]) continue;
      const double v = iou(anchors.boxes[j], gts.boxes[i]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(i);
      }
      if (v > pos_thr) out.stage1[i].push_back(static_cast<int>(j));
    }
    if (best > pos_thr) {
      out.labels[j] = best_gt;
    } else if (best >= neg_thr) {
      out.labels[j] = kIgnoreLabel;
    }
  }
  return out;
}

/// Regression-range table for point assigners: level l accepts GTs whose
/// max corner distance lies in [64 * 2^(l-1), 64 * 2^l], open-ended at the
/// extremes.
inline std::vector<std::pair<double, double>> default_scale_ranges(int num_levels) {
  std::vector<std::pair<double, double>> ranges;
  double lo = 0.0;
  for (int l = 0; l < num_levels; ++l) {
    const double hi = l + 1 == num_levels
                          ? std::numeric_limits<double>::infinity()
                          : 64.0 * std::pow(2.0, l);
    ranges.emplace_back(lo, hi);
    lo = hi;
  }
  return ranges;
}

/// Center-sampling assignment: a point is a candidate for a GT when it lies
/// inside the GT, within radius * stride of the GT center, and the max
/// regression distance fits its level's range. Conflicts go to the
/// smaller-area GT.
inline Assignment fcos_assign(const AnchorSet& anchors, const GroundTruthSet& gts,
                              double radius = 1.5,
                              std::vector<std::pair<double, double>> scale_ranges = {}) {
  if (anchors.mode != AnchorMode::kPoints)
    throw std::invalid_argument("fcos_assign: requires an anchor-free (point) grid");
  if (scale_ranges.empty()) scale_ranges = default_scale_ranges(anchors.num_levels);
  if (scale_ranges.size() < static_cast<std::size_t>(anchors.num_levels))
    throw std::invalid_argument("fcos_assign: scale range per level required");

  const std::size_t num_anchors = anchors.size();
  const std::size_t num_gt = gts.size();
  Assignment out;
  out.labels.assign(num_anchors, kNegative);
  out.stage1.assign(num_gt, {});

  for (std::size_t j = 0; j < num_anchors; ++j) {
    const Point& p = anchors.centers[j];
    const double reach = radius * anchors.strides[j];
    const auto [range_lo, range_hi] = scale_ranges[static_cast<std::size_t>(anchors.levels[j])];
    double best_area = std::numeric_limits<double>::infinity();
    int best_gt = kNegative;
    for (std::size_t i = 0; i < num_gt; ++i) {
      if (gts.ignore[i]) continue;
      const Box& g = gts.boxes[i];
      if (!contains(g, p)) continue;
      const Point c = g.center();
      if (std::abs(p.x - c.x) > reach || std::abs(p.y - c.y) > reach) continue;
      const double m = std::max(std::max(p.x - g.x1, g.x2 - p.x),
                                std::max(p.y - g.y1, g.y2 - p.y));
      if (m < range_lo || m > range_hi) continue;
      out.stage1[i].push_back(static_cast<int>(j));
      if (g.area() < best_area) {
        best_area = g.area();
        best_gt = static_cast<int>(i);
      }
    }
    out.labels[j] = best_gt;
  }
  return out;
}

/// Adaptive threshold assignment: per GT, pool the `top_candidates` nearest
/// anchors of every level (by center distance), take mean + std of their IoUs
/// as the threshold, and keep candidates above it whose center is inside the
/// GT. Conflicts go to the max-IoU GT.
inline Assignment atss_assign(const AnchorSet& anchors, const GroundTruthSet& gts,
                              int top_candidates = 9) {
  if (top_candidates < 1)
    throw std::invalid_argument("atss_assign: top_candidates must be >= 1");

  const std::size_t num_anchors = anchors.size();
  const std::size_t num_gt = gts.size();
  Assignment out;
  out.labels.assign(num_anchors, kNegative);
  out.stage1.assign(num_gt, {});

  // Group flat indices per level once; flattening is level-major so each
  // group is contiguous and sorted.
  std::vector<std::vector<int>> by_level(static_cast<std::size_t>(anchors.num_levels));
  for (std::size_t j = 0; j < num_anchors; ++j)
    by_level[static_cast<std::size_t>(anchors.levels[j])].push_back(static_cast<int>(j));

  std::vector<double> best_iou(num_anchors, 0.0);
  for (std::size_t i = 0; i < num_gt; ++i) {
    if (gts.ignore[i]) continue;
    const Box& g = gts.boxes[i];
    const Point c = g.center();

    std::vector<int> pool;
    for (const auto& level_idx : by_level) {
      const std::size_t take = std::min<std::size_t>(
          static_cast<std::size_t>(top_candidates), level_idx.size());
      std::vector<int> cand = level_idx;
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take),
                        cand.end(), [&](int a, int b) {
                          const Point& pa = anchors.centers[static_cast<std::size_t>(a)];
                          const Point& pb = anchors.centers[static_cast<std::size_t>(b)];
                          const double da = (pa.x - c.x) * (pa.x - c.x) + (pa.y - c.y) * (pa.y - c.y);
                          const double db = (pb.x - c.x) * (pb.x - c.x) + (pb.y - c.y) * (pb.y - c.y);
                          if (da != db) return da < db;
                          return a < b;
                        });
      pool.insert(pool.end(), cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take));
    }
    if (pool.empty()) continue;

    std::vector<double> ious(pool.size());
    double mean = 0.0;
    for (std::size_t n = 0; n < pool.size(); ++n) {
      ious[n] = iou(anchors.boxes[static_cast<std::size_t>(pool[n])], g);
      mean += ious[n];
    }
    mean /= static_cast<double>(pool.size());
    double var = 0.0;
    for (double v : ious) var += (v - mean) * (v - mean);
    const double stdev =
        pool.size() > 1 ? std::sqrt(var / static_cast<double>(pool.size() - 1)) : 0.0;
    const double threshold = mean + stdev;

    for (std::size_t n = 0; n < pool.size(); ++n) {
      const int j = pool[n];
      if (ious[n] < threshold) continue;
      if (!contains(g, anchors.centers[static_cast<std::size_t>(j)])) continue;
      out.stage1[i].push_back(j);
      if (ious[n] > best_iou[static_cast<std::size_t>(j)]) {
        best_iou[static_cast<std::size_t>(j)] = ious[n];
        out.labels[static_cast<std::size_t>(j)] = static_cast<int>(i);
      }
    }
  }
  for (auto& matches : out.stage1) std::sort(matches.begin(), matches.end());
  return out;
}

/// Anchors that appear in at least two GTs' stage-1 match sets.
inline int ambiguous_count(const std::vector<std::vector<int>>& stage1_matches) {
  std::vector<std::pair<int, int>> seen;  // (anchor, set count)
  std::vector<int> flat;
  for (const auto& set : stage1_matches)
    flat.insert(flat.end(), set.begin(), set.end());
  std::sort(flat.begin(), flat.end());
  int ambiguous = 0;
  for (std::size_t n = 0; n < flat.size();) {
    std::size_t m = n;
    while (m < flat.size() && flat[m] == flat[n]) ++m;
    if (m - n >= 2) ++ambiguous;
    n = m;
  }
  return ambiguous;
}

}  // namespace crowdassign
