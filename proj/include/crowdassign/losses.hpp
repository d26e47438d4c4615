#pragma once

#include <algorithm>
#include <cmath>

#include "crowdassign/geometry.hpp"

namespace crowdassign {

/// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log so
/// that no loss is ever infinite and top-K orderings stay well defined.
inline constexpr double kProbEps = 1e-6;

inline double clamp_prob(double p) {
  return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

inline double bce_loss(double p, bool y) {
  p = clamp_prob(p);
  return y ? -std::log(p) : -std::log(1.0 - p);
}

inline double focal_loss(double p, bool y, const FocalParams& fp = {}) {
  p = clamp_prob(p);
  if (y) return -fp.alpha * std::pow(1.0 - p, fp.gamma) * std::log(p);
  return -(1.0 - fp.alpha) * std::pow(p, fp.gamma) * std::log(1.0 - p);
}

/// Analytic d(focal_loss)/dp, evaluated at the clamped probability.
inline double focal_loss_grad(double p, bool y, const FocalParams& fp = {}) {
  p = clamp_prob(p);
  if (y) {
    return fp.alpha * fp.gamma * std::pow(1.0 - p, fp.gamma - 1.0) * std::log(p) -
           fp.alpha * std::pow(1.0 - p, fp.gamma) / p;
  }
  return -(1.0 - fp.alpha) * fp.gamma * std::pow(p, fp.gamma - 1.0) * std::log(1.0 - p) +
         (1.0 - fp.alpha) * std::pow(p, fp.gamma) / (1.0 - p);
}

/// 1 - IoU. Bounded in [0, 1]; 0 iff the boxes coincide, 1 iff disjoint.
inline double iou_loss(const Box& pred, const Box& gt) {
  return 1.0 - iou(pred, gt);
}

/// 1 - GIoU. Bounded in [0, 2); equals iou_loss when the hull equals the union.
inline double giou_loss(const Box& pred, const Box& gt) {
  return 1.0 - giou(pred, gt);
}

/// -ln(IoU) variant, clamped so disjoint boxes stay finite.
inline double log_iou_loss(const Box& pred, const Box& gt) {
  return -std::log(std::clamp(iou(pred, gt), kProbEps, 1.0));
}

/// Smooth L1 over the four corner coordinates: quadratic below beta,
/// linear above. beta must be positive.
inline double smooth_l1(const Box& pred, const Box& gt, double beta) {
  const double d[4] = {pred.x1 - gt.x1, pred.y1 - gt.y1,
                       pred.x2 - gt.x2, pred.y2 - gt.y2};
  double total = 0.0;
  for (double v : d) {
    const double a = std::abs(v);
    total += a < beta ? 0.5 * a * a / beta : a - 0.5 * beta;
  }
  return total;
}

}  // namespace crowdassign
