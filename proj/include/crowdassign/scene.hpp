#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crowdassign/anchors.hpp"
#include "crowdassign/assign.hpp"
#include "crowdassign/geometry.hpp"
#include "crowdassign/rng.hpp"

namespace crowdassign {

/// Synthetic crowd scene: full-body GT boxes with a total depth order, plus
/// the exact occlusion fraction and a rectangular approximation of each
/// person's unoccluded region.
struct Scene {
  double image_w = 0.0;
  double image_h = 0.0;
  GroundTruthSet gts;
  std::vector<Box> visible;      // largest unoccluded rectangle per GT
  std::vector<double> occlusion; // exact covered-area fraction per GT
  std::vector<int> depth_rank;   // 0 = frontmost (nothing occludes it)
  // Worst per-GT gap between the exact unoccluded fraction and the
  // rectangle's area fraction; the rectangle is always a subset, so this
  // bounds how much the Box approximation under-reports visibility.
  double rect_approx_error = 0.0;
};

struct SceneConfig {
  double image_w = 640.0;
  double image_h = 640.0;
  double mean_height = 180.0;   // median of the lognormal height draw
  double height_sigma = 0.3;    // lognormal sigma for heights
  double aspect = 2.4;          // nominal h/w for a standing person
  double aspect_sigma = 0.1;    // lognormal jitter on the aspect ratio
  int max_retries = 200;        // placement attempts per person
  // Reject placements that would cover anyone beyond this fraction. A person
  // with no visible remainder is not an annotatable pedestrian; 1.0 disables
  // the cap.
  double max_occlusion = 0.85;
};

namespace detail {

/// Exact fraction of `box` covered by `covers`, via coordinate compression:
/// the covers' edges cut the box into cells that are each fully in or out.
inline double covered_fraction(const Box& box, const std::vector<Box>& covers) {
  if (box.area() <= 0.0 || covers.empty()) return 0.0;
  std::vector<double> xs = {box.x1, box.x2};
  std::vector<double> ys = {box.y1, box.y2};
  for (const Box& c : covers) {
    xs.push_back(std::clamp(c.x1, box.x1, box.x2));
    xs.push_back(std::clamp(c.x2, box.x1, box.x2));
    ys.push_back(std::clamp(c.y1, box.y1, box.y2));
    ys.push_back(std::clamp(c.y2, box.y1, box.y2));
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  double covered = 0.0;
  for (std::size_t a = 0; a + 1 < xs.size(); ++a) {
    for (std::size_t b = 0; b + 1 < ys.size(); ++b) {
      const Point mid{0.5 * (xs[a] + xs[a + 1]), 0.5 * (ys[b] + ys[b + 1])};
      for (const Box& c : covers) {
        if (contains(c, mid)) {
          covered += (xs[a + 1] - xs[a]) * (ys[b + 1] - ys[b]);
          break;
        }
      }
    }
  }
  return covered / box.area();
}

/// Largest axis-aligned rectangle inside `box` that overlaps none of
/// `covers`. Exact: a maximal empty rectangle can be grown until every side
/// rests on the container or a cover edge, so only those coordinates need
/// trying. Returns a zero-area box at the top-left corner when fully covered.
inline Box largest_empty_rect(const Box& box, const std::vector<Box>& covers) {
  if (covers.empty()) return box;
  std::vector<double> xs = {box.x1, box.x2};
  std::vector<double> ys = {box.y1, box.y2};
  for (const Box& c : covers) {
    if (intersection_area(box, c) <= 0.0) continue;
    xs.push_back(std::clamp(c.x1, box.x1, box.x2));
    xs.push_back(std::clamp(c.x2, box.x1, box.x2));
    ys.push_back(std::clamp(c.y1, box.y1, box.y2));
    ys.push_back(std::clamp(c.y2, box.y1, box.y2));
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  Box best{box.x1, box.y1, box.x1, box.y1};
  double best_area = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      for (std::size_t c = 0; c < ys.size(); ++c) {
        for (std::size_t d = c + 1; d < ys.size(); ++d) {
          const Box r{xs[a], ys[c], xs[b], ys[d]};
          if (r.area() <= best_area) continue;
          bool blocked = false;
          for (const Box& cov : covers) {
            if (intersection_area(r, cov) > 0.0) {
              blocked = true;
              break;
            }
          }
          if (!blocked) {
            best = r;
            best_area = r.area();
          }
        }
      }
    }
  }
  return best;
}

/// Person-shaped box sampled from the config's lognormal height/aspect
/// model, capped so it can fit inside the image.
inline Box sample_person_box(Rng& rng, const SceneConfig& cfg) {
  double h = 0.0;
  double w = 0.0;
  do {
    h = cfg.mean_height * std::exp(rng.normal(0.0, cfg.height_sigma));
    const double aspect = cfg.aspect * std::exp(rng.normal(0.0, cfg.aspect_sigma));
    w = h / aspect;
  } while (h > 0.9 * cfg.image_h || w > 0.9 * cfg.image_w);
  return {0.0, 0.0, w, h};
}

inline Box place_at(const Box& dims, const Point& center) {
  const double w = dims.width();
  const double h = dims.height();
  return {center.x - 0.5 * w, center.y - 0.5 * h, center.x + 0.5 * w,
          center.y + 0.5 * h};
}

inline bool inside_image(const Box& b, const SceneConfig& cfg) {
  return b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= cfg.image_w && b.y2 <= cfg.image_h;
}

}  // namespace detail

/// Mean over GTs of the max IoU against any other GT; the generator's own
/// crowdedness gauge.
inline double mean_max_neighbor_iou(const GroundTruthSet& gts) {
  const std::size_t n = gts.size();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      best = std::max(best, iou(gts.boxes[i], gts.boxes[j]));
    }
    sum += best;
  }
  return sum / static_cast<double>(n);
}

/// Generates a synthetic crowd. Each person after the first is slid along a
/// random ray away from a random earlier person; IoU is monotone in the slide
/// distance, so a binary search lands on the requested overlap level.
/// crowd_iou = 0 falls back to disjoint rejection sampling.
inline Scene generate_scene(int n_people, double crowd_iou, std::uint64_t seed,
                            const SceneConfig& cfg = {}) {
  if (n_people < 0) throw std::invalid_argument("generate_scene: n_people < 0");
  if (!(crowd_iou >= 0.0 && crowd_iou < 1.0))
    throw std::invalid_argument("generate_scene: crowd_iou must be in [0,1)");
  if (!(cfg.max_occlusion > 0.0 && cfg.max_occlusion <= 1.0))
    throw std::invalid_argument("generate_scene: max_occlusion must be in (0,1]");

  Rng rng(seed);
  Scene scene;
  scene.image_w = cfg.image_w;
  scene.image_h = cfg.image_h;

  for (int p = 0; p < n_people; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const Box dims = detail::sample_person_box(rng, cfg);
      const double w = dims.width();
      const double h = dims.height();
      const Point center{rng.uniform(0.5 * w, cfg.image_w - 0.5 * w),
                         rng.uniform(0.5 * h, cfg.image_h - 0.5 * h)};

      Box candidate;
      if (p == 0 || crowd_iou == 0.0) {
        candidate = detail::place_at(dims, center);
      } else {
        // Slide from concentric (max overlap) outward along a random
        // direction until the IoU with the chosen neighbor hits the target.
        const auto neighbor_idx = rng.uniform_index(scene.gts.size());
        const Box& nb = scene.gts.boxes[neighbor_idx];
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double dx = std::cos(angle);
        const double dy = std::sin(angle);
        const Point base = nb.center();
        const double d_max = 0.5 * (nb.width() + w) + 0.5 * (nb.height() + h);
        double lo = 0.0;
        double hi = d_max;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          const Box probe = detail::place_at(
              dims, {base.x + mid * dx, base.y + mid * dy});
          if (iou(probe, nb) > crowd_iou) {
            lo = mid;
          } else {
            hi = mid;
          }
        }
        candidate = detail::place_at(dims, {base.x + lo * dx, base.y + lo * dy});
      }

      if (!detail::inside_image(candidate, cfg)) continue;
      double worst = 0.0;
      for (const Box& other : scene.gts.boxes)
        worst = std::max(worst, iou(candidate, other));
      // Keep crowdedness near the dial: no contact when the target is zero,
      // and no accidental pile-ups far beyond it otherwise.
      if (crowd_iou == 0.0 ? worst > 0.0 : worst > crowd_iou + 0.1) continue;

      // No one may end up buried past the occlusion cap, in either direction:
      // the candidate under those already placed in front of it, or anyone
      // already placed whom the candidate would now cover. Depth follows the
      // final ordering rule (larger y2 is nearer; ties leave the newcomer
      // behind).
      const auto nearer_than_candidate = [&](const Box& b) {
        return b.y2 >= candidate.y2;
      };
      bool buries = false;
      {
        std::vector<Box> in_front;
        for (const Box& other : scene.gts.boxes)
          if (nearer_than_candidate(other) &&
              intersection_area(candidate, other) > 0.0)
            in_front.push_back(other);
        if (detail::covered_fraction(candidate, in_front) > cfg.max_occlusion)
          buries = true;
      }
      for (std::size_t i = 0; !buries && i < scene.gts.size(); ++i) {
        const Box& victim = scene.gts.boxes[i];
        if (nearer_than_candidate(victim) ||
            intersection_area(candidate, victim) <= 0.0)
          continue;
        std::vector<Box> covers{candidate};
        for (std::size_t j = 0; j < scene.gts.size(); ++j) {
          const Box& other = scene.gts.boxes[j];
          const bool other_nearer =
              other.y2 > victim.y2 || (other.y2 == victim.y2 && j < i);
          if (j != i && other_nearer &&
              intersection_area(victim, other) > 0.0)
            covers.push_back(other);
        }
        if (detail::covered_fraction(victim, covers) > cfg.max_occlusion)
          buries = true;
      }
      if (buries) continue;

      scene.gts.push_back(candidate);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error(
          "generate_scene: could not place person within image after retries");
  }

  // Depth: lower box bottoms are further away; the front-most person has the
  // largest y2. Ties break on insertion index for a total order.
  const std::size_t n = scene.gts.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ya = scene.gts.boxes[static_cast<std::size_t>(a)].y2;
    const double yb = scene.gts.boxes[static_cast<std::size_t>(b)].y2;
    if (ya != yb) return ya > yb;
    return a < b;
  });
  scene.depth_rank.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r)
    scene.depth_rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r);

  scene.visible.resize(n);
  scene.occlusion.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Box> nearer;
    for (std::size_t j = 0; j < n; ++j) {
      if (scene.depth_rank[j] < scene.depth_rank[i] &&
          intersection_area(scene.gts.boxes[i], scene.gts.boxes[j]) > 0.0)
        nearer.push_back(scene.gts.boxes[j]);
    }
    scene.occlusion[i] =
        std::clamp(detail::covered_fraction(scene.gts.boxes[i], nearer), 0.0, 1.0);
    scene.visible[i] = detail::largest_empty_rect(scene.gts.boxes[i], nearer);
    const double exact_visible = 1.0 - scene.occlusion[i];
    const double rect_visible = scene.visible[i].area() / scene.gts.boxes[i].area();
    scene.rect_approx_error =
        std::max(scene.rect_approx_error, exact_visible - rect_visible);
  }
  return scene;
}

/// Stand-in for a partially trained network. `maturity` slides outputs from
/// uninformative (flat scores, unrefined boxes) to geometry-perfect.
struct MockPredictorConfig {
  // Exponent shaping score falloff with overlap. 1 keeps scores proportional
  // to visible overlap the way a converged detector's confidences are; larger
  // values starve partially visible people of any confident anchor.
  double score_sharpness = 1.0;
  double noise_sigma = 0.0;  // score / box perturbation scale
  double maturity = 1.0;     // 0 = untrained, 1 = converged
  std::uint64_t seed = 1;

  void validate() const {
    if (!(maturity >= 0.0 && maturity <= 1.0))
      throw std::invalid_argument("MockPredictorConfig: maturity must be in [0,1]");
    if (!(noise_sigma >= 0.0))
      throw std::invalid_argument("MockPredictorConfig: noise_sigma must be >= 0");
    if (!(score_sharpness > 0.0))
      throw std::invalid_argument("MockPredictorConfig: score_sharpness must be > 0");
  }
};

/// The GT whose features an anchor would actually see: the front-most person
/// whose full box contains the anchor center, -1 when none does. Anchors over
/// an occluded body region therefore carry the occluder, not the person
/// behind — the effect the loss-aware assigner is supposed to exploit.
inline std::vector<int> anchor_owners(const Scene& scene, const AnchorSet& anchors) {
  std::vector<int> owners(anchors.size(), -1);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    int best_rank = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < scene.gts.size(); ++i) {
      if (!contains(scene.gts.boxes[i], anchors.centers[j])) continue;
      if (scene.depth_rank[i] < best_rank) {
        best_rank = scene.depth_rank[i];
        owners[j] = static_cast<int>(i);
      }
    }
  }
  return owners;
}

/// Geometry-driven predictions: each anchor scores by how much it overlaps
/// the *visible* part of its owner, and regresses a blend of its own box and
/// the owner's full box. Five normal draws per anchor are consumed
/// unconditionally so the noise stream does not depend on ownership.
inline Predictions mock_predict(const Scene& scene, const AnchorSet& anchors,
                                const MockPredictorConfig& cfg) {
  cfg.validate();
  const std::size_t n = anchors.size();
  const double m = cfg.maturity;

  Predictions preds;
  preds.scores = Matrix(n, 1);
  preds.boxes.resize(n);

  const std::vector<int> owners = anchor_owners(scene, anchors);
  Rng rng(cfg.seed);
  for (std::size_t j = 0; j < n; ++j) {
    const double n_score = rng.normal();
    const double n_box[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};

    double quality = 0.0;
    Box target = anchors.boxes[j];
    if (owners[j] >= 0) {
      const auto o = static_cast<std::size_t>(owners[j]);
      quality = std::pow(iou(anchors.boxes[j], scene.visible[o]), cfg.score_sharpness);
      target = scene.gts.boxes[o];
    }

    const double score =
        (1.0 - m) * 0.05 + m * quality + cfg.noise_sigma * n_score;
    preds.scores(j, 0) = std::clamp(score, 0.0, 1.0);

    const Box& a = anchors.boxes[j];
    const double jitter = cfg.noise_sigma * anchors.strides[j];
    preds.boxes[j] = {(1.0 - m) * a.x1 + m * target.x1 + jitter * n_box[0],
                      (1.0 - m) * a.y1 + m * target.y1 + jitter * n_box[1],
                      (1.0 - m) * a.x2 + m * target.x2 + jitter * n_box[2],
                      (1.0 - m) * a.y2 + m * target.y2 + jitter * n_box[3]};
    if (preds.boxes[j].x2 < preds.boxes[j].x1)
      std::swap(preds.boxes[j].x1, preds.boxes[j].x2);
    if (preds.boxes[j].y2 < preds.boxes[j].y1)
      std::swap(preds.boxes[j].y1, preds.boxes[j].y2);
  }
  return preds;
}

/// One loss-aware assignment per maturity step, tracing how positives move
/// as the mock detector matures.
inline std::vector<Assignment> evolution_snapshots(
    const Scene& scene, const AnchorSet& anchors, const MockPredictorConfig& cfg,
    const std::vector<double>& schedule, const LlaConfig& lla = {}) {
  for (std::size_t s = 1; s < schedule.size(); ++s) {
    if (schedule[s] < schedule[s - 1])
      throw std::invalid_argument("evolution_snapshots: schedule must be nondecreasing");
  }
  std::vector<Assignment> snapshots;
  snapshots.reserve(schedule.size());
  for (double m : schedule) {
    MockPredictorConfig step = cfg;
    step.maturity = m;
    const Predictions preds = mock_predict(scene, anchors, step);
    const CostMatrix c = cost_matrix(preds, scene.gts, anchors, lla);
    snapshots.push_back(lla_assign(restrict(c, scene.gts, anchors, lla), lla));
  }
  return snapshots;
}

/// Simulates one round of training against the given labels. Positives whose
/// features belong to the assigned person converge on it; positives trained
/// against a person other than their feature owner regress a confused
/// midpoint box. Negatives are suppressed. This is what makes bad label
/// choices show up in the proxy detection metrics.
inline Predictions apply_training_feedback(const Predictions& preds,
                                           const Assignment& assignment,
                                           const Scene& scene,
                                           const AnchorSet& anchors,
                                           double strength = 0.85) {
  if (!(strength >= 0.0 && strength <= 1.0))
    throw std::invalid_argument("apply_training_feedback: strength must be in [0,1]");
  if (assignment.labels.size() != anchors.size())
    throw std::invalid_argument("apply_training_feedback: assignment/anchor mismatch");

  Predictions out = preds;
  const std::vector<int> owners = anchor_owners(scene, anchors);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const int label = assignment.labels[j];
    if (label == kIgnoreLabel) continue;
    if (label == kNegative) {
      out.scores(j, 0) = (1.0 - strength) * out.scores(j, 0);
      continue;
    }
    const auto gt = static_cast<std::size_t>(label);
    Box target = scene.gts.boxes[gt];
    double box_strength = strength;
    if (owners[j] >= 0 && owners[j] != label) {
      // Conflicting supervision: features show one person, the label says
      // another. The regressor settles between the two.
      const Box& own = scene.gts.boxes[static_cast<std::size_t>(owners[j])];
      target = {0.5 * (own.x1 + target.x1), 0.5 * (own.y1 + target.y1),
                0.5 * (own.x2 + target.x2), 0.5 * (own.y2 + target.y2)};
    } else if (owners[j] < 0) {
      box_strength *= 0.5;  // background features barely support regression
    }
    out.scores(j, 0) = out.scores(j, 0) + strength * (1.0 - out.scores(j, 0));
    Box& b = out.boxes[j];
    b = {b.x1 + box_strength * (target.x1 - b.x1),
         b.y1 + box_strength * (target.y1 - b.y1),
         b.x2 + box_strength * (target.x2 - b.x2),
         b.y2 + box_strength * (target.y2 - b.y2)};
  }
  return out;
}

}  // namespace crowdassign
