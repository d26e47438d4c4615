#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "crowdassign/geometry.hpp"

namespace crowdassign {

enum class AnchorMode {
  kBoxes,   // anchor boxes (one or several per grid cell)
  kPoints,  // anchor points carrying a nominal box so box costs stay defined
};

struct AnchorConfig {
  std::vector<double> strides{8, 16, 32, 64, 128};
  AnchorMode mode = AnchorMode::kBoxes;
  /// Side of the square anchor at each level is base_scale * stride.
  double base_scale = 8.0;
  /// Per-location size multipliers and aspect ratios (ratio = height/width).
  /// Point grids always place a single anchor per location.
  std::vector<double> scales{1.0};
  std::vector<double> ratios{1.0};

  std::size_t anchors_per_location() const {
    if (mode == AnchorMode::kPoints) return 1;
    return scales.size() * ratios.size();
  }
};

/// Classic 9-anchor configuration: 3 octave scales x 3 aspect ratios on
/// 32..512 pixel bases.
inline AnchorConfig retinanet_a9_config() {
  AnchorConfig cfg;
  cfg.base_scale = 4.0;
  cfg.scales = {1.0, std::pow(2.0, 1.0 / 3.0), std::pow(2.0, 2.0 / 3.0)};
  cfg.ratios = {0.5, 1.0, 2.0};
  return cfg;
}

/// Flattened multi-level anchor grid. Ordering is level-major, then row,
/// column, anchor index; levels are nondecreasing along the flat order.
struct AnchorSet {
  std::vector<Box> boxes;
  std::vector<Point> centers;
  std::vector<int> levels;      // 0 = highest-resolution stage
  std::vector<double> strides;  // stride of each anchor's level
  AnchorMode mode = AnchorMode::kBoxes;
  int num_levels = 0;

  std::size_t size() const { return boxes.size(); }
};

/// Square anchor of side base_scale * stride centered at `center`.
inline Box single_anchor_box(int level, const Point& center, const AnchorConfig& cfg) {
  if (level < 0 || static_cast<std::size_t>(level) >= cfg.strides.size())
    throw std::invalid_argument("single_anchor_box: level out of range");
  const double half = 0.5 * cfg.base_scale * cfg.strides[static_cast<std::size_t>(level)];
  return {center.x - half, center.y - half, center.x + half, center.y + half};
}

/// Builds the full grid over an image. Anchors may extend past the image
/// border; they are not clipped. Centers sit at stride * (cell + 0.5).
inline AnchorSet build_anchor_grid(double image_w, double image_h, const AnchorConfig& cfg) {
  if (!(image_w > 0.0) || !(image_h > 0.0))
    throw std::invalid_argument("build_anchor_grid: invalid image size");
  if (cfg.strides.empty())
    throw std::invalid_argument("build_anchor_grid: no strides configured");
  if (cfg.mode == AnchorMode::kBoxes && (cfg.scales.empty() || cfg.ratios.empty()))
    throw std::invalid_argument("build_anchor_grid: empty scales or ratios");

  AnchorSet out;
  out.mode = cfg.mode;
  out.num_levels = static_cast<int>(cfg.strides.size());

  std::size_t total = 0;
  for (double s : cfg.strides) {
    const auto rows = static_cast<std::size_t>(std::ceil(image_h / s));
    const auto cols = static_cast<std::size_t>(std::ceil(image_w / s));
    total += rows * cols * cfg.anchors_per_location();
  }
  out.boxes.reserve(total);
  out.centers.reserve(total);
  out.levels.reserve(total);
  out.strides.reserve(total);

  for (int level = 0; level < out.num_levels; ++level) {
    const double stride = cfg.strides[static_cast<std::size_t>(level)];
    const auto rows = static_cast<std::size_t>(std::ceil(image_h / stride));
    const auto cols = static_cast<std::size_t>(std::ceil(image_w / stride));
    for (std::size_t row = 0; row < rows; ++row) {
      for (std::size_t col = 0; col < cols; ++col) {
        const Point c{stride * (static_cast<double>(col) + 0.5),
                      stride * (static_cast<double>(row) + 0.5)};
        if (cfg.mode == AnchorMode::kPoints) {
          out.boxes.push_back(single_anchor_box(level, c, cfg));
          out.centers.push_back(c);
          out.levels.push_back(level);
          out.strides.push_back(stride);
          continue;
        }
        for (double scale : cfg.scales) {
          for (double ratio : cfg.ratios) {
            const double side = cfg.base_scale * stride * scale;
            const double w = side / std::sqrt(ratio);
            const double h = side * std::sqrt(ratio);
            out.boxes.push_back({c.x - 0.5 * w, c.y - 0.5 * h,
                                 c.x + 0.5 * w, c.y + 0.5 * h});
            out.centers.push_back(c);
            out.levels.push_back(level);
            out.strides.push_back(stride);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace crowdassign
