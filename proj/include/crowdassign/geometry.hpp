#pragma once

#include <algorithm>
#include <cmath>

namespace crowdassign {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in continuous image coordinates, corner convention.
/// Intervals are closed; area carries no +1 pixel correction.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  Point center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
  bool valid() const { return x1 <= x2 && y1 <= y2; }
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double union_area(const Box& a, const Box& b) {
  return a.area() + b.area() - intersection_area(a, b);
}

/// Smallest box enclosing both inputs.
inline Box hull(const Box& a, const Box& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1),
          std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

/// Intersection-over-Union. Degenerate (zero-area) pairs yield 0.
inline double iou(const Box& a, const Box& b) {
  const double uni = union_area(a, b);
  if (uni <= 0.0) return 0.0;
  return intersection_area(a, b) / uni;
}

/// Generalized IoU: iou minus the hull area not covered by the union,
/// normalized by the hull area. In (-1, 1] for non-degenerate boxes.
inline double giou(const Box& a, const Box& b) {
  const double uni = union_area(a, b);
  const double i = uni > 0.0 ? intersection_area(a, b) / uni : 0.0;
  const double hull_area = hull(a, b).area();
  if (hull_area <= 0.0) return i;
  return i - (hull_area - uni) / hull_area;
}

/// Closed-boundary containment: points on the box edge count as inside.
inline bool contains(const Box& b, const Point& p) {
  return b.x1 <= p.x && p.x <= b.x2 && b.y1 <= p.y && p.y <= b.y2;
}

inline Box intersect(const Box& a, const Box& b) {
  Box r{std::max(a.x1, b.x1), std::max(a.y1, b.y1),
        std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
  if (r.x1 > r.x2 || r.y1 > r.y2) return {r.x1, r.y1, r.x1, r.y1};
  return r;
}

inline Box translate(const Box& b, double dx, double dy) {
  return {b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
}

}  // namespace crowdassign
