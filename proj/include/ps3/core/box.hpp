#pragma once

#include <algorithm>

namespace ps3 {

// Axis-aligned box in pixel coordinates, half-open [x0, x1) x [y0, y1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  double intersection_area(const Box& o) const {
    const double w = std::min(x1, o.x1) - std::max(x0, o.x0);
    const double h = std::min(y1, o.y1) - std::max(y0, o.y0);
    return (w > 0 && h > 0) ? w * h : 0.0;
  }
  // Positive-area intersection; shared edges do not count.
  bool overlaps(const Box& o) const { return intersection_area(o) > 0; }
  Box translated(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }
  bool operator==(const Box&) const = default;
};

}  // namespace ps3
