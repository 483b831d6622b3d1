#pragma once

// Rectangles in normalized image coordinates: (0, 0) is the top-left corner
// and (1, 1) the bottom-right, independent of the raster resolution.

#include <algorithm>
#include <cmath>
#include <string>

#include "relabel/error.hpp"

namespace relabel {

inline constexpr double kGeometryTolerance = 1e-9;

/// Crop rectangle as top-left corner plus extent.
struct CropRegion {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  CropRegion() = default;
  CropRegion(double x_, double y_, double w_, double h_) : x(x_), y(y_), w(w_), h(h_) {
    if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h))) {
      throw InvalidArgument("crop region has non-finite coordinates");
    }
    if (w <= 0.0 || h <= 0.0) throw InvalidArgument("degenerate crop region (w and h must be > 0)");
    if (x < -kGeometryTolerance || y < -kGeometryTolerance || x + w > 1.0 + kGeometryTolerance ||
        y + h > 1.0 + kGeometryTolerance) {
      throw InvalidArgument("crop region must lie inside the unit square");
    }
  }

  static CropRegion full() { return {}; }
  double area() const { return w * h; }

  friend bool operator==(const CropRegion&, const CropRegion&) = default;
};

/// Axis-aligned box by corners. Zero extent is allowed (an empty CutMix cut);
/// ground-truth boxes are additionally required to have positive area.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  Box() = default;
  Box(double x0_, double y0_, double x1_, double y1_) : x0(x0_), y0(y0_), x1(x1_), y1(y1_) {
    if (!(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1))) {
      throw InvalidArgument("box has non-finite coordinates");
    }
    if (x1 < x0 || y1 < y0) throw InvalidArgument("box corners are inverted");
    if (x0 < -kGeometryTolerance || y0 < -kGeometryTolerance || x1 > 1.0 + kGeometryTolerance ||
        y1 > 1.0 + kGeometryTolerance) {
      throw InvalidArgument("box must lie inside the unit square");
    }
  }

  static Box from(const CropRegion& r) { return {r.x, r.y, std::min(1.0, r.x + r.w), std::min(1.0, r.y + r.h)}; }

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool empty() const { return width() <= 0.0 || height() <= 0.0; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Intersection over union; 0 for disjoint boxes and when both are empty.
inline double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double iou(const CropRegion& r, const Box& b) { return iou(Box::from(r), b); }

}  // namespace relabel
