#pragma once

// Top-k sparsification of dense label maps, scatter back to dense windows,
// and storage arithmetic for both layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/label_map.hpp"
#include "relabel/math.hpp"
#include "relabel/quant.hpp"

namespace relabel {

/// Keeps, per pixel, the k most probable classes. RawScores input is passed
/// through a per-pixel softmax first; Probabilities input is used as is.
/// Ties are broken towards the lower class index.
inline SparseLabelMap encode_sparse(const DenseLabelMap& dense, std::size_t k, QuantFormat quant) {
  const std::size_t C = dense.num_classes();
  if (k < 1 || k > C) throw InvalidArgument("k must lie in [1, C]; got k=" + std::to_string(k));
  if (C > kMaxClasses) throw InvalidArgument("at most 65535 classes can be encoded");

  std::vector<std::uint16_t> indices;
  std::vector<float> values;
  indices.reserve(dense.num_pixels() * k);
  values.reserve(dense.num_pixels() * k);
  std::vector<std::size_t> order(C);
  for (std::size_t p = 0; p < dense.num_pixels(); ++p) {
    const std::vector<double> probs = dense.mode() == ValueMode::RawScores
                                          ? softmax(dense.pixel(p))
                                          : std::vector<double>(dense.pixel(p).begin(), dense.pixel(p).end());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); });
    for (std::size_t j = 0; j < k; ++j) {
      indices.push_back(static_cast<std::uint16_t>(order[j]));
      values.push_back(quantize(probs[order[j]], quant));
    }
  }
  return SparseLabelMap(dense.height(), dense.width(), C, k, quant, ValueMode::Probabilities, std::move(indices),
                        std::move(values));
}

/// Half-open pixel window [row_begin, row_end) x [col_begin, col_end).
struct PixelWindow {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;

  std::size_t rows() const { return row_end - row_begin; }
  std::size_t cols() const { return col_end - col_begin; }
  friend bool operator==(const PixelWindow&, const PixelWindow&) = default;
};

/// Smallest pixel window of an H x W grid that encloses the region.
inline PixelWindow enclosing_window(const CropRegion& region, std::size_t height, std::size_t width) {
  auto span = [](double lo, double hi, std::size_t n) {
    const double scale = static_cast<double>(n);
    auto begin = static_cast<std::ptrdiff_t>(std::floor(lo * scale + kGeometryTolerance));
    auto end = static_cast<std::ptrdiff_t>(std::ceil(hi * scale - kGeometryTolerance));
    begin = std::clamp<std::ptrdiff_t>(begin, 0, static_cast<std::ptrdiff_t>(n));
    end = std::clamp<std::ptrdiff_t>(end, 0, static_cast<std::ptrdiff_t>(n));
    if (end <= begin) throw InvalidArgument("region does not intersect the label map");
    return std::pair{static_cast<std::size_t>(begin), static_cast<std::size_t>(end)};
  };
  const auto [c0, c1] = span(region.x, region.x + region.w, width);
  const auto [r0, r1] = span(region.y, region.y + region.h, height);
  return {r0, r1, c0, c1};
}

/// Scatters the stored (class, value) pairs of a pixel window into a dense
/// map; classes outside the top-k are 0.
inline DenseLabelMap densify_window(const SparseLabelMap& sparse, const PixelWindow& win) {
  if (win.row_end > sparse.height() || win.col_end > sparse.width() || win.rows() == 0 || win.cols() == 0) {
    throw InvalidArgument("pixel window outside the label map");
  }
  const std::size_t C = sparse.num_classes();
  std::vector<double> values(win.rows() * win.cols() * C, 0.0);
  for (std::size_t r = 0; r < win.rows(); ++r) {
    for (std::size_t c = 0; c < win.cols(); ++c) {
      const std::size_t src = (win.row_begin + r) * sparse.width() + (win.col_begin + c);
      double* dst = values.data() + (r * win.cols() + c) * C;
      auto idx = sparse.indices(src);
      auto val = sparse.values(src);
      for (std::size_t j = 0; j < sparse.k(); ++j) dst[idx[j]] = val[j];
    }
  }
  return DenseLabelMap(win.rows(), win.cols(), C, std::move(values), sparse.mode());
}

inline DenseLabelMap densify(const SparseLabelMap& sparse) {
  return densify_window(sparse, {0, sparse.height(), 0, sparse.width()});
}

/// Dense sub-map over the minimal pixel window enclosing `region`.
inline DenseLabelMap densify_region(const SparseLabelMap& sparse, const CropRegion& region) {
  return densify_window(sparse, enclosing_window(region, sparse.height(), sparse.width()));
}

}  // namespace relabel
