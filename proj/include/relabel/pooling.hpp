#pragma once

// Label pooling: the training target for a crop is the label map averaged
// over the crop (RoIAlign with a 1x1 output), turned into a probability
// vector.
//
// RoIAlign here integrates the bilinear field exactly instead of averaging a
// finite set of sample points. Pixel (i, j) has its centre at (j + 0.5,
// i + 0.5) in grid units; the field interpolates between centres and is
// clamped (constant) within half a pixel of the border. Per axis the field is
// piecewise linear, so the mean over a rectangle factorizes into one weight
// vector per axis. A full-image region therefore yields exactly the pixel
// mean (global average pooling), and constants are reproduced exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/label_map.hpp"
#include "relabel/math.hpp"
#include "relabel/sparse.hpp"

namespace relabel {

/// Point on the probability simplex: non-negative, summing to 1 (within 1e-6).
class PooledTarget {
 public:
  explicit PooledTarget(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidArgument("target must have at least one class");
    double sum = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0) throw InvalidArgument("target entries must be finite and >= 0");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw InvalidArgument("target does not sum to 1 (sum=" + std::to_string(sum) + ")");
  }

  static PooledTarget uniform(std::size_t classes) {
    return PooledTarget(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
  }
  static PooledTarget one_hot(std::size_t index, std::size_t classes) {
    return PooledTarget(relabel::one_hot(index, classes));
  }

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  double confidence() const { return *std::max_element(probs_.begin(), probs_.end()); }
  std::size_t top_class() const { return argmax(probs_); }

  friend bool operator==(const PooledTarget&, const PooledTarget&) = default;

 private:
  std::vector<double> probs_;
};

enum class LabelVariant { LocMulti, LocSingle, GlobMulti, GlobSingle };

inline std::string_view to_string(LabelVariant v) {
  switch (v) {
    case LabelVariant::LocMulti: return "loc_multi";
    case LabelVariant::LocSingle: return "loc_single";
    case LabelVariant::GlobMulti: return "glob_multi";
    case LabelVariant::GlobSingle: return "glob_single";
  }
  return "?";
}

inline LabelVariant parse_variant(std::string_view s) {
  for (auto v : {LabelVariant::LocMulti, LabelVariant::LocSingle, LabelVariant::GlobMulti, LabelVariant::GlobSingle}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidArgument("unknown label variant '" + std::string(s) + "'");
}

/// Interpolation weights of the pixels [begin, begin + weights.size()) along
/// one axis; they sum to 1.
struct AxisWeights {
  std::size_t begin = 0;
  std::vector<double> weights;

  std::size_t end() const { return begin + weights.size(); }
};

/// Mean of the clamped piecewise-linear interpolant of n pixels over the
/// grid interval [lo, hi] (grid units, 0 <= lo < hi <= n), expressed as
/// per-pixel weights.
inline AxisWeights axis_weights(std::size_t n, double lo, double hi) {
  const double size = static_cast<double>(n);
  lo = std::clamp(lo, 0.0, size);
  hi = std::clamp(hi, 0.0, size);
  if (!(hi > lo)) throw InvalidArgument("degenerate pooling interval");

  std::vector<double> w(n, 0.0);
  auto overlap = [&](double a, double b) { return std::max(0.0, std::min(hi, b) - std::max(lo, a)); };
  // Constant half-pixel margins at both borders.
  w[0] += overlap(0.0, 0.5);
  w[n - 1] += overlap(size - 0.5, size);
  // Linear pieces between neighbouring centres j + 0.5 and j + 1.5.
  const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(lo - 0.5)));
  const auto last = std::min(n - 1, static_cast<std::size_t>(std::max(0.0, std::floor(hi - 0.5))) + 1);
  for (std::size_t j = first; j + 1 < n && j < last; ++j) {
    const double c = static_cast<double>(j) + 0.5;
    const double t0 = std::max(lo, c) - c;
    const double t1 = std::min(hi, c + 1.0) - c;
    if (t1 <= t0) continue;
    const double ramp = (t1 * t1 - t0 * t0) / 2.0;  // integral of t
    w[j] += (t1 - t0) - ramp;
    w[j + 1] += ramp;
  }
  const double extent = hi - lo;
  std::size_t b = 0;
  while (b < n && w[b] == 0.0) ++b;
  std::size_t e = n;
  while (e > b && w[e - 1] == 0.0) --e;
  AxisWeights out{b, {}};
  out.weights.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) out.weights.push_back(w[i] / extent);
  return out;
}

namespace detail {

struct RegionWeights {
  AxisWeights rows;
  AxisWeights cols;
  PixelWindow window() const { return {rows.begin, rows.end(), cols.begin, cols.end()}; }
};

inline RegionWeights region_weights(const CropRegion& region, std::size_t height, std::size_t width) {
  const double W = static_cast<double>(width);
  const double H = static_cast<double>(height);
  return {axis_weights(height, region.y * H, (region.y + region.h) * H),
          axis_weights(width, region.x * W, (region.x + region.w) * W)};
}

/// sum_r sum_c rows[r] * cols[c] * map(r, c, :), with map given relative to
/// the weight window.
inline std::vector<double> weighted_sum(const DenseLabelMap& window_map, const RegionWeights& rw) {
  std::vector<double> out(window_map.num_classes(), 0.0);
  std::vector<double> row_acc(window_map.num_classes());
  for (std::size_t r = 0; r < rw.rows.weights.size(); ++r) {
    std::fill(row_acc.begin(), row_acc.end(), 0.0);
    for (std::size_t c = 0; c < rw.cols.weights.size(); ++c) {
      const double wc = rw.cols.weights[c];
      auto px = window_map.pixel(r, c);
      for (std::size_t k = 0; k < px.size(); ++k) row_acc[k] += wc * px[k];
    }
    const double wr = rw.rows.weights[r];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += wr * row_acc[k];
  }
  return out;
}

inline DenseLabelMap crop_window(const DenseLabelMap& map, const PixelWindow& win) {
  if (win.row_begin == 0 && win.col_begin == 0 && win.rows() == map.height() && win.cols() == map.width()) return map;
  const std::size_t C = map.num_classes();
  std::vector<double> values;
  values.reserve(win.rows() * win.cols() * C);
  for (std::size_t r = win.row_begin; r < win.row_end; ++r) {
    for (std::size_t c = win.col_begin; c < win.col_end; ++c) {
      auto px = map.pixel(r, c);
      values.insert(values.end(), px.begin(), px.end());
    }
  }
  return DenseLabelMap(win.rows(), win.cols(), C, std::move(values), map.mode());
}

/// Probabilities-path normalization; an all-zero vector becomes uniform.
inline PooledTarget renormalize(std::vector<double> v) {
  double sum = 0.0;
  for (double& x : v) {
    x = std::max(x, 0.0);
    sum += x;
  }
  if (!(sum > 0.0)) return PooledTarget::uniform(v.size());
  for (double& x : v) x /= sum;
  return PooledTarget(std::move(v));
}

}  // namespace detail

/// Mean of the bilinear label field over the region, per class channel.
inline std::vector<double> roi_align_1x1(const DenseLabelMap& map, const CropRegion& region) {
  const auto rw = detail::region_weights(region, map.height(), map.width());
  if (rw.window() == PixelWindow{0, map.height(), 0, map.width()}) return detail::weighted_sum(map, rw);
  return detail::weighted_sum(detail::crop_window(map, rw.window()), rw);
}

/// Same pooling over a top-k map: only the pixel window carrying non-zero
/// weight is densified (absent classes contribute 0).
inline std::vector<double> roi_align_1x1(const SparseLabelMap& map, const CropRegion& region) {
  const auto rw = detail::region_weights(region, map.height(), map.width());
  return detail::weighted_sum(densify_window(map, rw.window()), rw);
}

/// Crop target. Raw scores: softmax of the pooled scores. Probability maps
/// (dense or sparse): pooled probabilities divided by their sum, uniform if
/// the region carries no mass.
inline PooledTarget pool_label(const DenseLabelMap& map, const CropRegion& region) {
  if (map.mode() == ValueMode::RawScores) return PooledTarget(softmax(roi_align_1x1(map, region)));
  return detail::renormalize(roi_align_1x1(map, region));
}

inline PooledTarget pool_label(const SparseLabelMap& map, const CropRegion& region) {
  if (map.mode() == ValueMode::RawScores) return PooledTarget(softmax(roi_align_1x1(map, region)));
  return detail::renormalize(roi_align_1x1(map, region));
}

namespace detail {

inline std::vector<double> pixel_mean(const DenseLabelMap& map) {
  std::vector<double> out(map.num_classes(), 0.0);
  for (std::size_t p = 0; p < map.num_pixels(); ++p) {
    auto px = map.pixel(p);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += px[c];
  }
  for (double& v : out) v /= static_cast<double>(map.num_pixels());
  return out;
}

inline std::vector<double> pixel_mean(const SparseLabelMap& map) {
  std::vector<double> out(map.num_classes(), 0.0);
  for (std::size_t p = 0; p < map.num_pixels(); ++p) {
    auto idx = map.indices(p);
    auto val = map.values(p);
    for (std::size_t j = 0; j < map.k(); ++j) out[idx[j]] += val[j];
  }
  for (double& v : out) v /= static_cast<double>(map.num_pixels());
  return out;
}

}  // namespace detail

/// The four label constructions of the localized/global x multi/single
/// factor analysis. Single variants take the argmax (lowest index on ties);
/// global variants replace region pooling with the full-map mean.
template <class Map>
PooledTarget label_variant(const Map& map, const CropRegion& region, LabelVariant variant) {
  const std::size_t C = map.num_classes();
  const bool raw = map.mode() == ValueMode::RawScores;
  switch (variant) {
    case LabelVariant::LocMulti:
      return pool_label(map, region);
    case LabelVariant::LocSingle:
      return PooledTarget::one_hot(argmax(roi_align_1x1(map, region)), C);
    case LabelVariant::GlobMulti: {
      auto mean = detail::pixel_mean(map);
      return raw ? PooledTarget(softmax(mean)) : detail::renormalize(std::move(mean));
    }
    case LabelVariant::GlobSingle:
      return PooledTarget::one_hot(argmax(detail::pixel_mean(map)), C);
  }
  throw InvalidArgument("unknown label variant");
}

/// w * ours + (1 - w) * gt.
inline PooledTarget combine_labels(const PooledTarget& ours, const PooledTarget& gt, double w) {
  if (ours.size() != gt.size()) throw InvalidArgument("targets have different class counts");
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("mixing weight must lie in [0, 1]");
  std::vector<double> out(ours.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * ours[i] + (1.0 - w) * gt[i];
  return PooledTarget(std::move(out));
}

/// CutMix label mixing: lambda * t1 + (1 - lambda) * t2, lambda being the
/// area fraction kept from the first image.
inline PooledTarget cutmix_targets(const PooledTarget& t1, const PooledTarget& t2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0, 1]");
  return combine_labels(t1, t2, lambda);
}

/// -sum_c target[c] * log softmax(scores)[c], via log-sum-exp.
inline double cross_entropy(std::span<const double> scores, std::span<const double> target) {
  if (scores.size() != target.size() || scores.empty()) throw InvalidArgument("score/target length mismatch");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("non-finite score");
  }
  const double lse = log_sum_exp(scores);
  double loss = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (target[c] != 0.0) loss -= target[c] * (scores[c] - lse);
  }
  return std::max(loss, 0.0);
}

inline double cross_entropy(std::span<const double> scores, const PooledTarget& target) {
  return cross_entropy(scores, target.probs());
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace relabel
