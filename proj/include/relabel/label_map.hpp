#pragma once

// Dense and sparse label maps. Both are immutable after construction and
// store pixels in row-major order; the per-pixel class vector is contiguous.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relabel/error.hpp"
#include "relabel/quant.hpp"

namespace relabel {

enum class ValueMode : std::uint8_t { RawScores = 0, Probabilities = 1 };

inline constexpr std::size_t kMaxClasses = 65535;  // class ids are stored as u16

/// Largest pixel mass a Probabilities-mode sparse map may carry in format q:
/// 1 + 1e-4, widened by the round-to-nearest error of k stored values.
inline double max_pixel_mass(QuantFormat q, std::size_t k) {
  switch (q) {
    case QuantFormat::F32: return 1.0 + 1e-4;
    case QuantFormat::F16: return 1.0 + 1e-4 + std::ldexp(1.0, -11) + static_cast<double>(k) * std::ldexp(1.0, -25);
    case QuantFormat::F8: return 1.0 + 1e-4 + std::ldexp(1.0, -4) + static_cast<double>(k) * std::ldexp(1.0, -10);
  }
  return 1.0 + 1e-4;
}

/// H x W x C class scores for one image.
///
/// In Probabilities mode every value lies in [0, 1] and each pixel's mass is
/// at most 1 (+1e-5). A softmax output has mass exactly 1; a map densified
/// from a top-k store keeps only the retained mass.
class DenseLabelMap {
 public:
  DenseLabelMap(std::size_t height, std::size_t width, std::size_t num_classes, std::vector<double> values,
                ValueMode mode = ValueMode::RawScores)
      : height_(height), width_(width), classes_(num_classes), mode_(mode), values_(std::move(values)) {
    if (height_ == 0 || width_ == 0 || classes_ == 0) throw InvalidArgument("label map dimensions must be positive");
    if (values_.size() != height_ * width_ * classes_) {
      throw InvalidArgument("label map needs " + std::to_string(height_ * width_ * classes_) + " values, got " +
                            std::to_string(values_.size()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("label map contains a non-finite value");
    }
    if (mode_ == ValueMode::Probabilities) {
      for (std::size_t p = 0; p < height_ * width_; ++p) {
        double mass = 0.0;
        for (double v : pixel(p)) {
          if (v < 0.0 || v > 1.0) throw InvalidArgument("probability outside [0, 1]");
          mass += v;
        }
        if (mass > 1.0 + 1e-5) throw InvalidArgument("pixel probability mass exceeds 1");
      }
    }
  }

  static DenseLabelMap filled(std::size_t height, std::size_t width, std::size_t num_classes, double value,
                              ValueMode mode = ValueMode::RawScores) {
    return DenseLabelMap(height, width, num_classes, std::vector<double>(height * width * num_classes, value), mode);
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_classes() const { return classes_; }
  std::size_t num_pixels() const { return height_ * width_; }
  ValueMode mode() const { return mode_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> pixel(std::size_t index) const { return {values_.data() + index * classes_, classes_}; }
  std::span<const double> pixel(std::size_t row, std::size_t col) const { return pixel(row * width_ + col); }
  double at(std::size_t row, std::size_t col, std::size_t cls) const {
    return values_[(row * width_ + col) * classes_ + cls];
  }

  friend bool operator==(const DenseLabelMap&, const DenseLabelMap&) = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t classes_;
  ValueMode mode_;
  std::vector<double> values_;
};

/// Per-pixel top-k class ids and values. Values are already on the grid of
/// `quant()`, so writing them out and reading them back is lossless.
class SparseLabelMap {
 public:
  SparseLabelMap(std::size_t height, std::size_t width, std::size_t num_classes, std::size_t k, QuantFormat quant,
                 ValueMode mode, std::vector<std::uint16_t> indices, std::vector<float> values)
      : height_(height),
        width_(width),
        classes_(num_classes),
        k_(k),
        quant_(quant),
        mode_(mode),
        indices_(std::move(indices)),
        values_(std::move(values)) {
    validate();
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_classes() const { return classes_; }
  std::size_t k() const { return k_; }
  std::size_t num_pixels() const { return height_ * width_; }
  QuantFormat quant() const { return quant_; }
  ValueMode mode() const { return mode_; }

  std::span<const std::uint16_t> indices() const { return indices_; }
  std::span<const float> values() const { return values_; }
  std::span<const std::uint16_t> indices(std::size_t pixel) const { return {indices_.data() + pixel * k_, k_}; }
  std::span<const float> values(std::size_t pixel) const { return {values_.data() + pixel * k_, k_}; }

  friend bool operator==(const SparseLabelMap&, const SparseLabelMap&) = default;

 private:
  void validate() const {
    if (height_ == 0 || width_ == 0 || classes_ == 0) throw InvalidArgument("label map dimensions must be positive");
    if (classes_ > kMaxClasses) throw InvalidArgument("at most 65535 classes are supported");
    if (k_ < 1 || k_ > classes_) throw InvalidArgument("k must lie in [1, C]");
    const std::size_t n = height_ * width_ * k_;
    if (indices_.size() != n || values_.size() != n) throw InvalidArgument("sparse map arrays have the wrong length");
    std::vector<bool> seen(classes_);
    for (std::size_t p = 0; p < num_pixels(); ++p) {
      auto idx = indices(p);
      auto val = values(p);
      double mass = 0.0;
      for (std::size_t j = 0; j < k_; ++j) {
        if (idx[j] >= classes_) throw InvalidArgument("class index out of range");
        if (seen[idx[j]]) throw InvalidArgument("duplicate class index within a pixel");
        seen[idx[j]] = true;
        if (!std::isfinite(val[j])) throw InvalidArgument("non-finite sparse value");
        if (j > 0 && val[j] > val[j - 1]) throw InvalidArgument("sparse values must be non-increasing per pixel");
        if (quantize(val[j], quant_) != val[j]) throw InvalidArgument("sparse value not representable in its format");
        mass += val[j];
      }
      for (std::size_t j = 0; j < k_; ++j) seen[idx[j]] = false;
      if (mode_ == ValueMode::Probabilities && mass > max_pixel_mass(quant_, k_)) {
        throw InvalidArgument("pixel probability mass exceeds 1");
      }
    }
  }

  std::size_t height_;
  std::size_t width_;
  std::size_t classes_;
  std::size_t k_;
  QuantFormat quant_;
  ValueMode mode_;
  std::vector<std::uint16_t> indices_;
  std::vector<float> values_;
};

}  // namespace relabel
