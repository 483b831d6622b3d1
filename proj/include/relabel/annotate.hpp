#pragma once

// Label-map generation from a classifier's last feature map: the global
// pooling layer is dropped and the linear head is applied at every spatial
// position as a 1x1 convolution.
//
// Feature/head/map files ("RLFT", little-endian, f32 payloads):
//   "RLFT" | u16 version=1 | u8 kind | u8 flags
//   kind 0 (features) / 2 (dense label maps):
//     u16 H | u16 W | u32 channels | u64 count
//     count x (u16 id_len | id | H*W*channels f32, row-major, channel fastest)
//   kind 1 (classifier head):
//     u32 d | u32 C | d*C f32 weights (row j = input channel) | C f32 bias if flags&1

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relabel/binary_io.hpp"
#include "relabel/error.hpp"
#include "relabel/label_map.hpp"
#include "relabel/math.hpp"

namespace relabel {

/// H x W x d activations, channel fastest.
class FeatureMap {
 public:
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values)
      : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    if (height_ == 0 || width_ == 0 || channels_ == 0) throw InvalidArgument("feature map dimensions must be positive");
    if (values_.size() != height_ * width_ * channels_) throw InvalidArgument("feature map has the wrong number of values");
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("feature map contains a non-finite value");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> pixel(std::size_t index) const { return {values_.data() + index * channels_, channels_}; }

  /// Spatial mean per channel (global average pooling).
  std::vector<double> mean() const {
    std::vector<double> out(channels_, 0.0);
    const std::size_t n = height_ * width_;
    for (std::size_t p = 0; p < n; ++p) {
      auto px = pixel(p);
      for (std::size_t j = 0; j < channels_; ++j) out[j] += px[j];
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<double> values_;
};

/// Linear classifier head: scores = features * weights + bias.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t in_channels, std::size_t num_classes, std::vector<double> weights,
                 std::vector<double> bias = {})
      : d_(in_channels), classes_(num_classes), weights_(std::move(weights)), bias_(std::move(bias)) {
    if (d_ == 0 || classes_ == 0) throw InvalidArgument("classifier head dimensions must be positive");
    if (weights_.size() != d_ * classes_) throw InvalidArgument("classifier weights must have d*C entries");
    if (bias_.empty()) bias_.assign(classes_, 0.0);
    if (bias_.size() != classes_) throw InvalidArgument("classifier bias must have C entries");
    for (double v : weights_) {
      if (!std::isfinite(v)) throw InvalidArgument("classifier weights contain a non-finite value");
    }
    for (double v : bias_) {
      if (!std::isfinite(v)) throw InvalidArgument("classifier bias contains a non-finite value");
    }
  }

  std::size_t in_channels() const { return d_; }
  std::size_t num_classes() const { return classes_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> bias() const { return bias_; }
  double weight(std::size_t j, std::size_t c) const { return weights_[j * classes_ + c]; }

  /// Ordinary fully-connected evaluation on one pooled feature vector.
  std::vector<double> apply(std::span<const double> feature) const {
    if (feature.size() != d_) throw InvalidArgument("feature length does not match the head");
    std::vector<double> out(bias_.begin(), bias_.end());
    for (std::size_t j = 0; j < d_; ++j) {
      const double f = feature[j];
      const double* row = weights_.data() + j * classes_;
      for (std::size_t c = 0; c < classes_; ++c) out[c] += f * row[c];
    }
    return out;
  }

 private:
  std::size_t d_;
  std::size_t classes_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

/// Applies the head at every spatial position; the result is a raw-score
/// label map with the feature map's spatial size.
inline DenseLabelMap fc_to_pointwise_conv(const FeatureMap& features, const ClassifierHead& head) {
  if (features.channels() != head.in_channels()) {
    throw InvalidArgument("feature channels (" + std::to_string(features.channels()) + ") do not match head input (" +
                          std::to_string(head.in_channels()) + ")");
  }
  const std::size_t n = features.height() * features.width();
  std::vector<double> values;
  values.reserve(n * head.num_classes());
  for (std::size_t p = 0; p < n; ++p) {
    const std::vector<double> scores = head.apply(features.pixel(p));
    values.insert(values.end(), scores.begin(), scores.end());
  }
  return DenseLabelMap(features.height(), features.width(), head.num_classes(), std::move(values),
                       ValueMode::RawScores);
}

/// Spatial mean of a raw-score map per class.
inline std::vector<double> spatial_mean(const DenseLabelMap& map) {
  std::vector<double> out(map.num_classes(), 0.0);
  for (std::size_t p = 0; p < map.num_pixels(); ++p) {
    auto px = map.pixel(p);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += px[c];
  }
  for (double& v : out) v /= static_cast<double>(map.num_pixels());
  return out;
}

/// The image-level prediction: softmax of the globally pooled scores.
inline std::vector<double> global_label(const DenseLabelMap& map) {
  if (map.mode() != ValueMode::RawScores) {
    throw InvalidArgument("global_label expects raw scores; pool probability maps with the pooling functions");
  }
  return softmax(spatial_mean(map));
}

// ---------------------------------------------------------------------------
// RLFT files

inline constexpr char kFeatureMagic[4] = {'R', 'L', 'F', 'T'};
inline constexpr std::uint16_t kFeatureVersion = 1;

enum class TensorFileKind : std::uint8_t { Features = 0, Head = 1, LabelMaps = 2 };

/// One id-tagged H x W x channels grid, as stored in kind 0 and kind 2 files.
struct NamedGrid {
  std::string id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;
};

namespace detail {

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

inline std::pair<TensorFileKind, std::uint8_t> read_tensor_preamble(ByteReader& in, const std::string& what) {
  if (in.str(4) != std::string(kFeatureMagic, 4)) throw FormatError(what + " has a bad magic number");
  const std::uint16_t version = in.u16();
  if (version != kFeatureVersion) throw FormatError(what + " has unsupported version " + std::to_string(version));
  const std::uint8_t kind = in.u8();
  if (kind > 2) throw FormatError(what + " has unknown kind " + std::to_string(kind));
  return {static_cast<TensorFileKind>(kind), in.u8()};
}

inline void write_tensor_preamble(ByteWriter& out, TensorFileKind kind, std::uint8_t flags) {
  out.raw(std::string_view(kFeatureMagic, 4));
  out.u16(kFeatureVersion);
  out.u8(static_cast<std::uint8_t>(kind));
  out.u8(flags);
}

}  // namespace detail

inline void write_grids(const std::filesystem::path& path, TensorFileKind kind, std::span<const NamedGrid> grids) {
  if (kind == TensorFileKind::Head) throw InvalidArgument("use write_head for classifier heads");
  if (grids.empty()) throw InvalidArgument("nothing to write");
  const NamedGrid& first = grids.front();
  detail::ByteWriter out;
  detail::write_tensor_preamble(out, kind, 0);
  out.u16(static_cast<std::uint16_t>(first.height));
  out.u16(static_cast<std::uint16_t>(first.width));
  out.u32(static_cast<std::uint32_t>(first.channels));
  out.u64(grids.size());
  for (const auto& g : grids) {
    if (g.height != first.height || g.width != first.width || g.channels != first.channels) {
      throw InvalidArgument("all grids in one file must share their shape");
    }
    if (g.values.size() != g.height * g.width * g.channels) throw InvalidArgument("grid '" + g.id + "' has the wrong size");
    out.u16(static_cast<std::uint16_t>(g.id.size()));
    out.raw(g.id);
    for (double v : g.values) out.f32(static_cast<float>(v));
  }
  detail::spill(path, out.bytes());
}

inline std::pair<TensorFileKind, std::vector<NamedGrid>> read_grids(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const std::string what = "'" + path.string() + "'";
  detail::ByteReader in(bytes, what);
  const auto [kind, flags] = detail::read_tensor_preamble(in, what);
  (void)flags;
  if (kind == TensorFileKind::Head) throw FormatError(what + " holds a classifier head, not feature grids");
  const std::size_t h = in.u16();
  const std::size_t w = in.u16();
  const std::size_t ch = in.u32();
  const std::uint64_t count = in.u64();
  if (h == 0 || w == 0 || ch == 0) throw FormatError(what + " has invalid dimensions");
  const std::size_t cells = h * w * ch;
  if (count > in.remaining() / (2 + 4 * cells)) throw FormatError(what + " is truncated");
  std::vector<NamedGrid> grids;
  grids.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedGrid g;
    g.id = in.str(in.u16());
    g.height = h;
    g.width = w;
    g.channels = ch;
    g.values.resize(cells);
    for (double& v : g.values) v = in.f32();
    grids.push_back(std::move(g));
  }
  return {kind, std::move(grids)};
}

inline void write_head(const std::filesystem::path& path, const ClassifierHead& head, bool with_bias = true) {
  detail::ByteWriter out;
  detail::write_tensor_preamble(out, TensorFileKind::Head, with_bias ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(head.in_channels()));
  out.u32(static_cast<std::uint32_t>(head.num_classes()));
  for (double v : head.weights()) out.f32(static_cast<float>(v));
  if (with_bias) {
    for (double v : head.bias()) out.f32(static_cast<float>(v));
  }
  detail::spill(path, out.bytes());
}

inline ClassifierHead read_head(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const std::string what = "'" + path.string() + "'";
  detail::ByteReader in(bytes, what);
  const auto [kind, flags] = detail::read_tensor_preamble(in, what);
  if (kind != TensorFileKind::Head) throw FormatError(what + " is not a classifier head file");
  const std::size_t d = in.u32();
  const std::size_t c = in.u32();
  if (d == 0 || c == 0) throw FormatError(what + " has invalid dimensions");
  if (in.remaining() < 4 * d * c) throw FormatError(what + " is truncated");
  std::vector<double> weights(d * c);
  for (double& v : weights) v = in.f32();
  std::vector<double> bias;
  if (flags & 1u) {
    bias.resize(c);
    for (double& v : bias) v = in.f32();
  }
  try {
    return ClassifierHead(d, c, std::move(weights), std::move(bias));
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace relabel
