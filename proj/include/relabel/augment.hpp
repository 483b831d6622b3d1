#pragma once

// Random-resized-crop and CutMix box sampling in normalized coordinates.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>

#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/rng.hpp"

namespace relabel {

/// Ranges for random-resized-crop. Defaults: 8%-100% of the image area,
/// aspect ratio (width / height, in pixels) 3/4 to 4/3, ten attempts.
struct CropParams {
  double area_lo = 0.08;
  double area_hi = 1.0;
  double aspect_lo = 3.0 / 4.0;
  double aspect_hi = 4.0 / 3.0;
  int max_attempts = 10;

  void validate() const {
    if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi <= 1.0)) {
      throw InvalidArgument("area range must satisfy 0 < lo <= hi <= 1");
    }
    if (!(aspect_lo > 0.0 && aspect_lo <= aspect_hi && std::isfinite(aspect_hi))) {
      throw InvalidArgument("aspect range must satisfy 0 < lo <= hi");
    }
    if (max_attempts < 0) throw InvalidArgument("max_attempts must be >= 0");
  }
};

/// Parses "area=LO:HI,aspect=LO:HI[,attempts=N]"; omitted keys keep defaults.
inline CropParams parse_crop_params(std::string_view text) {
  CropParams p;
  auto number = [](std::string_view s) {
    const std::string str(s);
    char* end = nullptr;
    const double v = std::strtod(str.c_str(), &end);
    if (str.empty() || end != str.c_str() + str.size()) throw InvalidArgument("bad number '" + str + "' in crop params");
    return v;
  };
  auto range = [&](std::string_view s, double& lo, double& hi) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw InvalidArgument("expected LO:HI in crop params, got '" + std::string(s) + "'");
    lo = number(s.substr(0, colon));
    hi = number(s.substr(colon + 1));
  };
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument("expected key=value in crop params, got '" + std::string(item) + "'");
    const std::string_view key = item.substr(0, eq);
    const std::string_view value = item.substr(eq + 1);
    if (key == "area") {
      range(value, p.area_lo, p.area_hi);
    } else if (key == "aspect") {
      range(value, p.aspect_lo, p.aspect_hi);
    } else if (key == "attempts") {
      p.max_attempts = static_cast<int>(number(value));
    } else {
      throw InvalidArgument("unknown crop param '" + std::string(key) + "'");
    }
  }
  p.validate();
  return p;
}

/// Source image size in pixels; only the ratio matters for sampling.
struct ImageSize {
  double width = 1.0;
  double height = 1.0;
};

struct CropSample {
  CropRegion region;
  bool fallback = false;  // every attempt was rejected
};

/// Rejection sampler: area ~ U(area range) times the image area, aspect
/// log-uniform in the aspect range; accepted if the crop fits, placed
/// uniformly. After max_attempts rejections, the largest centered crop with
/// the aspect clamped into range.
inline CropSample sample_crop_detailed(Rng& rng, const CropParams& params, ImageSize image = {}) {
  params.validate();
  if (!(image.width > 0.0 && image.height > 0.0)) throw InvalidArgument("image size must be positive");
  const double image_area = image.width * image.height;
  const double log_lo = std::log(params.aspect_lo);
  const double log_hi = std::log(params.aspect_hi);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const double target_area = image_area * rng.uniform(params.area_lo, params.area_hi);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const double w = std::sqrt(target_area * aspect);
    const double h = std::sqrt(target_area / aspect);
    if (w <= image.width && h <= image.height) {
      const double left = rng.uniform(0.0, image.width - w);
      const double top = rng.uniform(0.0, image.height - h);
      return {CropRegion(left / image.width, top / image.height, w / image.width, h / image.height), false};
    }
  }
  const double ratio = image.width / image.height;
  double w = image.width;
  double h = image.height;
  if (ratio < params.aspect_lo) {
    h = w / params.aspect_lo;
  } else if (ratio > params.aspect_hi) {
    w = h * params.aspect_hi;
  }
  const double nw = w / image.width;
  const double nh = h / image.height;
  return {CropRegion((1.0 - nw) / 2.0, (1.0 - nh) / 2.0, nw, nh), true};
}

inline CropRegion sample_crop(Rng& rng, const CropParams& params, ImageSize image = {}) {
  return sample_crop_detailed(rng, params, image).region;
}

struct CutMixSample {
  Box box;        // region pasted from the second image; may be empty
  double lambda;  // fraction of the first image that remains, 1 - area(box)
};

/// Square cut of side sqrt(1 - lambda) centred at (cx, cy), clipped to the
/// image; lambda is recomputed from the clipped area.
inline CutMixSample cutmix_box_at(double lambda, double cx, double cy) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("lambda must lie in [0, 1]");
  const double side = std::sqrt(1.0 - lambda);
  const double x0 = std::clamp(cx - side / 2.0, 0.0, 1.0);
  const double x1 = std::clamp(cx + side / 2.0, 0.0, 1.0);
  const double y0 = std::clamp(cy - side / 2.0, 0.0, 1.0);
  const double y1 = std::clamp(cy + side / 2.0, 0.0, 1.0);
  const Box box(x0, y0, x1, y1);
  return {box, 1.0 - box.area()};
}

/// lambda ~ Beta(alpha, alpha), centre uniform over the image.
inline CutMixSample cutmix_box(Rng& rng, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("CutMix alpha must be > 0");
  const double lambda = rng.beta(alpha, alpha);
  const double cx = rng.uniform();
  const double cy = rng.uniform();
  return cutmix_box_at(lambda, cx, cy);
}

}  // namespace relabel
