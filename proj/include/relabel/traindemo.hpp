#pragma once

// Desk-scale experiments on synthetic multi-object scenes:
//  * conflicting_label_demo: a softmax classifier shown one input with
//    conflicting one-hot labels converges to their average.
//  * train: a linear softmax model trained on random crops, supervised either
//    by the scene's single (majority) label or by one of the pooled label
//    variants computed from the scene's oracle label map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relabel/augment.hpp"
#include "relabel/csv.hpp"
#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/label_map.hpp"
#include "relabel/math.hpp"
#include "relabel/pooling.hpp"
#include "relabel/rng.hpp"

namespace relabel {

// ---------------------------------------------------------------------------
// Conflicting labels

struct ConflictResult {
  std::vector<double> probs;                 // final softmax output
  std::vector<std::vector<double>> history;  // output after every step
};

/// Gradient descent on the mean cross-entropy of one fixed input presented
/// once with each label of `label_cycle` per step. The model is linear,
/// logits = W^T x + b, started at zero.
inline ConflictResult conflicting_label_demo(std::span<const std::size_t> label_cycle, std::size_t num_classes,
                                             std::size_t steps, double lr) {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (num_classes < 2) throw InvalidArgument("need at least two classes");
  if (label_cycle.empty()) throw InvalidArgument("label cycle is empty");
  if (!(lr > 0.0 && std::isfinite(lr))) throw InvalidArgument("learning rate must be finite and > 0");
  for (std::size_t y : label_cycle) {
    if (y >= num_classes) throw InvalidArgument("label out of range");
  }
  const std::vector<double> x = {1.0, -0.5, 0.25};
  std::vector<double> W(x.size() * num_classes, 0.0);
  std::vector<double> b(num_classes, 0.0);
  std::vector<double> mean_target(num_classes, 0.0);
  for (std::size_t y : label_cycle) mean_target[y] += 1.0 / static_cast<double>(label_cycle.size());

  auto logits = [&] {
    std::vector<double> z(b);
    for (std::size_t j = 0; j < x.size(); ++j) {
      for (std::size_t c = 0; c < num_classes; ++c) z[c] += x[j] * W[j * num_classes + c];
    }
    return z;
  };

  ConflictResult result;
  result.history.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    // d/dz of the mean CE over the cycle is softmax(z) - mean one-hot target.
    const std::vector<double> p = softmax(logits());
    for (std::size_t c = 0; c < num_classes; ++c) {
      const double g = p[c] - mean_target[c];
      b[c] -= lr * g;
      for (std::size_t j = 0; j < x.size(); ++j) W[j * num_classes + c] -= lr * x[j] * g;
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(W.begin(), W.end(), finite) || !std::all_of(b.begin(), b.end(), finite)) {
      throw DivergenceError("conflicting-label demo diverged at step " + std::to_string(step));
    }
    result.history.push_back(softmax(logits()));
  }
  result.probs = result.history.back();
  return result;
}

/// Two classes, labels 0 and 1 presented alternately.
inline ConflictResult conflicting_label_demo(std::size_t steps, double lr) {
  const std::size_t cycle[] = {0, 1};
  return conflicting_label_demo(cycle, 2, steps, lr);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneConfig {
  std::size_t height = 15;
  std::size_t width = 15;
  std::size_t num_classes = 6;  // class 0 is background
  std::size_t objects_per_scene = 2;
  double min_side = 0.3;  // object side as a fraction of the grid side
  double max_side = 0.7;
};

struct ClassBox {
  std::size_t cls = 0;
  Box box;
};

struct SyntheticScene {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> grid;  // class id per pixel, row-major
  std::vector<ClassBox> gt_boxes;   // bounding box of every non-background class present
  DenseLabelMap oracle_map;         // one-hot probabilities per pixel
  std::size_t single_label = 0;     // class covering the most pixels (lowest id on ties)
};

/// Rectangular objects of distinct foreground classes painted in order over
/// background class 0; later objects occlude earlier ones.
inline std::vector<SyntheticScene> make_synthetic_dataset(std::uint64_t seed, std::size_t n_scenes,
                                                          const SceneConfig& cfg) {
  if (cfg.num_classes < 2) throw InvalidArgument("need at least two classes (background + one object)");
  if (cfg.num_classes > kMaxClasses) throw InvalidArgument("too many classes");
  if (cfg.height == 0 || cfg.width == 0) throw InvalidArgument("infeasible geometry: empty grid");
  if (!(cfg.min_side > 0.0 && cfg.min_side <= cfg.max_side && cfg.max_side <= 1.0)) {
    throw InvalidArgument("infeasible geometry: need 0 < min_side <= max_side <= 1");
  }
  if (cfg.objects_per_scene > cfg.num_classes - 1) {
    throw InvalidArgument("infeasible geometry: more objects than foreground classes");
  }
  const std::size_t H = cfg.height;
  const std::size_t W = cfg.width;
  const std::size_t C = cfg.num_classes;
  auto side = [](Rng& rng, double lo, double hi, std::size_t n) {
    const auto a = static_cast<std::size_t>(std::max(1.0, std::round(lo * static_cast<double>(n))));
    const auto b = static_cast<std::size_t>(std::max(1.0, std::round(hi * static_cast<double>(n))));
    return std::min(n, a + static_cast<std::size_t>(rng.below(b - std::min(a, b) + 1)));
  };

  std::vector<SyntheticScene> scenes;
  scenes.reserve(n_scenes);
  for (std::size_t s = 0; s < n_scenes; ++s) {
    Rng rng = Rng::derive(seed, s);
    std::vector<std::uint16_t> grid(H * W, 0);
    std::vector<std::size_t> classes(C - 1);
    for (std::size_t c = 0; c < classes.size(); ++c) classes[c] = c + 1;
    for (std::size_t o = 0; o < cfg.objects_per_scene; ++o) {
      const std::size_t pick = o + static_cast<std::size_t>(rng.below(classes.size() - o));
      std::swap(classes[o], classes[pick]);
      const std::size_t h = side(rng, cfg.min_side, cfg.max_side, H);
      const std::size_t w = side(rng, cfg.min_side, cfg.max_side, W);
      const std::size_t top = static_cast<std::size_t>(rng.below(H - h + 1));
      const std::size_t left = static_cast<std::size_t>(rng.below(W - w + 1));
      for (std::size_t r = top; r < top + h; ++r) {
        for (std::size_t c = left; c < left + w; ++c) grid[r * W + c] = static_cast<std::uint16_t>(classes[o]);
      }
    }

    std::vector<std::size_t> counts(C, 0);
    std::vector<std::size_t> r0(C, H), r1(C, 0), c0(C, W), c1(C, 0);
    std::vector<double> onehot(H * W * C, 0.0);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t k = grid[r * W + c];
        ++counts[k];
        r0[k] = std::min(r0[k], r);
        r1[k] = std::max(r1[k], r + 1);
        c0[k] = std::min(c0[k], c);
        c1[k] = std::max(c1[k], c + 1);
        onehot[(r * W + c) * C + k] = 1.0;
      }
    }
    SyntheticScene scene{H, W, std::move(grid), {}, DenseLabelMap(H, W, C, std::move(onehot), ValueMode::Probabilities),
                         0};
    for (std::size_t k = 1; k < C; ++k) {
      if (counts[k] == 0) continue;
      scene.gt_boxes.push_back({k, Box(static_cast<double>(c0[k]) / W, static_cast<double>(r0[k]) / H,
                                       static_cast<double>(c1[k]) / W, static_cast<double>(r1[k]) / H)});
    }
    scene.single_label =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

/// Exact area fraction of each class inside the region.
inline std::vector<double> class_histogram(const SyntheticScene& scene, std::size_t num_classes,
                                           const CropRegion& region) {
  std::vector<double> hist(num_classes, 0.0);
  const double H = static_cast<double>(scene.height);
  const double W = static_cast<double>(scene.width);
  const double ya = region.y * H, yb = (region.y + region.h) * H;
  const double xa = region.x * W, xb = (region.x + region.w) * W;
  const auto rb = static_cast<std::size_t>(std::max(0.0, std::floor(ya)));
  const auto re = std::min(scene.height, static_cast<std::size_t>(std::ceil(yb)));
  const auto cb = static_cast<std::size_t>(std::max(0.0, std::floor(xa)));
  const auto ce = std::min(scene.width, static_cast<std::size_t>(std::ceil(xb)));
  double total = 0.0;
  for (std::size_t r = rb; r < re; ++r) {
    const double oy = std::min(yb, r + 1.0) - std::max(ya, static_cast<double>(r));
    if (oy <= 0.0) continue;
    for (std::size_t c = cb; c < ce; ++c) {
      const double ox = std::min(xb, c + 1.0) - std::max(xa, static_cast<double>(c));
      if (ox <= 0.0) continue;
      hist[scene.grid[r * scene.width + c]] += ox * oy;
      total += ox * oy;
    }
  }
  for (double& v : hist) v /= total;
  return hist;
}

// ---------------------------------------------------------------------------
// Tiny model

/// Linear softmax classifier over C-dimensional class-histogram features:
/// logits[c] = bias[c] + sum_j features[j] * weights[j][c].
class TinyModel {
 public:
  explicit TinyModel(std::size_t num_classes)
      : classes_(num_classes), weights_(num_classes * num_classes, 0.0), bias_(num_classes, 0.0) {}

  std::size_t num_classes() const { return classes_; }
  std::size_t num_parameters() const { return weights_.size() + bias_.size(); }

  std::vector<double> logits(std::span<const double> features) const {
    std::vector<double> z(bias_);
    for (std::size_t j = 0; j < classes_; ++j) {
      if (features[j] == 0.0) continue;
      for (std::size_t c = 0; c < classes_; ++c) z[c] += features[j] * weights_[j * classes_ + c];
    }
    return z;
  }

  double loss(std::span<const double> features, std::span<const double> target) const {
    return cross_entropy(logits(features), target);
  }

  /// d loss / d parameters, weights (row-major) followed by bias.
  std::vector<double> gradient(std::span<const double> features, std::span<const double> target) const {
    const std::vector<double> p = softmax(logits(features));
    std::vector<double> g(num_parameters(), 0.0);
    for (std::size_t c = 0; c < classes_; ++c) {
      const double d = p[c] - target[c];
      for (std::size_t j = 0; j < classes_; ++j) g[j * classes_ + c] = features[j] * d;
      g[weights_.size() + c] = d;
    }
    return g;
  }

  void step(std::span<const double> gradient, double lr) {
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] -= lr * gradient[i];
    for (std::size_t c = 0; c < classes_; ++c) bias_[c] -= lr * gradient[weights_.size() + c];
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(weights_.begin(), weights_.end(), finite) || !std::all_of(bias_.begin(), bias_.end(), finite)) {
      throw DivergenceError("tiny model parameters became non-finite");
    }
  }

  std::vector<double> parameters() const {
    std::vector<double> out(weights_);
    out.insert(out.end(), bias_.begin(), bias_.end());
    return out;
  }
  void set_parameters(std::span<const double> p) {
    if (p.size() != num_parameters()) throw InvalidArgument("parameter vector has the wrong size");
    std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(weights_.size()), weights_.begin());
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(weights_.size()), p.end(), bias_.begin());
  }

 private:
  std::size_t classes_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

// ---------------------------------------------------------------------------
// Crop-level training

enum class Supervision { OriginalSingle, LocMulti, LocSingle, GlobMulti, GlobSingle };

inline std::string_view to_string(Supervision s) {
  switch (s) {
    case Supervision::OriginalSingle: return "original_single";
    case Supervision::LocMulti: return "loc_multi";
    case Supervision::LocSingle: return "loc_single";
    case Supervision::GlobMulti: return "glob_multi";
    case Supervision::GlobSingle: return "glob_single";
  }
  return "?";
}

inline constexpr Supervision kAllSupervisions[] = {Supervision::OriginalSingle, Supervision::LocMulti,
                                                   Supervision::LocSingle, Supervision::GlobMulti,
                                                   Supervision::GlobSingle};

/// Training target for a crop under the given supervision.
inline PooledTarget crop_target(const SyntheticScene& scene, const CropRegion& region, Supervision s) {
  const std::size_t C = scene.oracle_map.num_classes();
  switch (s) {
    case Supervision::OriginalSingle: return PooledTarget::one_hot(scene.single_label, C);
    case Supervision::LocMulti: return label_variant(scene.oracle_map, region, LabelVariant::LocMulti);
    case Supervision::LocSingle: return label_variant(scene.oracle_map, region, LabelVariant::LocSingle);
    case Supervision::GlobMulti: return label_variant(scene.oracle_map, region, LabelVariant::GlobMulti);
    case Supervision::GlobSingle: return label_variant(scene.oracle_map, region, LabelVariant::GlobSingle);
  }
  throw InvalidArgument("unknown supervision");
}

struct TrainConfig {
  Supervision supervision = Supervision::LocMulti;
  CropParams crop{};
  std::size_t steps = 20000;
  double lr = 0.5;
  std::uint64_t seed = 0;
  double heldout_fraction = 0.25;  // trailing share of the dataset used for evaluation
  std::size_t eval_crops = 4000;
};

struct TrainReport {
  Supervision supervision = Supervision::LocMulti;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t train_scenes = 0;
  std::size_t heldout_scenes = 0;
  std::size_t eval_crops = 0;
  double final_loss = 0.0;  // mean training loss over the last 10% of steps
  double accuracy = 0.0;    // held-out crops whose predicted class = argmax of the pooled oracle map
};

/// Plain SGD, one crop per step. The crop sequence depends only on the seed,
/// so runs with different supervision see identical crops.
inline TrainReport train(std::span<const SyntheticScene> dataset, const TrainConfig& cfg) {
  if (dataset.size() < 2) throw InvalidArgument("dataset needs at least two scenes (train + held-out)");
  if (cfg.steps == 0) throw InvalidArgument("steps must be positive");
  if (!(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0)) {
    throw InvalidArgument("held-out fraction must lie in (0, 1)");
  }
  const std::size_t C = dataset.front().oracle_map.num_classes();
  const auto heldout = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(cfg.heldout_fraction * static_cast<double>(dataset.size()))), 1,
      dataset.size() - 1);
  const std::size_t n_train = dataset.size() - heldout;

  TinyModel model(C);
  Rng rng = Rng::derive(cfg.seed, 0x7261696E);
  const std::size_t tail = std::max<std::size_t>(1, cfg.steps / 10);
  double tail_loss = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const SyntheticScene& scene = dataset[rng.below(n_train)];
    const CropRegion region = sample_crop(rng, cfg.crop, {static_cast<double>(scene.width), static_cast<double>(scene.height)});
    const std::vector<double> features = class_histogram(scene, C, region);
    const PooledTarget target = crop_target(scene, region, cfg.supervision);
    if (step + tail >= cfg.steps) tail_loss += model.loss(features, target.probs());
    model.step(model.gradient(features, target.probs()), cfg.lr);
  }

  Rng eval_rng = Rng::derive(cfg.seed, 0x6576616C);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cfg.eval_crops; ++i) {
    const SyntheticScene& scene = dataset[n_train + eval_rng.below(heldout)];
    const CropRegion region =
        sample_crop(eval_rng, cfg.crop, {static_cast<double>(scene.width), static_cast<double>(scene.height)});
    const std::size_t truth = pool_label(scene.oracle_map, region).top_class();
    if (argmax(model.logits(class_histogram(scene, C, region))) == truth) ++correct;
  }

  TrainReport report;
  report.supervision = cfg.supervision;
  report.seed = cfg.seed;
  report.steps = cfg.steps;
  report.train_scenes = n_train;
  report.heldout_scenes = heldout;
  report.eval_crops = cfg.eval_crops;
  report.final_loss = tail_loss / static_cast<double>(tail);
  report.accuracy = cfg.eval_crops ? static_cast<double>(correct) / static_cast<double>(cfg.eval_crops) : 0.0;
  return report;
}

inline void write_train_reports_csv(std::ostream& out, std::span<const TrainReport> reports) {
  out << "supervision,seed,steps,train_scenes,heldout_scenes,eval_crops,final_loss,accuracy\n";
  for (const auto& r : reports) {
    out << to_string(r.supervision) << ',' << r.seed << ',' << r.steps << ',' << r.train_scenes << ','
        << r.heldout_scenes << ',' << r.eval_crops << ',' << format_number(r.final_loss) << ','
        << format_number(r.accuracy) << '\n';
  }
}

}  // namespace relabel
