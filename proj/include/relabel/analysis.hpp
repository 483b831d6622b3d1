#pragma once

// Crop statistics: how random-resized crops overlap the ground-truth boxes
// (cumulative IoU distribution) and how confident the pooled label is as a
// function of that overlap.
//
// Seeding: crop_iou_cdf draws the crops of image i from Rng::derive(seed, i);
// confidence_vs_iou draws samples in blocks of kSampleBlock, block b from
// Rng::derive(seed, b). Results do not depend on the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <functional>
#include <istream>
#include <future>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "relabel/augment.hpp"
#include "relabel/csv.hpp"
#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/pooling.hpp"
#include "relabel/rng.hpp"
#include "relabel/store.hpp"

namespace relabel {

struct ImageBoxes {
  std::string id;
  std::vector<Box> boxes;
  ImageSize size{};
};

/// Reads "image_id,x0,y0,x1,y1" rows (normalized corners; an optional
/// header row is skipped). Images keep their first-appearance order.
inline std::vector<ImageBoxes> read_boxes_csv(std::istream& in, const std::string& what = "boxes") {
  std::vector<ImageBoxes> out;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty() || row.front() == '#') continue;
    const auto f = split_fields(row);
    if (f.size() != 5) throw FormatError(what + ":" + std::to_string(line_no) + ": expected 5 fields");
    double v[4];
    bool numeric = true;
    for (int i = 0; i < 4; ++i) {
      const std::string s(trim(f[static_cast<std::size_t>(i) + 1]));
      char* end = nullptr;
      v[i] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) numeric = false;
    }
    if (!numeric) {
      if (line_no == 1 || out.empty()) continue;  // header
      throw FormatError(what + ":" + std::to_string(line_no) + ": non-numeric coordinate");
    }
    Box box;
    try {
      box = Box(v[0], v[1], v[2], v[3]);
    } catch (const InvalidArgument& e) {
      throw FormatError(what + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (box.empty()) throw FormatError(what + ":" + std::to_string(line_no) + ": box has zero area");
    const std::string id(trim(f[0]));
    auto [it, inserted] = index.emplace(id, out.size());
    if (inserted) out.push_back({id, {}, {}});
    out[it->second].boxes.push_back(box);
  }
  return out;
}

inline std::vector<ImageBoxes> read_boxes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_boxes_csv(in, path.string());
}

/// Best overlap of a crop with any of the boxes (0 for no boxes).
inline double max_iou(const CropRegion& region, std::span<const Box> boxes) {
  double best = 0.0;
  const Box crop = Box::from(region);
  for (const Box& b : boxes) best = std::max(best, iou(crop, b));
  return best;
}

struct CdfTable {
  std::vector<double> thresholds;           // 0, 0.01, ..., 1
  std::vector<double> cumulative_fraction;  // P(IoU <= threshold)
  std::size_t sample_count = 0;
  double fraction_no_overlap = 0.0;  // IoU == 0
  double fraction_above_half = 0.0;  // IoU > 0.5
  std::size_t skipped_images = 0;    // images without boxes
};

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Max-over-boxes IoU of every sampled crop, image-major in input order.
/// Images without boxes contribute no samples.
inline std::vector<double> crop_ious(std::span<const ImageBoxes> images, const CropParams& params,
                                     std::size_t crops_per_image, std::uint64_t seed,
                                     std::size_t workers = default_workers()) {
  params.validate();
  std::vector<std::vector<double>> per_image(images.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (images[i].boxes.empty()) continue;
      Rng rng = Rng::derive(seed, i);
      auto& out = per_image[i];
      out.reserve(crops_per_image);
      for (std::size_t s = 0; s < crops_per_image; ++s) {
        out.push_back(max_iou(sample_crop(rng, params, images[i].size), images[i].boxes));
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, images.size()));
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (images.size() + workers - 1) / workers;
  for (std::size_t b = 0; b < images.size(); b += chunk) {
    jobs.push_back(std::async(std::launch::async, work, b, std::min(images.size(), b + chunk)));
  }
  for (auto& j : jobs) j.get();

  std::vector<double> all;
  for (auto& v : per_image) all.insert(all.end(), v.begin(), v.end());
  return all;
}

inline CdfTable cdf_from_ious(std::vector<double> ious) {
  CdfTable t;
  t.sample_count = ious.size();
  if (ious.empty()) throw InvalidArgument("no crop samples to aggregate");
  std::sort(ious.begin(), ious.end());
  const double n = static_cast<double>(ious.size());
  for (int i = 0; i <= 100; ++i) {
    const double th = i / 100.0;
    t.thresholds.push_back(th);
    const auto le = std::upper_bound(ious.begin(), ious.end(), th) - ious.begin();
    t.cumulative_fraction.push_back(static_cast<double>(le) / n);
  }
  const auto zeros = std::upper_bound(ious.begin(), ious.end(), 0.0) - ious.begin();
  const auto half = std::upper_bound(ious.begin(), ious.end(), 0.5) - ious.begin();
  t.fraction_no_overlap = static_cast<double>(zeros) / n;
  t.fraction_above_half = (n - static_cast<double>(half)) / n;
  return t;
}

inline CdfTable crop_iou_cdf(std::span<const ImageBoxes> images, const CropParams& params,
                             std::size_t crops_per_image, std::uint64_t seed,
                             std::size_t workers = default_workers()) {
  if (images.empty()) throw InvalidArgument("no images given");
  if (crops_per_image == 0) throw InvalidArgument("crops_per_image must be positive");
  const auto skipped = static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const ImageBoxes& im) { return im.boxes.empty(); }));
  if (skipped == images.size()) throw InvalidArgument("no image has a ground-truth box");
  CdfTable t = cdf_from_ious(crop_ious(images, params, crops_per_image, seed, workers));
  t.skipped_images = skipped;
  return t;
}

inline void write_cdf_csv(std::ostream& out, const CdfTable& t) {
  out << "iou_threshold,cumulative_fraction\n";
  for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
    out << format_number(t.thresholds[i]) << ',' << format_number(t.cumulative_fraction[i]) << '\n';
  }
}

struct ConfidenceBin {
  double lo = 0.0;
  double hi = 0.0;  // exclusive, except the last bin which includes 1
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double std_confidence = 0.0;  // population standard deviation
};

struct ConfidenceProfile {
  std::vector<ConfidenceBin> bins;
  std::size_t sample_count = 0;
};

inline constexpr std::size_t kConfidenceBins = 10;
inline constexpr std::size_t kSampleBlock = 4096;

inline std::size_t iou_bin(double iou_value) {
  return std::min(kConfidenceBins - 1, static_cast<std::size_t>(std::floor(iou_value * kConfidenceBins)));
}

/// Generic form: `target_of(id, region)` returns the pooled target.
/// Each sample picks an image uniformly among those with boxes, draws a crop,
/// and records (max IoU, max pooled probability).
template <class TargetFn>
ConfidenceProfile confidence_vs_iou(std::span<const ImageBoxes> images, const CropParams& params,
                                    std::size_t samples_total, std::uint64_t seed, TargetFn&& target_of,
                                    std::size_t workers = default_workers()) {
  params.validate();
  std::vector<const ImageBoxes*> usable;
  for (const auto& im : images) {
    if (!im.boxes.empty()) usable.push_back(&im);
  }
  if (usable.empty()) throw InvalidArgument("no image has a ground-truth box");
  if (samples_total == 0) throw InvalidArgument("samples must be positive");

  struct Acc {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    void merge(const Acc& o) {
      if (o.n == 0) return;
      const double total = static_cast<double>(n + o.n);
      const double d = o.mean - mean;
      mean += d * static_cast<double>(o.n) / total;
      m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
      n += o.n;
    }
  };
  using Bins = std::vector<Acc>;

  const std::size_t blocks = (samples_total + kSampleBlock - 1) / kSampleBlock;
  std::vector<Bins> per_block(blocks, Bins(kConfidenceBins));
  auto work = [&](std::size_t first, std::size_t last) {
    for (std::size_t b = first; b < last; ++b) {
      Rng rng = Rng::derive(seed, b);
      const std::size_t n = std::min(kSampleBlock, samples_total - b * kSampleBlock);
      for (std::size_t s = 0; s < n; ++s) {
        const ImageBoxes& im = *usable[rng.below(usable.size())];
        const CropRegion region = sample_crop(rng, params, im.size);
        const double overlap = max_iou(region, im.boxes);
        per_block[b][iou_bin(overlap)].add(target_of(im.id, region).confidence());
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, blocks);
  const std::size_t chunk = (blocks + workers - 1) / workers;
  std::vector<std::future<void>> jobs;
  for (std::size_t b = 0; b < blocks; b += chunk) {
    jobs.push_back(std::async(std::launch::async, work, b, std::min(blocks, b + chunk)));
  }
  for (auto& j : jobs) j.get();

  Bins total(kConfidenceBins);
  for (const Bins& bins : per_block) {
    for (std::size_t i = 0; i < kConfidenceBins; ++i) total[i].merge(bins[i]);
  }
  ConfidenceProfile profile;
  profile.sample_count = samples_total;
  for (std::size_t i = 0; i < kConfidenceBins; ++i) {
    ConfidenceBin bin;
    bin.lo = static_cast<double>(i) / kConfidenceBins;
    bin.hi = static_cast<double>(i + 1) / kConfidenceBins;
    bin.count = total[i].n;
    bin.mean_confidence = total[i].n ? total[i].mean : 0.0;
    bin.std_confidence = total[i].n ? std::sqrt(total[i].m2 / static_cast<double>(total[i].n)) : 0.0;
    profile.bins.push_back(bin);
  }
  return profile;
}

/// Store-backed form. Every image with boxes must be present in the store;
/// records are decoded once and shared by all workers.
inline ConfidenceProfile confidence_vs_iou(const LabelStore& store, std::span<const ImageBoxes> images,
                                           const CropParams& params, std::size_t samples_total, std::uint64_t seed,
                                           std::size_t workers = default_workers()) {
  std::unordered_map<std::string, SparseLabelMap> maps;
  for (const auto& im : images) {
    if (im.boxes.empty() || maps.contains(im.id)) continue;
    maps.emplace(im.id, store.get_map(im.id));
  }
  return confidence_vs_iou(
      images, params, samples_total, seed,
      [&](const std::string& id, const CropRegion& region) { return pool_label(maps.at(id), region); }, workers);
}

inline void write_profile_csv(std::ostream& out, const ConfidenceProfile& p) {
  out << "iou_lo,iou_hi,count,mean_confidence,std_confidence\n";
  for (const auto& b : p.bins) {
    out << format_number(b.lo) << ',' << format_number(b.hi) << ',' << b.count << ','
        << format_number(b.mean_confidence) << ',' << format_number(b.std_confidence) << '\n';
  }
}

}  // namespace relabel
