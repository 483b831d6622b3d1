// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "relabel/relabel.hpp"

using namespace relabel;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

CropRegion random_region(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = 0.02 + 0.98 * u(gen);
  const double h = 0.02 + 0.98 * u(gen);
  return {(1.0 - w) * u(gen), (1.0 - h) * u(gen), w, h};
}

Outcome storage_arithmetic() {
  StorageQuery dense{1280000, 15, 15, StorageLayout::Dense, 1000, QuantFormat::F32};
  const auto d = storage_cost(dense).payload;
  bool ok = d == 1152000000000ull;
  std::string detail = "dense=" + std::to_string(d);
  for (auto q : {QuantFormat::F32, QuantFormat::F16}) {
    for (std::uint64_t ib : {2ull, 4ull}) {
      StorageQuery s{1280000, 15, 15, StorageLayout::Sparse, 5, q, ib};
      const auto p = storage_cost(s).payload;
      ok &= p >= 5000000000ull && p <= 12000000000ull;
      detail += " k5/" + std::string(to_string(q)) + "/idx" + std::to_string(ib) + "=" + std::to_string(p);
    }
  }
  return {ok, detail};
}

Outcome head_commutation() {
  std::mt19937_64 gen(101);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t H = 1 + gen() % 15, W = 1 + gen() % 15, d = 1 + gen() % 64, C = 2 + gen() % 100;
    const ClassifierHead head(d, C, oracle::random_values(gen, d * C, -1, 1), oracle::random_values(gen, C, -1, 1));
    const FeatureMap f(H, W, d, oracle::random_values(gen, H * W * d, 0, 4));
    const auto a = spatial_mean(fc_to_pointwise_conv(f, head));
    const auto b = head.apply(f.mean());
    for (std::size_t c = 0; c < C; ++c) worst = std::max(worst, std::abs(a[c] - b[c]) / std::max(1.0, std::abs(b[c])));
  }
  return {worst <= 1e-5, fmt("100 pairs, max rel err %.3g (tol 1e-5)", worst)};
}

Outcome roi_align_oracle() {
  std::mt19937_64 gen(102);
  const std::size_t H = 15, W = 15, C = 3;
  double worst = 0, worst_full = 0;
  for (int t = 0; t < 1000; ++t) {
    const DenseLabelMap map(H, W, C, oracle::random_values(gen, H * W * C));
    const std::vector<double> values(map.values().begin(), map.values().end());
    const auto r = random_region(gen);
    const auto out = roi_align_1x1(map, r);
    const auto full = roi_align_1x1(map, CropRegion::full());
    for (std::size_t c = 0; c < C; ++c) {
      const auto plane = oracle::channel(values, H * W, C, c);
      worst = std::max(worst, std::abs(out[c] - oracle::grid_integral(plane, H, W, r.x, r.y, r.w, r.h)));
      double s = 0;
      for (double v : plane) s += v;
      worst_full = std::max(worst_full, std::abs(full[c] - s / static_cast<double>(H * W)));
    }
  }
  return {worst <= 1e-3 && worst_full <= 1e-6,
          fmt("1000 pairs, max |err| %.3g (tol 1e-3); full image %.3g (tol 1e-6)", worst, worst_full)};
}

Outcome pooling_equivalence() {
  std::mt19937_64 gen(103);
  std::uniform_real_distribution<double> shift(-50, 50);
  bool exact = true;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t H = 2 + gen() % 14, W = 2 + gen() % 14, C = 2 + gen() % 30;
    auto v = oracle::random_values(gen, H * W * C, -5, 5);
    const DenseLabelMap map(H, W, C, v);
    const auto r = random_region(gen);
    const auto target = pool_label(map, r);
    const auto ref = softmax(roi_align_1x1(map, r));
    exact &= std::equal(ref.begin(), ref.end(), target.probs().begin());
    const double s = shift(gen);
    for (double& x : v) x += s;
    const auto shifted = pool_label(DenseLabelMap(H, W, C, v), r);
    for (std::size_t c = 0; c < C; ++c) worst = std::max(worst, std::abs(shifted[c] - target[c]));
  }
  return {exact && worst <= 1e-9,
          std::string("100 trials, softmax(roi_align) ") + (exact ? "bitwise equal" : "MISMATCH") +
              fmt("; shift max |diff| %.3g (tol 1e-9)", worst)};
}

Outcome sparse_fidelity() {
  std::mt19937_64 gen(104);
  const std::size_t C = 10;
  std::uniform_real_distribution<double> small(0.0, 0.5);
  double worst_pool = 0, min_top = 1;
  for (int t = 0; t < 100; ++t) {
    const std::size_t dominant = gen() % C;
    std::vector<double> v(8 * 8 * C);
    for (std::size_t p = 0; p < 64; ++p) {
      for (std::size_t c = 0; c < C; ++c) v[p * C + c] = small(gen) + (c == dominant ? 5.0 : 0.0);
      const auto probs = softmax(std::span<const double>(v.data() + p * C, C));
      min_top = std::min(min_top, *std::max_element(probs.begin(), probs.end()));
    }
    const DenseLabelMap dense(8, 8, C, v);
    const auto sparse = encode_sparse(dense, C, QuantFormat::F32);
    const auto r = random_region(gen);
    const auto a = pool_label(dense, r), b = pool_label(sparse, r);
    for (std::size_t c = 0; c < C; ++c) worst_pool = std::max(worst_pool, std::abs(a[c] - b[c]));
  }
  // quantization on 1e5 log-uniform values across each format's range
  std::uniform_real_distribution<double> e16(std::log(0x1p-14), std::log(65504.0));
  std::uniform_real_distribution<double> e8(std::log(0x1p-9), std::log(448.0));
  double worst16 = 0, worst8 = 0;
  for (int i = 0; i < 100000; ++i) {
    const double x16 = std::exp(e16(gen));
    worst16 = std::max(worst16, std::abs(quantize(x16, QuantFormat::F16) - x16) / x16);
    const double x8 = std::exp(e8(gen));
    // relative 2^-4 plus half the subnormal spacing 2^-9
    const double err = std::abs(quantize(x8, QuantFormat::F8) - x8);
    worst8 = std::max(worst8, err / (0x1p-4 * x8 + 0x1p-10));
  }
  const bool ok = min_top >= 0.9 && worst_pool <= 5e-3 && worst16 <= 0x1p-11 && worst8 <= 1.0;
  return {ok, fmt("top1>=%.3f, pool max |diff| %.3g (tol 5e-3); f16 max rel %.3g (tol 2^-11); f8 err/bound %.3g (<=1)",
                  min_top, worst_pool, worst16, worst8)};
}

Outcome factor_analysis() {
  std::mt19937_64 gen(105);
  double worst = 0;
  int hot_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t H = 1 + gen() % 15, W = 1 + gen() % 15, C = 2 + gen() % 20;
    const DenseLabelMap map(H, W, C, oracle::random_values(gen, H * W * C));
    const auto r = random_region(gen);
    const auto glob = label_variant(map, r, LabelVariant::GlobMulti);
    const auto full = label_variant(map, CropRegion::full(), LabelVariant::LocMulti);
    for (std::size_t c = 0; c < C; ++c) worst = std::max(worst, std::abs(glob[c] - full[c]));
    const auto multi = label_variant(map, r, LabelVariant::LocMulti);
    const auto single = label_variant(map, r, LabelVariant::LocSingle);
    hot_mismatch += !(single == PooledTarget::one_hot(multi.top_class(), C));
  }
  return {worst <= 1e-6 && hot_mismatch == 0,
          fmt("1000 trials, glob vs full max |diff| %.3g (tol 1e-6); single/multi argmax mismatches %g", worst,
              hot_mismatch)};
}

Outcome conflict_convergence() {
  const auto two = conflicting_label_demo(2000, 0.5);
  const std::size_t cycle[] = {0, 0, 1, 2};
  const auto three = conflicting_label_demo(cycle, 3, 2000, 0.5);
  const double e2 = std::max(std::abs(two.probs[0] - 0.5), std::abs(two.probs[1] - 0.5));
  const double e3 = std::max({std::abs(three.probs[0] - 0.5), std::abs(three.probs[1] - 0.25),
                              std::abs(three.probs[2] - 0.25)});
  return {e2 <= 1e-2 && e3 <= 2e-2,
          fmt("two-class (%.4f, %.4f) err %.3g (tol 1e-2); (2,1,1) max err %.3g (tol 2e-2)", two.probs[0],
              two.probs[1], e2, e3)};
}

Outcome supervision_direction() {
  const int seeds = 5;
  double sum_loc = 0, sum_orig = 0;
  bool each = true;
  std::string per_seed;
  for (int s = 1; s <= seeds; ++s) {
    const auto data = make_synthetic_dataset(static_cast<std::uint64_t>(s), 200, {});
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.supervision = Supervision::OriginalSingle;
    const double orig = train(data, cfg).accuracy;
    cfg.supervision = Supervision::LocMulti;
    const double loc = train(data, cfg).accuracy;
    each &= loc >= orig;
    sum_loc += loc;
    sum_orig += orig;
    per_seed += fmt(" %.3f/%.3f", loc, orig);
  }
  const bool ok = each && sum_loc > sum_orig;
  return {ok, fmt("%g seeds, mean loc_multi %.4f vs original_single %.4f; per seed", seeds, sum_loc / seeds,
                  sum_orig / seeds) +
                  per_seed};
}

Outcome crop_statistics() {
  const CropParams p;
  const std::size_t n = 100000;
  const std::vector<ImageBoxes> images = {{"img", {Box(0, 0, 1, 1)}, {}}};
  const auto table = crop_iou_cdf(images, p, n, 106);
  std::mt19937_64 gen(107);
  std::vector<double> ref(n);
  for (double& a : ref) {
    const auto r = oracle::reference_crop(gen, p.area_lo, p.area_hi, p.aspect_lo, p.aspect_hi, p.max_attempts);
    a = r.w * r.h;
  }
  std::sort(ref.begin(), ref.end());
  double worst = 0;
  for (std::size_t i = 0; i < table.thresholds.size(); ++i) {
    const auto le = std::upper_bound(ref.begin(), ref.end(), table.thresholds[i]) - ref.begin();
    worst = std::max(worst, std::abs(table.cumulative_fraction[i] - static_cast<double>(le) / n));
  }
  Rng rng(108);
  double lo = 1, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = sample_crop(rng, p).area();
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  const bool ok = worst <= 0.01 && lo >= 0.08 - 1e-12 && hi <= 1.0 + 1e-12;
  return {ok, fmt("CDF max |diff| %.3g (tol 0.01); sampled areas in [%.4f, %.4f]", worst, lo, hi)};
}

Outcome store_round_trip() {
  const auto dir = std::filesystem::temp_directory_path() / ("relabel_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::mt19937_64 gen(109);
  std::vector<std::pair<std::string, SparseLabelMap>> maps;
  for (int i = 0; i < 1000; ++i) {
    maps.emplace_back("image_" + std::to_string(i),
                      encode_sparse(DenseLabelMap(15, 15, 50, oracle::random_values(gen, 15 * 15 * 50)), 5,
                                    QuantFormat::F16));
  }
  const auto path = dir / "round_trip.rlbl";
  write_store(maps, path);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  const auto bytes = slurp(path);
  const LabelStore store = read_store(path);
  std::size_t equal = 0;
  std::vector<std::pair<std::string, SparseLabelMap>> again;
  for (const auto& [id, m] : maps) {
    auto back = store.get_map(id);
    equal += back == m;
    again.emplace_back(id, std::move(back));
  }
  write_store(again, dir / "rewritten.rlbl");
  const bool identical_file = slurp(dir / "rewritten.rlbl") == bytes;

  // every single-bit flip of every header byte
  int rejected = 0, tried = 0;
  std::string accepted;
  for (std::size_t pos = 0; pos < kStoreHeaderBytes; ++pos) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = bytes;
      bad[pos] = static_cast<char>(bad[pos] ^ (1 << bit));
      {
        std::ofstream out(dir / "bad.rlbl", std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
      }
      ++tried;
      try {
        const LabelStore s = read_store(dir / "bad.rlbl");
        for (const auto& id : s.ids()) s.get_map(id);
        accepted += " " + std::to_string(pos) + ":" + std::to_string(bit);
      } catch (const FormatError&) {
        ++rejected;
      }
    }
  }
  std::filesystem::remove_all(dir);
  const bool ok = equal == maps.size() && identical_file && rejected == tried;
  std::string detail = std::to_string(equal) + "/1000 maps bitwise equal, rewrite " +
                       (identical_file ? "identical" : "DIFFERS") + "; " + std::to_string(rejected) + "/" +
                       std::to_string(tried) + " single-bit header corruptions rejected";
  if (!accepted.empty()) detail += "; accepted (byte:bit)" + accepted;
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"storage_arithmetic", storage_arithmetic},
      {"gap_head_commutation", head_commutation},
      {"roi_align_oracle", roi_align_oracle},
      {"pooling_softmax_equivalence", pooling_equivalence},
      {"sparse_fidelity", sparse_fidelity},
      {"factor_analysis_consistency", factor_analysis},
      {"conflicting_label_convergence", conflict_convergence},
      {"supervision_direction", supervision_direction},
      {"crop_statistics_oracle", crop_statistics},
      {"store_round_trip", store_round_trip},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
