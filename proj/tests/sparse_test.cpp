#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "relabel/sparse.hpp"
#include "relabel/storage.hpp"

using namespace relabel;

namespace {

DenseLabelMap random_map(std::mt19937_64& gen, std::size_t H, std::size_t W, std::size_t C) {
  return DenseLabelMap(H, W, C, oracle::random_values(gen, H * W * C), ValueMode::RawScores);
}

}  // namespace

TEST(EncodeSparse, PeakedPixelKeepsDominantClass) {
  const DenseLabelMap m(1, 1, 3, {10.0, 0.0, 0.0});
  const SparseLabelMap s = encode_sparse(m, 1, QuantFormat::F32);
  ASSERT_EQ(s.k(), 1u);
  EXPECT_EQ(s.indices(0)[0], 0);
  const double expected = std::exp(10.0) / (std::exp(10.0) + 2.0);  // 0.99990920...
  EXPECT_NEAR(s.values(0)[0], expected, 1e-6);
  EXPECT_NEAR(s.values(0)[0], 0.99990, 1e-5);
  EXPECT_EQ(s.mode(), ValueMode::Probabilities);
}

TEST(EncodeSparse, TiesGoToLowerIndex) {
  const DenseLabelMap m(1, 1, 4, {2.0, 2.0, 2.0, 2.0});
  const SparseLabelMap s = encode_sparse(m, 2, QuantFormat::F32);
  EXPECT_EQ(s.indices(0)[0], 0);
  EXPECT_EQ(s.indices(0)[1], 1);
  EXPECT_EQ(s.values(0)[0], 0.25f);
  EXPECT_EQ(s.values(0)[1], 0.25f);
}

TEST(EncodeSparse, LosslessCaseReproducesSoftmax) {
  std::mt19937_64 gen(11);
  const DenseLabelMap m = random_map(gen, 4, 5, 7);
  const SparseLabelMap s = encode_sparse(m, 7, QuantFormat::F32);
  const DenseLabelMap back = densify(s);
  for (std::size_t p = 0; p < m.num_pixels(); ++p) {
    const auto px = m.pixel(p);
    const auto ref = oracle::softmax_ld(std::vector<double>(px.begin(), px.end()));
    const auto sm = softmax(px);
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_NEAR(back.pixel(p)[c], static_cast<double>(ref[c]), 1e-6);
      // bitwise: the stored value is the float rounding of the double softmax
      EXPECT_EQ(static_cast<float>(back.pixel(p)[c]), static_cast<float>(sm[c]));
    }
  }
}

TEST(EncodeSparse, TopKMatchesFullSort) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 2 + gen() % 12;
    const std::size_t k = 1 + gen() % C;
    // coarse values provoke ties
    std::vector<double> v(3 * 3 * C);
    for (auto& x : v) x = static_cast<double>(gen() % 5);
    const DenseLabelMap m(3, 3, C, v);
    const SparseLabelMap s = encode_sparse(m, k, QuantFormat::F32);
    for (std::size_t p = 0; p < 9; ++p) {
      std::vector<std::size_t> order(C);
      std::iota(order.begin(), order.end(), 0);
      const auto px = m.pixel(p);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return px[a] > px[b]; });
      for (std::size_t j = 0; j < k; ++j) ASSERT_EQ(s.indices(p)[j], order[j]) << "trial " << trial;
    }
  }
}

TEST(EncodeSparse, LossyFormatsStayValid) {
  // (0.97, 0.03) rounds up to (1.0, 0.03125) in E4M3; the map must still construct.
  const DenseLabelMap m(1, 1, 2, {0.97, 0.03}, ValueMode::Probabilities);
  const SparseLabelMap s = encode_sparse(m, 2, QuantFormat::F8);
  EXPECT_EQ(s.values(0)[0], 1.0f);
  std::mt19937_64 gen(2);
  for (auto q : {QuantFormat::F16, QuantFormat::F8}) {
    const SparseLabelMap r = encode_sparse(random_map(gen, 6, 6, 20), 5, q);
    for (float v : r.values()) EXPECT_EQ(quantize(v, q), v);
  }
}

TEST(EncodeSparse, RejectsBadArguments) {
  const DenseLabelMap m(1, 1, 3, {1.0, 2.0, 3.0});
  EXPECT_THROW(encode_sparse(m, 0, QuantFormat::F32), InvalidArgument);
  EXPECT_THROW(encode_sparse(m, 4, QuantFormat::F32), InvalidArgument);
  EXPECT_THROW(DenseLabelMap(1, 1, 3, {1.0, NAN, 3.0}), InvalidArgument);
  EXPECT_THROW(DenseLabelMap(1, 1, 3, {1.0, INFINITY, 3.0}), InvalidArgument);
}

TEST(SparseLabelMap, ValidatesInvariants) {
  auto make = [](std::vector<std::uint16_t> idx, std::vector<float> val) {
    return SparseLabelMap(1, 1, 4, 2, QuantFormat::F32, ValueMode::Probabilities, std::move(idx), std::move(val));
  };
  EXPECT_NO_THROW(make({3, 1}, {0.5f, 0.25f}));
  EXPECT_THROW(make({1, 1}, {0.5f, 0.25f}), InvalidArgument);  // duplicate
  EXPECT_THROW(make({1, 4}, {0.5f, 0.25f}), InvalidArgument);  // out of range
  EXPECT_THROW(make({1, 2}, {0.25f, 0.5f}), InvalidArgument);  // increasing
  EXPECT_THROW(make({1, 2}, {0.75f, 0.5f}), InvalidArgument);  // mass > 1
  EXPECT_THROW(SparseLabelMap(1, 1, 4, 2, QuantFormat::F8, ValueMode::Probabilities, {0, 1}, {0.3f, 0.2f}),
               InvalidArgument);  // not on the E4M3 grid
}

TEST(Densify, WholeImageLosslessEqualsSoftmaxMap) {
  std::mt19937_64 gen(9);
  const DenseLabelMap m = random_map(gen, 5, 5, 4);
  const DenseLabelMap d = densify_region(encode_sparse(m, 4, QuantFormat::F32), CropRegion::full());
  ASSERT_EQ(d.height(), 5u);
  ASSERT_EQ(d.width(), 5u);
  for (std::size_t p = 0; p < 25; ++p) {
    const auto sm = softmax(m.pixel(p));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(d.pixel(p)[c], sm[c], 1e-7);
  }
}

TEST(Densify, SinglePixelWindowScatter) {
  // 3x3 map, C = 10, k = 1; the centre pixel stores (class 7, 0.9).
  std::vector<std::uint16_t> idx(9, 0);
  std::vector<float> val(9, 0.5f);
  idx[4] = 7;
  val[4] = quantize(0.9, QuantFormat::F32);
  const SparseLabelMap s(3, 3, 10, 1, QuantFormat::F32, ValueMode::Probabilities, idx, val);
  const DenseLabelMap d = densify_region(s, CropRegion(0.4, 0.4, 0.2, 0.2));
  ASSERT_EQ(d.num_pixels(), 1u);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_DOUBLE_EQ(d.pixel(0)[c], c == 7 ? val[4] : 0.0);
}

TEST(Densify, SubWindowMatchesBruteForceScatter) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t H = 7, W = 9, C = 12, k = 3;
  const SparseLabelMap s = encode_sparse(random_map(gen, H, W, C), k, QuantFormat::F16);
  for (int t = 0; t < 100; ++t) {
    const double w = 0.05 + 0.9 * u(gen), h = 0.05 + 0.9 * u(gen);
    const CropRegion r(u(gen) * (1 - w), u(gen) * (1 - h), w, h);
    const DenseLabelMap d = densify_region(s, r);
    const std::size_t r0 = static_cast<std::size_t>(std::floor(r.y * H + 1e-9));
    const std::size_t c0 = static_cast<std::size_t>(std::floor(r.x * W + 1e-9));
    const std::size_t r1 = static_cast<std::size_t>(std::ceil((r.y + r.h) * H - 1e-9));
    const std::size_t c1 = static_cast<std::size_t>(std::ceil((r.x + r.w) * W - 1e-9));
    ASSERT_EQ(d.height(), r1 - r0);
    ASSERT_EQ(d.width(), c1 - c0);
    // independent scatter: walk every stored pair of the whole map
    std::vector<double> expect(d.values().size(), 0.0);
    for (std::size_t i = 0; i < s.indices().size(); ++i) {
      const std::size_t pixel = i / k;
      const std::size_t row = pixel / W, col = pixel % W;
      if (row < r0 || row >= r1 || col < c0 || col >= c1) continue;
      expect[((row - r0) * (c1 - c0) + (col - c0)) * C + s.indices()[i]] = s.values()[i];
    }
    for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_EQ(d.values()[i], expect[i]);
  }
}

TEST(StorageCost, DenseFigureForFullLabelMaps) {
  StorageQuery q{1280000, 15, 15, StorageLayout::Dense, 1000, QuantFormat::F32};
  const StorageCost c = storage_cost(q);
  EXPECT_EQ(c.payload, 1152000000000ull);
  EXPECT_EQ(c.overhead, 0u);
  EXPECT_GT(static_cast<double>(c.payload) / std::pow(1024.0, 4), 1.0);  // ~1.05 TiB
}

TEST(StorageCost, SparseTopFivePayload) {
  StorageQuery q{1280000, 15, 15, StorageLayout::Sparse, 5, QuantFormat::F32};
  const StorageCost c = storage_cost(q);
  EXPECT_EQ(c.payload, 8640000000ull);
  EXPECT_EQ(c.overhead, kStoreHeaderBytes + 1280000ull * (kManifestEntryBytes + 20));
  q.index_bytes = 4;
  EXPECT_EQ(storage_cost(q).payload, 11520000000ull);
}

TEST(StorageCost, UnitCaseAndLinearity) {
  EXPECT_EQ(storage_cost({1, 1, 1, StorageLayout::Dense, 1, QuantFormat::F32}).payload, 4u);
  for (auto layout : {StorageLayout::Dense, StorageLayout::Sparse}) {
    for (auto q : {QuantFormat::F32, QuantFormat::F16, QuantFormat::F8}) {
      const auto base = storage_cost({10, 15, 15, layout, 5, q}).payload;
      EXPECT_EQ(storage_cost({30, 15, 15, layout, 5, q}).payload, 3 * base);
      EXPECT_EQ(storage_cost({10, 15, 15, layout, 10, q}).payload, 2 * base);
    }
  }
}

TEST(StorageCost, RejectsOverflowAndZeroCounts) {
  EXPECT_THROW(storage_cost({~0ull, 15, 15, StorageLayout::Dense, 1000, QuantFormat::F32}), InvalidArgument);
  EXPECT_THROW(storage_cost({0, 15, 15, StorageLayout::Dense, 1000, QuantFormat::F32}), InvalidArgument);
  StorageQuery q{1, 1, 1, StorageLayout::Sparse, 1, QuantFormat::F32};
  q.index_bytes = 3;
  EXPECT_THROW(storage_cost(q), InvalidArgument);
}
