#pragma once

// Byte arithmetic for keeping label maps dense versus in a top-k store.

#include <cstdint>

#include "relabel/error.hpp"
#include "relabel/quant.hpp"
#include "relabel/store.hpp"

namespace relabel {

enum class StorageLayout { Dense, Sparse };

struct StorageQuery {
  std::uint64_t num_images = 1;
  std::uint64_t height = 1;
  std::uint64_t width = 1;
  StorageLayout layout = StorageLayout::Dense;
  std::uint64_t channels = 1;  // C for the dense layout, k for the sparse one
  QuantFormat quant = QuantFormat::F32;
  std::uint64_t index_bytes = 2;  // sparse only
  std::uint64_t id_bytes = 20;    // mean image-id length, sparse only
};

struct StorageCost {
  std::uint64_t payload = 0;   // label values (and indices) only
  std::uint64_t overhead = 0;  // store header + manifest; 0 for the dense layout
  std::uint64_t total() const { return payload + overhead; }
};

namespace detail {
inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw InvalidArgument("storage size overflows 64 bits");
  return out;
}
inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw InvalidArgument("storage size overflows 64 bits");
  return out;
}
}  // namespace detail

/// Dense: N*H*W*C*bytes(q). Sparse: N*H*W*k*(bytes(q) + index_bytes), plus
/// kStoreHeaderBytes and N manifest entries of kManifestEntryBytes + id_bytes.
inline StorageCost storage_cost(const StorageQuery& q) {
  using detail::checked_add;
  using detail::checked_mul;
  if (q.num_images == 0 || q.height == 0 || q.width == 0 || q.channels == 0) {
    throw InvalidArgument("storage counts must be positive");
  }
  const std::uint64_t cells = checked_mul(checked_mul(checked_mul(q.num_images, q.height), q.width), q.channels);
  StorageCost cost;
  if (q.layout == StorageLayout::Dense) {
    cost.payload = checked_mul(cells, bytes_per_value(q.quant));
    return cost;
  }
  if (q.index_bytes != 2 && q.index_bytes != 4) throw InvalidArgument("index width must be 2 or 4 bytes");
  cost.payload = checked_mul(cells, bytes_per_value(q.quant) + q.index_bytes);
  cost.overhead =
      checked_add(kStoreHeaderBytes, checked_mul(q.num_images, checked_add(kManifestEntryBytes, q.id_bytes)));
  checked_add(cost.payload, cost.overhead);
  return cost;
}

}  // namespace relabel
