#pragma once

// Single-file label store ("RLBL", little-endian):
//
//   "RLBL" | u16 version=1 | u8 quant {0=f32,1=f16,2=f8} | u8 value_mode
//   u16 H | u16 W | u32 C | u16 k | u64 record_count
//   record_count x (u16 id_len | id bytes (UTF-8) | u64 offset | u64 length)
//   records: per pixel, row-major: k x u16 class ids, then k values
//
// Offsets are absolute file positions. A LabelStore keeps the manifest in
// memory and reads records with pread(2), so one open store can serve any
// number of concurrent readers.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relabel/binary_io.hpp"
#include "relabel/error.hpp"
#include "relabel/label_map.hpp"
#include "relabel/quant.hpp"

namespace relabel {

inline constexpr char kStoreMagic[4] = {'R', 'L', 'B', 'L'};
inline constexpr std::uint16_t kStoreVersion = 1;
/// magic(4) version(2) quant(1) mode(1) H(2) W(2) C(4) k(2) count(8)
inline constexpr std::uint64_t kStoreHeaderBytes = 26;
/// Manifest entry without the id bytes: id length(2) offset(8) length(8).
inline constexpr std::uint64_t kManifestEntryBytes = 18;

struct StoreHeader {
  std::uint16_t version = kStoreVersion;
  QuantFormat quant = QuantFormat::F32;
  ValueMode mode = ValueMode::Probabilities;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint32_t classes = 0;
  std::uint16_t k = 0;
  std::uint64_t count = 0;

  std::uint64_t record_bytes() const {
    return static_cast<std::uint64_t>(height) * width * k * (2 + bytes_per_value(quant));
  }
  friend bool operator==(const StoreHeader&, const StoreHeader&) = default;
};

struct ManifestEntry {
  std::string id;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

namespace detail {

inline void encode_record(const SparseLabelMap& map, ByteWriter& out) {
  for (std::size_t p = 0; p < map.num_pixels(); ++p) {
    for (std::uint16_t idx : map.indices(p)) out.u16(idx);
    for (float v : map.values(p)) {
      const std::uint32_t code = encode_value(v, map.quant());
      switch (map.quant()) {
        case QuantFormat::F32: out.u32(code); break;
        case QuantFormat::F16: out.u16(static_cast<std::uint16_t>(code)); break;
        case QuantFormat::F8: out.u8(static_cast<std::uint8_t>(code)); break;
      }
    }
  }
}

inline SparseLabelMap decode_record(const StoreHeader& h, std::span<const std::uint8_t> bytes, const std::string& id) {
  ByteReader in(bytes, "record '" + id + "'");
  const std::size_t pixels = static_cast<std::size_t>(h.height) * h.width;
  std::vector<std::uint16_t> indices;
  std::vector<float> values;
  indices.reserve(pixels * h.k);
  values.reserve(pixels * h.k);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t j = 0; j < h.k; ++j) indices.push_back(in.u16());
    for (std::size_t j = 0; j < h.k; ++j) {
      std::uint32_t code = 0;
      switch (h.quant) {
        case QuantFormat::F32: code = in.u32(); break;
        case QuantFormat::F16: code = in.u16(); break;
        case QuantFormat::F8: code = in.u8(); break;
      }
      values.push_back(decode_value(code, h.quant));
    }
  }
  try {
    return SparseLabelMap(h.height, h.width, h.classes, h.k, h.quant, h.mode, std::move(indices), std::move(values));
  } catch (const InvalidArgument& e) {
    throw FormatError("record '" + id + "' is corrupt (" + e.what() + ")");
  }
}

class FileDescriptor {
 public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() { reset(); }

  int get() const { return fd_; }

 private:
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline void pread_exact(int fd, std::uint8_t* dst, std::size_t n, std::uint64_t offset, const std::string& what) {
  while (n > 0) {
    const ssize_t got = ::pread(fd, dst, n, static_cast<off_t>(offset));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw FormatError("read error in " + what + ": " + std::strerror(errno));
    }
    if (got == 0) throw FormatError(what + " is truncated");
    dst += got;
    n -= static_cast<std::size_t>(got);
    offset += static_cast<std::uint64_t>(got);
  }
}

}  // namespace detail

/// Read-only view of a label store file.
class LabelStore {
 public:
  static LabelStore open(const std::filesystem::path& path) {
    LabelStore s;
    s.path_ = path;
    s.fd_ = detail::FileDescriptor(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (s.fd_.get() < 0) throw FormatError("cannot open store '" + path.string() + "': " + std::strerror(errno));
    struct stat st {};
    if (::fstat(s.fd_.get(), &st) != 0) throw FormatError("cannot stat store '" + path.string() + "'");
    s.file_size_ = static_cast<std::uint64_t>(st.st_size);
    s.load_index();
    return s;
  }

  const StoreHeader& header() const { return header_; }
  const std::filesystem::path& path() const { return path_; }
  std::size_t size() const { return manifest_.size(); }
  const std::vector<ManifestEntry>& manifest() const { return manifest_; }
  bool contains(const std::string& id) const { return by_id_.contains(id); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(manifest_.size());
    for (const auto& e : manifest_) out.push_back(e.id);
    return out;
  }

  /// Undecoded record bytes, exactly as stored.
  std::vector<std::uint8_t> record_bytes(const std::string& id) const {
    const ManifestEntry& e = entry(id);
    std::vector<std::uint8_t> buf(e.length);
    detail::pread_exact(fd_.get(), buf.data(), buf.size(), e.offset, "record '" + id + "'");
    return buf;
  }

  SparseLabelMap get_map(const std::string& id) const {
    return detail::decode_record(header_, record_bytes(id), id);
  }

 private:
  LabelStore() = default;

  const ManifestEntry& entry(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw UnknownImage(id);
    return manifest_[it->second];
  }

  void load_index() {
    const std::string what = "store '" + path_.string() + "'";
    std::vector<std::uint8_t> head(static_cast<std::size_t>(kStoreHeaderBytes));
    if (file_size_ < head.size()) throw FormatError(what + " is truncated (no header)");
    detail::pread_exact(fd_.get(), head.data(), head.size(), 0, what);
    detail::ByteReader in(head, what);
    if (in.str(4) != std::string(kStoreMagic, 4)) throw FormatError(what + " has a bad magic number");
    header_.version = in.u16();
    if (header_.version != kStoreVersion) {
      throw FormatError(what + " has unsupported version " + std::to_string(header_.version));
    }
    const std::uint8_t quant = in.u8();
    if (quant > 2) throw FormatError(what + " has unknown value format code " + std::to_string(quant));
    header_.quant = static_cast<QuantFormat>(quant);
    const std::uint8_t mode = in.u8();
    if (mode > 1) throw FormatError(what + " has unknown value mode " + std::to_string(mode));
    header_.mode = static_cast<ValueMode>(mode);
    header_.height = in.u16();
    header_.width = in.u16();
    header_.classes = in.u32();
    header_.k = in.u16();
    header_.count = in.u64();
    if (header_.height == 0 || header_.width == 0 || header_.classes == 0 || header_.classes > kMaxClasses ||
        header_.k == 0 || header_.k > header_.classes) {
      throw FormatError(what + " has invalid dimensions");
    }
    // each manifest entry needs at least 18 bytes
    if (header_.count > (file_size_ - kStoreHeaderBytes) / kManifestEntryBytes) {
      throw FormatError(what + " declares more records than the file can hold");
    }

    // The manifest is variable-length; read it with a buffered stream.
    std::ifstream file(path_, std::ios::binary);
    if (!file) throw FormatError("cannot open " + what);
    file.seekg(static_cast<std::streamoff>(kStoreHeaderBytes));
    auto read_le = [&](int n) {
      std::uint8_t b[8] = {};
      if (!file.read(reinterpret_cast<char*>(b), n)) throw FormatError(what + " is truncated (manifest)");
      std::uint64_t v = 0;
      for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      return v;
    };
    manifest_.reserve(static_cast<std::size_t>(header_.count));
    for (std::uint64_t i = 0; i < header_.count; ++i) {
      ManifestEntry e;
      const auto len = static_cast<std::size_t>(read_le(2));
      e.id.resize(len);
      if (len > 0 && !file.read(e.id.data(), static_cast<std::streamsize>(len))) {
        throw FormatError(what + " is truncated (manifest)");
      }
      e.offset = read_le(8);
      e.length = read_le(8);
      if (!by_id_.emplace(e.id, manifest_.size()).second) throw FormatError(what + " has duplicate id '" + e.id + "'");
      manifest_.push_back(std::move(e));
    }
    const auto data_begin = static_cast<std::uint64_t>(file.tellg());

    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    spans.reserve(manifest_.size());
    for (const auto& e : manifest_) {
      if (e.length != header_.record_bytes()) {
        throw FormatError(what + ": record '" + e.id + "' has length " + std::to_string(e.length) + ", expected " +
                          std::to_string(header_.record_bytes()));
      }
      if (e.offset < data_begin || e.offset > file_size_ || e.length > file_size_ - e.offset) {
        throw FormatError(what + ": record '" + e.id + "' lies outside the data section");
      }
      spans.emplace_back(e.offset, e.length);
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i - 1].first + spans[i - 1].second > spans[i].first) throw FormatError(what + " has overlapping records");
    }
    // Records follow the manifest back to back and end the file.
    std::uint64_t covered = 0;
    for (const auto& s : spans) covered += s.second;
    if (covered != file_size_ - data_begin) {
      throw FormatError(what + ": records cover " + std::to_string(covered) + " of " +
                        std::to_string(file_size_ - data_begin) + " data bytes");
    }
  }

  std::filesystem::path path_;
  detail::FileDescriptor fd_;
  std::uint64_t file_size_ = 0;
  StoreHeader header_;
  std::vector<ManifestEntry> manifest_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Writes maps in the given order and reopens the file for reading. All maps
/// must share H, W, C, k, value format and value mode.
inline LabelStore write_store(std::span<const std::pair<std::string, SparseLabelMap>> maps,
                              const std::filesystem::path& path) {
  if (maps.empty()) throw InvalidArgument("cannot write an empty store");
  const SparseLabelMap& first = maps.front().second;
  if (first.height() > 0xFFFF || first.width() > 0xFFFF) throw InvalidArgument("label map too large for the store");
  StoreHeader h;
  h.quant = first.quant();
  h.mode = first.mode();
  h.height = static_cast<std::uint16_t>(first.height());
  h.width = static_cast<std::uint16_t>(first.width());
  h.classes = static_cast<std::uint32_t>(first.num_classes());
  h.k = static_cast<std::uint16_t>(first.k());
  h.count = maps.size();

  std::unordered_map<std::string, int> seen;
  std::uint64_t manifest_bytes = 0;
  for (const auto& [id, m] : maps) {
    if (m.height() != first.height() || m.width() != first.width() || m.num_classes() != first.num_classes() ||
        m.k() != first.k() || m.quant() != first.quant() || m.mode() != first.mode()) {
      throw InvalidArgument("heterogeneous label maps: '" + id + "' differs from '" + maps.front().first + "'");
    }
    if (id.size() > 0xFFFF) throw InvalidArgument("image id longer than 65535 bytes");
    if (!seen.emplace(id, 0).second) throw InvalidArgument("duplicate image id '" + id + "'");
    manifest_bytes += kManifestEntryBytes + id.size();
  }

  detail::ByteWriter out;
  out.raw(std::string_view(kStoreMagic, 4));
  out.u16(h.version);
  out.u8(static_cast<std::uint8_t>(h.quant));
  out.u8(static_cast<std::uint8_t>(h.mode));
  out.u16(h.height);
  out.u16(h.width);
  out.u32(h.classes);
  out.u16(h.k);
  out.u64(h.count);
  std::uint64_t offset = out.size() + manifest_bytes;
  for (const auto& [id, m] : maps) {
    out.u16(static_cast<std::uint16_t>(id.size()));
    out.raw(id);
    out.u64(offset);
    out.u64(h.record_bytes());
    offset += h.record_bytes();
  }
  for (const auto& entry : maps) detail::encode_record(entry.second, out);

  {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw FormatError("cannot create store '" + path.string() + "'");
    file.write(reinterpret_cast<const char*>(out.bytes().data()), static_cast<std::streamsize>(out.size()));
    if (!file) throw FormatError("write to '" + path.string() + "' failed");
  }
  return LabelStore::open(path);
}

inline LabelStore write_store(const std::vector<std::pair<std::string, SparseLabelMap>>& maps,
                              const std::filesystem::path& path) {
  return write_store(std::span<const std::pair<std::string, SparseLabelMap>>(maps), path);
}

inline LabelStore read_store(const std::filesystem::path& path) { return LabelStore::open(path); }

}  // namespace relabel
