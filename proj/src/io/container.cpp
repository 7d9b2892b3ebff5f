#include "io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "core/error.hpp"

namespace advpaint {
namespace {

constexpr char kMagic[4] = {'A', 'T', 'S', 'R'};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  return 0;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::uint64_t n, const char* what) const {
    if (n > bytes_.size() - pos_) {
      fail(ErrorCode::kTruncated, std::string("container truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T, typename U>
T load_le(const std::uint8_t* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

template <typename T, typename U>
void store_le(Writer& w, T v) {
  const U bits = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) w.u8(static_cast<std::uint8_t>(bits >> (8 * i)));
}

}  // namespace

std::size_t ContainerEntry::element_count() const {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

ContainerEntry ContainerEntry::from_tensor(std::string name, const Tensor& t) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents.assign(t.shape().begin(), t.shape().end());
  e.data = std::vector<double>(t.storage().begin(), t.storage().end());
  return e;
}

ContainerEntry ContainerEntry::from_bytes(std::string name, std::span<const std::uint8_t> bytes) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents = {bytes.size()};
  e.data = std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  return e;
}

ContainerEntry ContainerEntry::from_string(std::string name, const std::string& text) {
  return from_bytes(std::move(name),
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Tensor ContainerEntry::to_tensor() const {
  Shape shape(extents.begin(), extents.end());
  if (shape.empty()) shape = {1};
  for (std::size_t e : shape) {
    require(e > 0, ErrorCode::kFormat, "entry '" + name + "' has a zero extent");
  }
  if (const auto* d = std::get_if<std::vector<double>>(&data)) return Tensor(shape, *d);
  if (const auto* f = std::get_if<std::vector<float>>(&data)) {
    return Tensor(shape, std::vector<double>(f->begin(), f->end()));
  }
  fail(ErrorCode::kFormat, "entry '" + name + "' is not floating point");
}

std::string ContainerEntry::to_string() const {
  const auto* b = std::get_if<std::vector<std::uint8_t>>(&data);
  require(b != nullptr, ErrorCode::kFormat, "entry '" + name + "' is not a byte string");
  return std::string(b->begin(), b->end());
}

std::vector<std::uint8_t> container_write(const std::vector<ContainerEntry>& entries) {
  require(entries.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kSizeOverflow,
          "too many container entries");
  std::set<std::string> seen;
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    require(seen.insert(e.name).second, ErrorCode::kDuplicateName,
            "duplicate container entry '" + e.name + "'");
    require(e.name.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::kSizeOverflow,
            "entry name too long");
    require(e.extents.size() <= 255, ErrorCode::kSizeOverflow, "entry rank above 255");
    std::uint64_t count = 1;
    for (std::uint64_t x : e.extents) {
      require(x == 0 || count <= std::numeric_limits<std::uint64_t>::max() / x,
              ErrorCode::kSizeOverflow, "entry '" + e.name + "' extents overflow");
      count *= x;
    }
    require(count == e.element_count(), ErrorCode::kDimension,
            "entry '" + e.name + "' payload does not match its extents");
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.dtype()));
    w.u8(static_cast<std::uint8_t>(e.extents.size()));
    for (std::uint64_t x : e.extents) w.u64(x);
    std::visit(
        [&w](const auto& v) {
          using T = typename std::decay_t<decltype(v)>::value_type;
          for (T x : v) {
            if constexpr (std::is_same_v<T, double>) {
              store_le<double, std::uint64_t>(w, x);
            } else if constexpr (std::is_same_v<T, float>) {
              store_le<float, std::uint32_t>(w, x);
            } else {
              w.u8(x);
            }
          }
        },
        e.data);
  }
  return w.take();
}

std::vector<ContainerEntry> container_read(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, "not a tensor container (bad magic)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  require(version == kContainerVersion, ErrorCode::kBadVersion,
          "unsupported container version " + std::to_string(version));
  const std::uint32_t count = r.u32("entry count");
  // Each entry needs at least 6 header bytes; reject absurd counts up front.
  require(static_cast<std::uint64_t>(count) * 6 <= r.remaining(), ErrorCode::kTruncated,
          "container truncated: entry count exceeds payload");

  std::vector<ContainerEntry> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;
    const std::uint32_t name_len = r.u32("name length");
    auto name = r.take(name_len, "name");
    e.name.assign(name.begin(), name.end());
    require(seen.insert(e.name).second, ErrorCode::kDuplicateName,
            "duplicate container entry '" + e.name + "'");
    const std::uint8_t dtype = r.u8("dtype");
    require(dtype <= 2, ErrorCode::kFormat, "unknown dtype " + std::to_string(dtype));
    const std::uint8_t rank = r.u8("rank");
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const std::uint64_t x = r.u64("extent");
      if (x != 0 && n > std::numeric_limits<std::uint64_t>::max() / x) {
        fail(ErrorCode::kSizeOverflow, "entry '" + e.name + "' extents overflow");
      }
      n *= x;
      e.extents.push_back(x);
    }
    const std::size_t width = dtype_size(static_cast<DType>(dtype));
    if (n > std::numeric_limits<std::uint64_t>::max() / width) {
      fail(ErrorCode::kSizeOverflow, "entry '" + e.name + "' payload size overflows");
    }
    auto payload = r.take(n * width, "payload");
    const auto count_n = static_cast<std::size_t>(n);
    switch (static_cast<DType>(dtype)) {
      case DType::kF32: {
        std::vector<float> v(count_n);
        for (std::size_t j = 0; j < count_n; ++j) v[j] = load_le<float, std::uint32_t>(&payload[4 * j]);
        e.data = std::move(v);
        break;
      }
      case DType::kF64: {
        std::vector<double> v(count_n);
        for (std::size_t j = 0; j < count_n; ++j) v[j] = load_le<double, std::uint64_t>(&payload[8 * j]);
        e.data = std::move(v);
        break;
      }
      case DType::kU8:
        e.data = std::vector<std::uint8_t>(payload.begin(), payload.end());
        break;
    }
    out.push_back(std::move(e));
  }
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes after container entries");
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

void write_container_file(const std::filesystem::path& path,
                          const std::vector<ContainerEntry>& entries) {
  write_file_bytes(path, container_write(entries));
}

std::vector<ContainerEntry> read_container_file(const std::filesystem::path& path) {
  return container_read(read_file_bytes(path));
}

const ContainerEntry& find_entry(const std::vector<ContainerEntry>& entries,
                                 const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  fail(ErrorCode::kContract, "container has no entry '" + name + "'");
}

}  // namespace advpaint
