#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tensor/tensor.hpp"

namespace advpaint {

// Layout (all integers little-endian):
//   "ATSR" | u32 version (=1) | u32 entry count
//   per entry: u32 name length | name bytes | u8 dtype | u8 rank | u64 extent * rank | payload
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  using Payload = std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>>;

  std::string name;
  std::vector<std::uint64_t> extents;
  Payload data;

  DType dtype() const { return static_cast<DType>(data.index()); }
  std::size_t element_count() const;

  static ContainerEntry from_tensor(std::string name, const Tensor& t);
  static ContainerEntry from_bytes(std::string name, std::span<const std::uint8_t> bytes);
  static ContainerEntry from_string(std::string name, const std::string& text);

  /// f32/f64 payload as a double tensor (kFormat for u8 or zero extents).
  Tensor to_tensor() const;
  /// u8 payload as text.
  std::string to_string() const;
};

std::vector<std::uint8_t> container_write(const std::vector<ContainerEntry>& entries);

/// Validates magic, version, and every size against the remaining bytes before
/// allocating. Errors: kBadMagic, kBadVersion, kTruncated, kDuplicateName,
/// kSizeOverflow, kFormat (unknown dtype / trailing bytes).
std::vector<ContainerEntry> container_read(std::span<const std::uint8_t> bytes);

void write_container_file(const std::filesystem::path& path,
                          const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> read_container_file(const std::filesystem::path& path);

/// Lookup by name; kContract if absent.
const ContainerEntry& find_entry(const std::vector<ContainerEntry>& entries,
                                 const std::string& name);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace advpaint
