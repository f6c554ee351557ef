#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prognet/nn/tensor.hpp"

namespace prognet::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

/// One serialized parameter.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::f64;
  bool frozen = false;
  std::vector<double> values;
};

/// Parameter container file.
///
/// Layout (all integers little-endian):
///   magic "PGNCKPT\0" | u32 format_version | u64 architecture_hash | u32 entry_count
///   per entry: u32 name_len | name bytes | u8 dtype | u8 frozen | u32 rank |
///              u64 dims[rank] | raw little-endian scalars (f64 or f32)
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint64_t architecture_hash = 0;
  std::vector<CheckpointEntry> entries;

  static Checkpoint from_parameters(std::span<const Parameter* const> params, std::uint64_t architecture_hash,
                                    DType dtype = DType::f64);

  /// Copies values into same-named parameters. Throws on missing names or shape drift.
  void apply_to(std::span<Parameter* const> params) const;

  [[nodiscard]] std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// 64-bit FNV-1a; stable across platforms, used for content hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace prognet::nn
