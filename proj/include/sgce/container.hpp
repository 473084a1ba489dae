#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sgce/tensor.hpp"

namespace sgce {

/// Binary tensor container shared by checkpoints, expanded inputs and
/// feature files. Layout (all integers little-endian):
///
///   "SGCE"  u32 version (=1)  u64 tensor count
///   per tensor: u32 name length, UTF-8 name, u8 dtype, u8 ndim,
///               ndim x u64 dims, raw little-endian payload
///   u64 step counter, RNG state blob (remaining bytes)
enum class DType : std::uint8_t { F32 = 0, F64 = 1, U64 = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  std::string name;
  DType dtype = DType::F64;
  Shape shape;
  std::vector<std::uint8_t> payload;

  static ContainerEntry from_tensor(std::string name, const Tensor& t, DType dtype = DType::F64);
  static ContainerEntry from_u64(std::string name, std::span<const std::uint64_t> values);

  /// F32/F64 payloads as a tensor (no grad).
  Tensor to_tensor() const;
  std::vector<std::uint64_t> to_u64() const;
};

struct Container {
  std::vector<ContainerEntry> entries;
  std::uint64_t step = 0;
  std::string rng_state;

  const ContainerEntry* find(const std::string& name) const;
  /// Throws MalformedContainer when absent.
  const ContainerEntry& at(const std::string& name) const;
  void add(ContainerEntry e) { entries.push_back(std::move(e)); }
};

std::vector<std::uint8_t> serialize(const Container& c);
/// Throws MalformedContainer on truncated or inconsistent input.
Container parse_container(std::span<const std::uint8_t> bytes);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

}  // namespace sgce
