#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include "agcl/core/tensor.hpp"

namespace agcl::data {

/// Tensor file: "AGT1", u32 dtype code, u32 rank, u64 extents, raw
/// little-endian row-major payload.
enum class DType : std::uint32_t { f32 = 1, f64 = 2, u8 = 3 };

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::f32; }
template <> constexpr DType dtype_of<double>() { return DType::f64; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }

std::string dtype_name(DType d);
DType dtype_from_name(const std::string& name);

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint8_t>>;

struct TensorHeader {
  DType dtype = DType::f32;
  Shape shape;
};

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);
template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t);

/// `name` is used in error messages. CorruptionError on bad magic, unknown
/// dtype or a short payload.
AnyTensor read_any_tensor(std::istream& in, const std::string& name);
AnyTensor read_any_tensor(const std::filesystem::path& path);

/// As read_any_tensor, plus CorruptionError when the stored dtype is not T.
template <typename T>
Tensor<T> read_tensor(std::istream& in, const std::string& name);
template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path);

TensorHeader header_of(const AnyTensor& t);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace agcl::data
