#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nkca/array.hpp"

namespace nkca::npy {

enum class DType { u8, i32, i64, f32, f64 };

/// Raw contents of a .npy file; values converted to double on read.
struct NpyArray {
  DType dtype = DType::f64;
  Shape shape;
  std::vector<double> values;
};

NpyArray read(const std::filesystem::path& path);
NpyArray parse(const std::vector<std::uint8_t>& bytes);

void write_f32(const std::filesystem::path& path, const Shape& shape, std::span<const float> values);
void write_i32(const std::filesystem::path& path, const Shape& shape,
               std::span<const std::int32_t> values);

bool is_integer(DType dtype);

}  // namespace nkca::npy
