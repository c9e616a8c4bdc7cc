#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nkca/array.hpp"

namespace nkca {

/// 8-bit interleaved image, `channels` is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Shape shape() const { return {height, width, channels}; }
};

Image decode_png(std::span<const std::uint8_t> bytes);
Image read_png(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// Maps [-1, 1] to 0..255 with rounding and clamping.
Image image_from_unit_range(std::span<const float> values, const Shape& shape);
/// Maps 0..255 to [-1, 1].
std::vector<float> unit_range_from_image(const Image& image);
/// Maps categories 1..K to evenly spaced intensities.
Image image_from_categories(std::span<const std::int32_t> values, const Shape& shape,
                            int categories);

}  // namespace nkca
