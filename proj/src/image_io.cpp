#include "nkca/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nkca/error.hpp"

namespace nkca {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ParseError(std::string("invalid PNG: ") + png.message, 0);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img;
  img.height = png.height;
  img.width = png.width;
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ParseError("PNG decode failed: " + msg, 0);
  }
  return img;
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("PNG output needs 1 or 3 channels");
  if (image.pixels.size() != image.height * image.width * image.channels) {
    throw ShapeError("image pixel buffer does not match its shape");
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png, size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

Image blank_like(const Shape& shape) {
  Image img;
  if (shape.size() == 3) {
    img.height = shape[0];
    img.width = shape[1];
    img.channels = shape[2];
  } else if (shape.size() == 2) {
    img.height = shape[0];
    img.width = shape[1];
    img.channels = 1;
  } else {
    throw ShapeError("image shape must be [H, W] or [H, W, C], got " + shape_to_string(shape));
  }
  img.pixels.resize(img.height * img.width * img.channels);
  return img;
}

}  // namespace

Image image_from_unit_range(std::span<const float> values, const Shape& shape) {
  Image img = blank_like(shape);
  if (values.size() != img.pixels.size()) throw ShapeError("image value count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::lround((static_cast<double>(values[i]) + 1.0) * 0.5 * 255.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

std::vector<float> unit_range_from_image(const Image& image) {
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(image.pixels[i] / 255.0 * 2.0 - 1.0);
  }
  return out;
}

Image image_from_categories(std::span<const std::int32_t> values, const Shape& shape,
                            int categories) {
  Image img = blank_like(shape);
  if (values.size() != img.pixels.size()) throw ShapeError("image value count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    // Absorbing symbols render black.
    const int v = values[i] > categories ? 1 : values[i];
    img.pixels[i] = static_cast<std::uint8_t>(
        std::lround(255.0 * (v - 1) / static_cast<double>(categories - 1)));
  }
  return img;
}

}  // namespace nkca
