#include "nkca/npy.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nkca/error.hpp"

namespace nkca::npy {

namespace {

static_assert(std::endian::native == std::endian::little,
              "npy and checkpoint I/O assume a little-endian host");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

struct DTypeInfo {
  DType dtype;
  std::size_t size;
};

DTypeInfo parse_descr(const std::string& descr, std::size_t offset) {
  if (descr == "|u1" || descr == "<u1" || descr == "u1") return {DType::u8, 1};
  if (descr == "<i4") return {DType::i32, 4};
  if (descr == "<i8") return {DType::i64, 8};
  if (descr == "<f4") return {DType::f32, 4};
  if (descr == "<f8") return {DType::f64, 8};
  throw ParseError("unsupported npy dtype '" + descr + "'", offset);
}

/// Locates `'key':` in the header dict and returns the offset just past it.
std::size_t find_key(const std::string& header, const std::string& key, std::size_t base) {
  const std::string needle = "'" + key + "'";
  const auto pos = header.find(needle);
  if (pos == std::string::npos) throw ParseError("npy header lacks " + needle, base);
  auto colon = header.find(':', pos + needle.size());
  if (colon == std::string::npos) throw ParseError("npy header: missing ':' after " + needle, base + pos);
  return colon + 1;
}

std::size_t skip_spaces(const std::string& s, std::size_t i) {
  while (i < s.size() && s[i] == ' ') ++i;
  return i;
}

}  // namespace

bool is_integer(DType dtype) {
  return dtype == DType::u8 || dtype == DType::i32 || dtype == DType::i64;
}

NpyArray parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw ParseError("not an npy file (bad magic)", 0);
  }
  const int major = bytes[6];
  std::size_t header_len = 0;
  std::size_t header_start = 0;
  if (major == 1) {
    header_len = static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8);
    header_start = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw ParseError("truncated npy preamble", bytes.size());
    header_len = 0;
    for (int b = 0; b < 4; ++b) header_len |= static_cast<std::size_t>(bytes[8 + b]) << (8 * b);
    header_start = 12;
  } else {
    throw ParseError("unsupported npy version " + std::to_string(major), 6);
  }
  if (header_start + header_len > bytes.size()) {
    throw ParseError("npy header extends past end of file", bytes.size());
  }
  const std::string header(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                           bytes.begin() + static_cast<std::ptrdiff_t>(header_start + header_len));

  NpyArray out;
  // descr
  std::size_t i = skip_spaces(header, find_key(header, "descr", header_start));
  if (i >= header.size() || header[i] != '\'') throw ParseError("npy descr is not a string", header_start + i);
  const auto end = header.find('\'', i + 1);
  if (end == std::string::npos) throw ParseError("unterminated npy descr", header_start + i);
  const DTypeInfo info = parse_descr(header.substr(i + 1, end - i - 1), header_start + i);
  out.dtype = info.dtype;
  // fortran_order
  i = skip_spaces(header, find_key(header, "fortran_order", header_start));
  if (header.compare(i, 4, "True") == 0) {
    throw ParseError("fortran-ordered npy arrays are not supported", header_start + i);
  }
  if (header.compare(i, 5, "False") != 0) throw ParseError("bad fortran_order value", header_start + i);
  // shape
  i = skip_spaces(header, find_key(header, "shape", header_start));
  if (i >= header.size() || header[i] != '(') throw ParseError("npy shape is not a tuple", header_start + i);
  ++i;
  while (true) {
    i = skip_spaces(header, i);
    if (i >= header.size()) throw ParseError("unterminated npy shape", header_start + i);
    if (header[i] == ')') break;
    if (header[i] == ',') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < header.size() && std::isdigit(static_cast<unsigned char>(header[j]))) ++j;
    if (j == i) throw ParseError("bad npy shape entry", header_start + i);
    out.shape.push_back(std::stoull(header.substr(i, j - i)));
    i = j;
  }

  const std::size_t count = shape_size(out.shape);
  const std::size_t data_start = header_start + header_len;
  const std::size_t need = count * info.size;
  if (bytes.size() - data_start < need) {
    throw ParseError("npy payload truncated: need " + std::to_string(need) + " bytes", bytes.size());
  }
  if (bytes.size() - data_start > need) {
    throw ParseError("npy payload has trailing bytes", data_start + need);
  }
  out.values.resize(count);
  const std::uint8_t* p = bytes.data() + data_start;
  for (std::size_t k = 0; k < count; ++k, p += info.size) {
    switch (info.dtype) {
      case DType::u8: out.values[k] = *p; break;
      case DType::i32: { std::int32_t v; std::memcpy(&v, p, 4); out.values[k] = v; break; }
      case DType::i64: { std::int64_t v; std::memcpy(&v, p, 8); out.values[k] = static_cast<double>(v); break; }
      case DType::f32: { float v; std::memcpy(&v, p, 4); out.values[k] = v; break; }
      case DType::f64: { double v; std::memcpy(&v, p, 8); out.values[k] = v; break; }
    }
  }
  return out;
}

NpyArray read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

namespace {

void write_raw(const std::filesystem::path& path, const Shape& shape, const char* descr,
               const void* data, std::size_t nbytes) {
  std::string dict = std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    dict += (shape.size() == 1 || i + 1 < shape.size()) ? "," : "";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // Pad so the payload starts on a 64-byte boundary.
  const std::size_t total = kMagicLen + 4 + dict.size() + 1;
  dict.append((64 - total % 64) % 64, ' ');
  dict += '\n';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(kMagic, kMagicLen);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(dict.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(nbytes));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace

void write_f32(const std::filesystem::path& path, const Shape& shape, std::span<const float> values) {
  if (shape_size(shape) != values.size()) throw ShapeError("npy write: shape/value count mismatch");
  write_raw(path, shape, "<f4", values.data(), values.size() * sizeof(float));
}

void write_i32(const std::filesystem::path& path, const Shape& shape,
               std::span<const std::int32_t> values) {
  if (shape_size(shape) != values.size()) throw ShapeError("npy write: shape/value count mismatch");
  write_raw(path, shape, "<i4", values.data(), values.size() * sizeof(std::int32_t));
}

}  // namespace nkca::npy
