#include "nkca/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nkca/image_io.hpp"
#include "nkca/npy.hpp"

namespace nkca {

namespace {

struct RawData {
  Shape shape;  // [N, ...]
  std::vector<double> values;
  bool eight_bit = false;
  bool integer = false;
};

RawData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  RawData raw;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t pos = 0;
  bool first_line = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t line_start = pos;
    pos = eol + 1;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    // A first line holding any letter is a header.
    if (first_line && std::any_of(line.begin(), line.end(), [](char c) {
          return std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E';
        })) {
      first_line = false;
      continue;
    }
    first_line = false;
    std::size_t field_start = 0;
    std::size_t n = 0;
    while (true) {
      std::size_t comma = line.find(',', field_start);
      const std::string field = line.substr(field_start, comma == std::string::npos ? std::string::npos
                                                                                  : comma - field_start);
      const char* begin = field.c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      const bool trailing_ok = std::all_of(static_cast<const char*>(end), begin + field.size(),
                                           [](char c) { return c == ' ' || c == '\t'; });
      if (end == begin || !trailing_ok || !std::isfinite(v)) {
        throw ParseError("malformed CSV number '" + field + "'", line_start + field_start);
      }
      raw.values.push_back(v);
      ++n;
      if (comma == std::string::npos) break;
      field_start = comma + 1;
    }
    if (cols == 0) cols = n;
    if (n != cols) {
      throw ParseError("CSV row has " + std::to_string(n) + " fields, expected " + std::to_string(cols),
                       line_start);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("CSV file holds no rows", 0);
  raw.shape = {rows, cols};
  return raw;
}

RawData read_png_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .png files in '" + dir.string() + "'");
  RawData raw;
  raw.eight_bit = true;
  raw.integer = true;
  Shape first;
  for (const auto& f : files) {
    const Image img = read_png(f);
    if (first.empty()) {
      first = img.shape();
    } else if (img.shape() != first) {
      throw ValidationError("image '" + f.filename().string() + "' has shape " +
                            shape_to_string(img.shape()) + ", expected " + shape_to_string(first));
    }
    raw.values.insert(raw.values.end(), img.pixels.begin(), img.pixels.end());
  }
  raw.shape = {files.size()};
  raw.shape.insert(raw.shape.end(), first.begin(), first.end());
  return raw;
}

RawData read_source(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return read_png_dir(path);
  if (!std::filesystem::exists(path)) throw Error("dataset '" + path.string() + "' does not exist");
  const auto ext = path.extension().string();
  if (ext == ".csv") return read_csv(path);
  if (ext == ".npy") {
    npy::NpyArray a = npy::read(path);
    if (a.shape.empty()) throw ValidationError("npy dataset needs a leading example axis");
    RawData raw;
    raw.shape = a.shape;
    raw.values = std::move(a.values);
    raw.eight_bit = a.dtype == npy::DType::u8;
    raw.integer = npy::is_integer(a.dtype);
    return raw;
  }
  throw ConfigError("unsupported dataset format '" + ext + "' (expected .npy, .csv or a PNG directory)");
}

std::pair<double, double> value_range(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

Dataset Dataset::continuous(Shape example_shape, std::vector<float> values) {
  Dataset d;
  d.kind_ = KernelKind::continuous;
  d.example_shape_ = std::move(example_shape);
  d.dim_ = shape_size(d.example_shape_);
  if (d.dim_ == 0 || values.size() % d.dim_ != 0) throw ShapeError("dataset values do not fill whole examples");
  d.count_ = values.size() / d.dim_;
  for (float v : values) {
    if (!(v >= -1.0f && v <= 1.0f)) throw ValidationError("continuous data must lie in [-1, 1]");
  }
  d.values_ = std::move(values);
  return d;
}

Dataset Dataset::categorical(Shape example_shape, int categories, std::vector<Category> values) {
  Dataset d;
  d.kind_ = KernelKind::categorical;
  d.example_shape_ = std::move(example_shape);
  d.dim_ = shape_size(d.example_shape_);
  d.categories_ = categories;
  if (categories < 2) throw ConfigError("categorical datasets need K >= 2");
  if (d.dim_ == 0 || values.size() % d.dim_ != 0) throw ShapeError("dataset values do not fill whole examples");
  d.count_ = values.size() / d.dim_;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 1 || values[i] > categories) {
      throw ValidationError("category " + std::to_string(values[i]) + " at value index " + std::to_string(i) +
                            " outside 1.." + std::to_string(categories));
    }
  }
  d.labels_ = std::move(values);
  return d;
}

std::span<const float> Dataset::continuous_example(std::size_t i) const {
  if (kind_ != KernelKind::continuous) throw Error("dataset is categorical");
  return std::span<const float>(values_).subspan(i * dim_, dim_);
}

std::span<const Category> Dataset::categorical_example(std::size_t i) const {
  if (kind_ != KernelKind::categorical) throw Error("dataset is continuous");
  return std::span<const Category>(labels_).subspan(i * dim_, dim_);
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > count_) throw DomainError("dataset slice out of range");
  if (kind_ == KernelKind::continuous) {
    return continuous(example_shape_, std::vector<float>(values_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                                                         values_.begin() + static_cast<std::ptrdiff_t>(end * dim_)));
  }
  return categorical(example_shape_, categories_,
                     std::vector<Category>(labels_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                                           labels_.begin() + static_cast<std::ptrdiff_t>(end * dim_)));
}

Category discretize(double value, double lo, double hi, int categories) {
  if (!(hi > lo)) throw DomainError("discretize: empty source range");
  const double u = (value - lo) / (hi - lo);
  const auto bin = static_cast<long>(std::floor(u * categories)) + 1;
  return static_cast<Category>(std::clamp<long>(bin, 1, categories));
}

Dataset ingest_dataset(const std::filesystem::path& path, const IngestOptions& options) {
  RawData raw = read_source(path);
  const Shape example_shape(raw.shape.begin() + 1, raw.shape.end());
  const Shape shape = example_shape.empty() ? Shape{1} : example_shape;

  std::pair<double, double> range;
  bool keep_as_is = false;
  if (options.source_range) {
    range = *options.source_range;
  } else if (raw.eight_bit) {
    range = {0.0, 255.0};
  } else {
    range = value_range(raw.values);
    keep_as_is = !raw.integer && range.first >= -1.0 && range.second <= 1.0;
  }

  if (options.kind == KernelKind::continuous) {
    std::vector<float> values(raw.values.size());
    if (keep_as_is) {
      std::transform(raw.values.begin(), raw.values.end(), values.begin(),
                     [](double v) { return static_cast<float>(v); });
    } else {
      const auto [lo, hi] = range;
      if (!(hi > lo)) throw ValidationError("cannot rescale constant-valued data to [-1, 1]");
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double u = 2.0 * (raw.values[i] - lo) / (hi - lo) - 1.0;
        values[i] = static_cast<float>(std::clamp(u, -1.0, 1.0));
      }
    }
    return Dataset::continuous(shape, std::move(values));
  }

  if (!options.categories) throw ConfigError("categorical ingestion needs a category count K");
  const int k = *options.categories;
  std::vector<Category> labels(raw.values.size());
  if (raw.integer && !raw.eight_bit && !options.source_range) {
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Category>(raw.values[i]);
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = discretize(raw.values[i], range.first, range.second, k);
    }
  }
  return Dataset::categorical(shape, k, std::move(labels));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  Shape shape{dataset.size()};
  shape.insert(shape.end(), dataset.example_shape().begin(), dataset.example_shape().end());
  if (dataset.kind() == KernelKind::continuous) {
    npy::write_f32(path, shape, dataset.continuous_values());
  } else {
    npy::write_i32(path, shape, dataset.categorical_values());
  }
}

}  // namespace nkca
