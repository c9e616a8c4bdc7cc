#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nkca/array.hpp"
#include "nkca/kernel_categorical.hpp"
#include "nkca/schedule.hpp"

namespace nkca {

/// Training examples. Continuous values lie in [-1, 1]; categorical values
/// lie in 1..K and never contain the absorbing symbol.
class Dataset {
 public:
  static Dataset continuous(Shape example_shape, std::vector<float> values);
  static Dataset categorical(Shape example_shape, int categories, std::vector<Category> values);

  KernelKind kind() const noexcept { return kind_; }
  const Shape& example_shape() const noexcept { return example_shape_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return count_; }
  int categories() const noexcept { return categories_; }

  std::span<const float> continuous_example(std::size_t i) const;
  std::span<const Category> categorical_example(std::size_t i) const;
  std::span<const float> continuous_values() const noexcept { return values_; }
  std::span<const Category> categorical_values() const noexcept { return labels_; }

  /// Examples [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Dataset() = default;

  KernelKind kind_ = KernelKind::continuous;
  Shape example_shape_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  int categories_ = 0;
  std::vector<float> values_;
  std::vector<Category> labels_;
};

struct IngestOptions {
  KernelKind kind = KernelKind::continuous;
  /// Category count for categorical datasets.
  std::optional<int> categories;
  /// Source value range mapped onto [-1, 1] (continuous) or split into K
  /// equal-width bins (categorical). Defaults: [0, 255] for 8-bit sources;
  /// for floating-point sources the data is kept as-is when already inside
  /// [-1, 1] and rescaled by its global min/max otherwise.
  std::optional<std::pair<double, double>> source_range;
};

/// Reads `.npy`, `.csv`, or a directory of `.png` files.
///
/// Integer npy sources other than uint8 are taken as category labels when
/// the kind is categorical; uint8 and floating-point sources are
/// intensities and are binned.
Dataset ingest_dataset(const std::filesystem::path& path, const IngestOptions& options);

/// Writes float32 (continuous) or int32 (categorical) npy with shape
/// [N, example_shape...]. Re-ingesting the file reproduces the dataset.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// K equal-width bins over [lo, hi]; lo maps to 1 and hi to K.
Category discretize(double value, double lo, double hi, int categories);

}  // namespace nkca
