#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "nkca/checkpoint.hpp"
#include "nkca/dataset.hpp"
#include "nkca/exact_posterior.hpp"
#include "nkca/image_io.hpp"
#include "nkca/schedule.hpp"
#include "nkca/trainer.hpp"
#include "nkca/transition.hpp"

namespace nkca {

struct ScheduleSpec {
  std::size_t steps = 100;
  double beta_start = 1.0;
  double beta_end = 0.01;

  NoiseSchedule build(KernelKind kind) const;
};

struct VariantSpec {
  double beta = 0.2;
  std::size_t steps = 100;
  std::size_t n = 8;
};

struct InpaintSpec {
  ScheduleSpec schedule;
  std::size_t tile = 16;
};

/// Either a file (`path`) or a built-in generator: eight_gaussians,
/// categorical_toy or stripes.
struct DatasetSpec {
  std::optional<std::string> path;
  std::optional<std::string> generator;
  std::size_t count = 10'000;
  std::uint64_t seed = 0;
  /// Image side for the stripes generator.
  std::size_t side = 8;
  std::optional<std::pair<double, double>> source_range;
};

struct RunConfig {
  std::uint64_t seed = 0;
  NoiseKernel kernel;
  ScheduleSpec schedule;
  VariantSpec variants;
  InpaintSpec inpaint;
  DenoiserSpec denoiser;  // dim filled from the dataset
  TrainConfig train;
  DatasetSpec dataset;
  std::string output_dir = "runs/default";

  /// Kind agreement, schedule validity for w, ranges. Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Default settings for each kernel kind (schedules, w, training).
RunConfig default_run_config(KernelKind kind);

/// Parses TOML, or JSON when the text starts with '{'. Unknown keys and bad
/// values raise ConfigError; the result is validated.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Reads or generates the dataset named by `config.dataset`.
Dataset load_dataset(const RunConfig& config);

GaussianMixture eight_gaussians_model(double radius = 0.7, double stddev = 0.1);
Dataset eight_gaussians(std::size_t count, std::uint64_t seed);
CategoricalDataModel categorical_toy_model(std::uint64_t seed);
Dataset categorical_toy(std::size_t count, std::uint64_t seed);
/// Gray `side` x `side` images of horizontal or vertical stripes with random
/// period and phase.
Dataset stripes(std::size_t count, std::size_t side, std::uint64_t seed);

/// Everything needed to sample from a checkpoint: its run config, the
/// dataset example shape and an EMA-parameter denoiser.
struct LoadedModel {
  RunConfig config;
  Shape example_shape;
  std::string digest;
  std::shared_ptr<const Denoiser<float>> denoiser;

  NoiseKernel kernel() const { return config.kernel; }
};

LoadedModel load_model(const std::filesystem::path& checkpoint_path);
LoadedModel model_from_checkpoint(const Checkpoint& checkpoint);

/// Renders one example as an 8-bit image: intensities in [-1, 1], or
/// evenly spaced levels per category. 1-D examples become a single row.
Image render_example(const LoadedModel& model, std::span<const float> values);
/// Example values from an 8-bit image of the model's example shape (a
/// trailing channel of 1 may be implied). Throws ShapeError otherwise.
std::vector<float> example_from_image(const LoadedModel& model, const Image& image);

/// Inpainting mask from an image with the model's height and width: any
/// nonzero pixel marks every channel at that position for generation.
/// Throws ShapeError on a size mismatch.
std::vector<std::uint8_t> mask_from_image(const LoadedModel& model, const Image& image);
/// Marks `count` square tiles of side `tile` (clipped to the example size)
/// at positions drawn from `rng`.
std::vector<std::uint8_t> random_tile_mask(const LoadedModel& model, std::size_t count, std::size_t tile, Rng& rng);

/// Run config stored in checkpoints: the config plus the example shape.
nlohmann::json checkpoint_config(const RunConfig& config, const Shape& example_shape);

}  // namespace nkca
