#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "nkca/checkpoint.hpp"
#include "nkca/dataset.hpp"
#include "nkca/transition.hpp"

namespace nkca {

enum class Objective { contrastive, reconstruction };

const char* to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t total_steps = 0;
  double ema_decay = 0.999;
  /// Per-example noise levels are drawn uniformly from [beta_min, beta_max].
  double beta_min = 0.001;
  double beta_max = 0.999;
  double adam_b1 = 0.9;
  double adam_b2 = 0.999;
  double adam_eps = 1e-8;
  bool horizontal_flip = false;
  std::uint64_t seed = 0;
  Objective objective = Objective::contrastive;
  /// Metrics record period in steps (0 disables).
  std::size_t log_every = 100;

  void validate() const;
};

/// One minibatch of (x, y) pairs for contrastive adjustment: x is the
/// forward-noised data at level beta, y ~ p(. | x) under the equilibrium
/// kernel at that level.
template <typename T>
struct ContrastivePairs {
  Batch<T> x;
  Batch<T> y;
  std::vector<T> beta;
};

template <typename T>
ContrastivePairs<T> draw_contrastive_pairs(const Batch<T>& z, const Denoiser<T>& denoiser,
                                           const NoiseKernel& kernel, const TrainConfig& config,
                                           Rng& rng);

/// Loss -log p(x | y) / (B D) for fixed pairs. Adds d(loss)/d(parameters)
/// into `grads` when given.
template <typename T>
double contrastive_loss(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                        const ContrastivePairs<T>& pairs, TensorMap<T>* grads);

/// Draws pairs and accumulates the loss gradient; returns the loss.
template <typename T>
double contrastive_step(const Batch<T>& z, const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                        const TrainConfig& config, Rng& rng, TensorMap<T>& grads);

/// Loss -log r(z | x) / (B D) with x forward-noised at a uniform level.
template <typename T>
double reconstruction_step(const Batch<T>& z, const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                           const TrainConfig& config, Rng& rng, TensorMap<T>& grads);

struct AdamState {
  TensorMap<float> m;
  TensorMap<float> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const TensorMap<float>& params);
  /// Stored as "adam.m.<name>", "adam.v.<name>" and "adam.step".
  TensorMap<float> to_tensors() const;
  static AdamState from_tensors(const TensorMap<float>& tensors, const TensorMap<float>& params);
};

/// Bias-corrected Adam descent step on `params` using loss gradients.
void adam_update(TensorMap<float>& params, const TensorMap<float>& grads, AdamState& state,
                 const TrainConfig& config);

/// ema <- decay ema + (1 - decay) params.
void ema_update(TensorMap<float>& ema, const TensorMap<float>& params, double decay);

struct TrainOptions {
  /// Starting parameters; drawn from the spec's initializer when absent.
  std::optional<TensorMap<float>> initial_parameters;
  /// Receives {step, loss, seconds} records.
  std::function<void(const nlohmann::json&)> metrics;
  /// Where the last-good checkpoint goes if a step fails.
  std::optional<std::filesystem::path> fault_checkpoint;
  /// Stored verbatim in the checkpoint.
  nlohmann::json run_config = nlohmann::json::object();
};

/// Runs `config.total_steps` optimizer steps. Deterministic in
/// (config, dataset, spec, kernel, initial parameters).
Checkpoint train(const TrainConfig& config, const Dataset& dataset, const DenoiserSpec& spec,
                 const NoiseKernel& kernel, const TrainOptions& options = {});

/// Parameter initialization used by train() for `seed`.
TensorMap<float> initial_parameters(const DenoiserSpec& spec, std::uint64_t seed);

}  // namespace nkca
