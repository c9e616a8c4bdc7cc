#include "nkca/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace nkca {

namespace {

template <typename T>
std::vector<T> draw_levels(Eigen::Index rows, const TrainConfig& config, Rng& rng) {
  std::vector<T> beta(static_cast<std::size_t>(rows));
  for (auto& b : beta) {
    b = static_cast<T>(config.beta_min + (config.beta_max - config.beta_min) * rng.uniform());
  }
  return beta;
}

template <typename T>
Batch<T> noise_batch(const NoiseKernel& kernel, const Batch<T>& z, std::span<const T> beta, Rng& rng) {
  Batch<T> x(z.rows(), z.cols());
  const auto d = static_cast<std::size_t>(z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    forward_noise_row<T>(kernel, std::span<const T>(z.data() + r * z.cols(), d),
                         static_cast<double>(beta[static_cast<std::size_t>(r)]), rng,
                         std::span<T>(x.data() + r * x.cols(), d));
  }
  return x;
}

template <typename T>
std::vector<KernelCoeffs> equilibrium_rows(const NoiseKernel& kernel, std::span<const T> beta) {
  std::vector<KernelCoeffs> out(beta.size());
  for (std::size_t r = 0; r < beta.size(); ++r) out[r] = kernel_equilibrium(kernel, static_cast<double>(beta[r]));
  return out;
}

template <typename T>
void check_step_inputs(const Batch<T>& z, const Denoiser<T>& denoiser, const NoiseKernel& kernel) {
  if (z.rows() == 0) throw DomainError("training batch is empty");
  if (denoiser.kind() != kernel.kind) throw ConfigError("denoiser and kernel kinds differ");
  if (static_cast<std::size_t>(z.cols()) != denoiser.dim()) throw ShapeError("batch width differs from denoiser dim");
}

void for_each_pair(TensorMap<float>& a, const TensorMap<float>& b, const std::string& context,
                   const std::function<void(float&, float)>& fn) {
  require_same_layout(a, b, context);
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    auto dst = ia->second.values();
    auto src = ib->second.values();
    for (std::size_t i = 0; i < dst.size(); ++i) fn(dst[i], src[i]);
  }
}

bool all_finite(const TensorMap<float>& tensors) {
  for (const auto& [name, array] : tensors) {
    if (!array.all_finite()) return false;
  }
  return true;
}

/// Mirrors the width axis of an [H, W] or [H, W, C] example in place.
void flip_horizontal(std::span<float> example, const Shape& shape) {
  if (shape.size() < 2) return;
  const std::size_t h = shape[0];
  const std::size_t w = shape[1];
  const std::size_t c = shape.size() > 2 ? shape_size(Shape(shape.begin() + 2, shape.end())) : 1;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w / 2; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        std::swap(example[(y * w + x) * c + k], example[(y * w + (w - 1 - x)) * c + k]);
      }
    }
  }
}

}  // namespace

const char* to_string(Objective objective) {
  return objective == Objective::contrastive ? "contrastive" : "reconstruction";
}

Objective objective_from_string(const std::string& name) {
  if (name == "contrastive") return Objective::contrastive;
  if (name == "reconstruction") return Objective::reconstruction;
  throw ConfigError("unknown training objective '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max)) {
    throw ConfigError("beta_range must be an interval inside (0, 1)");
  }
  if (!(adam_b1 >= 0.0 && adam_b1 < 1.0 && adam_b2 >= 0.0 && adam_b2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  // The step counter is checkpointed as float32.
  if (total_steps > (std::size_t{1} << 24)) throw ConfigError("total_steps exceeds 16777216");
}

template <typename T>
ContrastivePairs<T> draw_contrastive_pairs(const Batch<T>& z, const Denoiser<T>& denoiser,
                                           const NoiseKernel& kernel, const TrainConfig& config,
                                           Rng& rng) {
  check_step_inputs(z, denoiser, kernel);
  ContrastivePairs<T> pairs;
  pairs.beta = draw_levels<T>(z.rows(), config, rng);
  pairs.x = noise_batch<T>(kernel, z, pairs.beta, rng);
  const auto coeffs = equilibrium_rows<T>(kernel, pairs.beta);
  const DenoiserOutput<T> out = denoiser.evaluate(pairs.x, pairs.beta);
  pairs.y = sample_transition<T>(kernel, pairs.x, out, coeffs, [&rng](Eigen::Index) -> Rng& { return rng; });
  return pairs;
}

template <typename T>
double contrastive_loss(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                        const ContrastivePairs<T>& pairs, TensorMap<T>* grads) {
  const double n = static_cast<double>(pairs.x.rows()) * static_cast<double>(pairs.x.cols());
  const auto coeffs = equilibrium_rows<T>(kernel, std::span<const T>(pairs.beta));
  const double logp = transition_logprob_batch<T>(denoiser, kernel, pairs.y, pairs.x, pairs.beta, coeffs,
                                                  grads, -1.0 / n);
  return -logp / n;
}

template <typename T>
double contrastive_step(const Batch<T>& z, const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                        const TrainConfig& config, Rng& rng, TensorMap<T>& grads) {
  const auto pairs = draw_contrastive_pairs<T>(z, denoiser, kernel, config, rng);
  return contrastive_loss<T>(denoiser, kernel, pairs, &grads);
}

template <typename T>
double reconstruction_step(const Batch<T>& z, const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                           const TrainConfig& config, Rng& rng, TensorMap<T>& grads) {
  check_step_inputs(z, denoiser, kernel);
  const auto beta = draw_levels<T>(z.rows(), config, rng);
  const Batch<T> x = noise_batch<T>(kernel, z, beta, rng);
  const double n = static_cast<double>(z.rows()) * static_cast<double>(z.cols());
  return -reconstruction_logprob_batch<T>(denoiser, kernel, z, x, beta, &grads, -1.0 / n) / n;
}

AdamState AdamState::zeros_like(const TensorMap<float>& params) {
  return {nkca::zeros_like(params), nkca::zeros_like(params), 0};
}

TensorMap<float> AdamState::to_tensors() const {
  TensorMap<float> out;
  for (const auto& [name, array] : m) out.emplace("adam.m." + name, array);
  for (const auto& [name, array] : v) out.emplace("adam.v." + name, array);
  out.emplace("adam.step", NumericArray(Shape{1}, std::vector<float>{static_cast<float>(step)}));
  return out;
}

AdamState AdamState::from_tensors(const TensorMap<float>& tensors, const TensorMap<float>& params) {
  AdamState state;
  for (const auto& [name, array] : params) {
    const auto im = tensors.find("adam.m." + name);
    const auto iv = tensors.find("adam.v." + name);
    if (im == tensors.end() || iv == tensors.end()) throw ValidationError("optimizer state lacks '" + name + "'");
    state.m.emplace(name, im->second);
    state.v.emplace(name, iv->second);
  }
  require_same_layout(state.m, params, "optimizer first moment");
  require_same_layout(state.v, params, "optimizer second moment");
  const auto is = tensors.find("adam.step");
  if (is == tensors.end() || is->second.size() != 1) throw ValidationError("optimizer state lacks the step count");
  state.step = static_cast<std::uint64_t>(is->second[0]);
  return state;
}

void adam_update(TensorMap<float>& params, const TensorMap<float>& grads, AdamState& state,
                 const TrainConfig& config) {
  require_same_layout(params, grads, "adam gradients");
  require_same_layout(params, state.m, "adam first moment");
  require_same_layout(params, state.v, "adam second moment");
  ++state.step;
  const double b1 = config.adam_b1;
  const double b2 = config.adam_b2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto ig = grads.begin();
  auto im = state.m.begin();
  auto iv = state.v.begin();
  for (auto ip = params.begin(); ip != params.end(); ++ip, ++ig, ++im, ++iv) {
    auto p = ip->second.values();
    auto g = ig->second.values();
    auto m = im->second.values();
    auto v = iv->second.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double step = config.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + config.adam_eps);
      p[i] = static_cast<float>(p[i] - step);
    }
  }
}

void ema_update(TensorMap<float>& ema, const TensorMap<float>& params, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw DomainError("ema decay must lie in [0, 1)");
  for_each_pair(ema, params, "ema parameters", [decay](float& e, float p) {
    e = static_cast<float>(decay * e + (1.0 - decay) * p);
  });
}

TensorMap<float> initial_parameters(const DenoiserSpec& spec, std::uint64_t seed) {
  Rng rng = Rng(seed).split(0);
  return init_parameters<float>(spec, rng);
}

Checkpoint train(const TrainConfig& config, const Dataset& dataset, const DenoiserSpec& spec,
                 const NoiseKernel& kernel, const TrainOptions& options) {
  config.validate();
  kernel.validate();
  if (spec.kind != kernel.kind || dataset.kind() != kernel.kind) {
    throw ConfigError("dataset, denoiser and kernel kinds must agree");
  }
  if (spec.dim != dataset.dim()) {
    throw ConfigError("denoiser dim " + std::to_string(spec.dim) + " differs from dataset dim " +
                      std::to_string(dataset.dim()));
  }
  if (kernel.kind == KernelKind::categorical &&
      (spec.categories != kernel.categories || dataset.categories() != kernel.categories)) {
    throw ConfigError("category counts of dataset, denoiser and kernel must agree");
  }
  if (dataset.size() == 0 && config.total_steps > 0) throw ConfigError("dataset is empty");

  TensorMap<float> init = options.initial_parameters ? *options.initial_parameters
                                                     : initial_parameters(spec, config.seed);
  auto denoiser = make_denoiser<float>(spec, std::move(init));
  TensorMap<float>& params = denoiser->mutable_parameters();
  TensorMap<float> ema = params;
  AdamState adam = AdamState::zeros_like(params);

  Rng root(config.seed);
  Rng data_rng = root.split(1);
  Rng step_rng = root.split(2);

  const auto d = static_cast<Eigen::Index>(dataset.dim());
  const auto rows = static_cast<Eigen::Index>(config.batch_size);
  Batch<float> z(rows, d);
  std::vector<float> example(dataset.dim());

  const auto start = std::chrono::steady_clock::now();
  double window_loss = 0.0;
  std::size_t window = 0;

  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto idx = static_cast<std::size_t>(data_rng.below(dataset.size()));
      if (kernel.kind == KernelKind::continuous) {
        const auto src = dataset.continuous_example(idx);
        std::copy(src.begin(), src.end(), example.begin());
      } else {
        const auto src = dataset.categorical_example(idx);
        std::transform(src.begin(), src.end(), example.begin(), [](Category c) { return static_cast<float>(c); });
      }
      if (config.horizontal_flip && data_rng.uniform() < 0.5) flip_horizontal(example, dataset.example_shape());
      std::copy(example.begin(), example.end(), z.row(r).data());
    }

    TensorMap<float> grads = zeros_like(params);
    double loss = 0.0;
    try {
      loss = config.objective == Objective::contrastive
                 ? contrastive_step<float>(z, *denoiser, kernel, config, step_rng, grads)
                 : reconstruction_step<float>(z, *denoiser, kernel, config, step_rng, grads);
      if (!std::isfinite(loss) || !all_finite(grads)) throw DomainError("non-finite loss or gradient");
    } catch (const Error& e) {
      std::string saved;
      if (options.fault_checkpoint) {
        save_checkpoint(Checkpoint(params, ema, adam.to_tensors(), options.run_config, config.seed),
                        *options.fault_checkpoint);
        saved = options.fault_checkpoint->string();
      }
      throw TrainingFault("training failed at step " + std::to_string(step) + ": " + e.what() +
                              (saved.empty() ? "" : " (last-good checkpoint: " + saved + ")"),
                          saved);
    }

    adam_update(params, grads, adam, config);
    ema_update(ema, params, config.ema_decay);

    window_loss += loss;
    ++window;
    if (options.metrics && config.log_every > 0 &&
        (step % config.log_every == 0 || step == config.total_steps)) {
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      options.metrics({{"step", step}, {"loss", window_loss / static_cast<double>(window)}, {"seconds", seconds}});
      window_loss = 0.0;
      window = 0;
    }
  }
  return Checkpoint(params, ema, adam.to_tensors(), options.run_config, config.seed);
}

#define NKCA_INSTANTIATE(T)                                                                            \
  template ContrastivePairs<T> draw_contrastive_pairs<T>(const Batch<T>&, const Denoiser<T>&,          \
                                                         const NoiseKernel&, const TrainConfig&, Rng&); \
  template double contrastive_loss<T>(const Denoiser<T>&, const NoiseKernel&,                         \
                                      const ContrastivePairs<T>&, TensorMap<T>*);                     \
  template double contrastive_step<T>(const Batch<T>&, const Denoiser<T>&, const NoiseKernel&,        \
                                      const TrainConfig&, Rng&, TensorMap<T>&);                       \
  template double reconstruction_step<T>(const Batch<T>&, const Denoiser<T>&, const NoiseKernel&,     \
                                         const TrainConfig&, Rng&, TensorMap<T>&);

NKCA_INSTANTIATE(float)
NKCA_INSTANTIATE(double)

#undef NKCA_INSTANTIATE

}  // namespace nkca
