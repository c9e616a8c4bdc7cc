#include "nkca/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace nkca {

namespace {

constexpr std::size_t kBlock = 256;

void check_condition(const InpaintCondition& c, const Denoiser<float>& denoiser, const NoiseKernel& kernel) {
  if (c.observed.size() != denoiser.dim() || c.mask.size() != denoiser.dim()) {
    throw ShapeError("inpaint observation and mask must have " + std::to_string(denoiser.dim()) + " elements");
  }
  for (auto m : c.mask) {
    if (m > 1) throw DomainError("inpaint mask entries must be 0 or 1");
  }
  if (kernel.kind == KernelKind::continuous) {
    for (float v : c.observed) {
      if (!std::isfinite(v)) throw DomainError("inpaint observation must be finite");
    }
  } else {
    for (float v : c.observed) {
      if (v != std::round(v) || v < 1.0f || v > static_cast<float>(kernel.categories)) {
        throw DomainError("inpaint observation must hold categories 1..K");
      }
    }
  }
}

void check_kinds(const Denoiser<float>& denoiser, const NoiseKernel& kernel) {
  kernel.validate();
  if (denoiser.kind() != kernel.kind) throw ConfigError("denoiser and kernel kinds differ");
  if (kernel.kind == KernelKind::categorical && denoiser.categories() != kernel.categories) {
    throw ConfigError("denoiser and kernel category counts differ");
  }
}

ChainState fresh_chains(const NoiseKernel& kernel, std::size_t dim, std::size_t first, std::size_t count,
                        double beta, std::uint64_t seed) {
  ChainState s;
  s.kind = kernel.kind;
  s.beta = beta;
  s.x.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  s.rngs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) s.rngs.emplace_back(sub_seed(seed, first + i));
  return s;
}

std::vector<float> levels(Eigen::Index rows, double beta) {
  return std::vector<float>(static_cast<std::size_t>(rows), static_cast<float>(beta));
}

Batch<float> denoise(const ChainState& s, const Denoiser<float>& denoiser, const NoiseKernel& kernel) {
  return denoise_point<float>(kernel, denoiser.evaluate(s.x, levels(s.chains(), s.beta)));
}

}  // namespace

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) { return Rng(seed).split(index).seed(); }

void chain_step(ChainState& state, const Denoiser<float>& denoiser, const NoiseKernel& kernel,
                double beta_next, const InpaintCondition* condition) {
  if (state.kind != kernel.kind) throw ConfigError("chain and kernel kinds differ");
  if (static_cast<std::size_t>(state.chains()) != state.rngs.size()) throw ShapeError("one stream per chain required");
  if (static_cast<std::size_t>(state.x.cols()) != denoiser.dim()) throw ShapeError("chain width differs from denoiser dim");
  KernelCoeffs coeffs;
  try {
    coeffs = kernel_step(kernel, state.beta, beta_next);
  } catch (const ScheduleError& e) {
    throw ScheduleError(std::string(e.what()) + " at t=" + std::to_string(state.t),
                        static_cast<std::ptrdiff_t>(state.t));
  }
  if (condition) check_condition(*condition, denoiser, kernel);

  const DenoiserOutput<float> out = denoiser.evaluate(state.x, levels(state.chains(), state.beta));
  if (!condition) {
    const std::vector<KernelCoeffs> rows(static_cast<std::size_t>(state.chains()), coeffs);
    state.x = sample_transition<float>(kernel, state.x, out, rows,
                                       [&state](Eigen::Index r) -> Rng& { return state.rngs[static_cast<std::size_t>(r)]; });
  } else {
    const auto d = static_cast<std::size_t>(state.x.cols());
    Batch<float> next(state.x.rows(), state.x.cols());
    if (kernel.kind == KernelKind::continuous) {
      const std::vector<float> mask(condition->mask.begin(), condition->mask.end());
      for (Eigen::Index r = 0; r < state.chains(); ++r) {
        const std::span<const float> x(state.x.data() + r * state.x.cols(), d);
        const auto params = inpaint_transition_params<float>(x, out.gaussian(r), condition->observed, mask, coeffs, kernel.w);
        const auto y = sample_gaussian(params, state.rngs[static_cast<std::size_t>(r)]);
        std::copy(y.begin(), y.end(), next.row(r).data());
      }
    } else {
      std::vector<Category> observed(d);
      for (std::size_t i = 0; i < d; ++i) observed[i] = static_cast<Category>(std::lround(condition->observed[i]));
      for (Eigen::Index r = 0; r < state.chains(); ++r) {
        std::vector<Category> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<Category>(std::lround(state.x(r, static_cast<Eigen::Index>(i))));
        const auto pinned = pin_observed_rows<float>(out.simplex(r, kernel.categories), observed, condition->mask);
        const auto probs = transition_probs_cat<float>(x, pinned, coeffs.b, kernel.w);
        const auto y = sample_cat(probs, state.rngs[static_cast<std::size_t>(r)]);
        for (std::size_t i = 0; i < d; ++i) next(r, static_cast<Eigen::Index>(i)) = static_cast<float>(y[i]);
      }
    }
    state.x = std::move(next);
  }
  ++state.t;
  state.beta = beta_next;
}

Batch<float> synthesize(const Denoiser<float>& denoiser, const NoiseKernel& kernel,
                        const NoiseSchedule& schedule, std::size_t n, std::uint64_t seed,
                        const TraceFn& trace) {
  check_kinds(denoiser, kernel);
  if (schedule.kind() != kernel.kind) throw ConfigError("schedule and kernel kinds differ");
  schedule.validate_for(kernel.w);
  const auto dim = denoiser.dim();
  Batch<float> result(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t first = 0; first < n; first += kBlock) {
    const std::size_t count = std::min(kBlock, n - first);
    ChainState s = fresh_chains(kernel, dim, first, count, schedule.beta(0), seed);
    for (std::size_t r = 0; r < count; ++r) {
      Rng& rng = s.rngs[r];
      for (std::size_t i = 0; i < dim; ++i) {
        s.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
            kernel.kind == KernelKind::continuous ? static_cast<float>(rng.normal())
                                                  : static_cast<float>(kernel.absorbing());
      }
    }
    if (trace) trace(first, 0, s.beta, s.x, denoise(s, denoiser, kernel));
    for (std::size_t t = 0; t < schedule.steps(); ++t) {
      chain_step(s, denoiser, kernel, schedule.beta(t + 1));
      if (trace) trace(first, s.t, s.beta, s.x, denoise(s, denoiser, kernel));
    }
    result.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) =
        denoise(s, denoiser, kernel);
  }
  return result;
}

Batch<float> variants_from_sub_seeds(std::span<const float> z0, double beta, std::size_t steps,
                                     std::span<const std::uint64_t> sub_seeds,
                                     const Denoiser<float>& denoiser, const NoiseKernel& kernel) {
  check_kinds(denoiser, kernel);
  if (z0.size() != denoiser.dim()) throw ShapeError("seed example has the wrong number of elements");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("variant noise level must lie in (0, 1)");
  if (kernel.kind == KernelKind::categorical) {
    for (float v : z0) {
      if (v != std::round(v) || v < 1.0f || v > static_cast<float>(kernel.categories)) {
        throw DomainError("seed example must hold categories 1..K");
      }
    }
  }
  const auto dim = denoiser.dim();
  const std::size_t n = sub_seeds.size();
  Batch<float> result(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t first = 0; first < n; first += kBlock) {
    const std::size_t count = std::min(kBlock, n - first);
    ChainState s;
    s.kind = kernel.kind;
    s.beta = beta;
    s.x.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < count; ++r) {
      s.rngs.emplace_back(sub_seeds[first + r]);
      forward_noise_row<float>(kernel, z0, beta, s.rngs.back(),
                               std::span<float>(s.x.row(static_cast<Eigen::Index>(r)).data(), dim));
    }
    for (std::size_t t = 0; t < steps; ++t) chain_step(s, denoiser, kernel, beta);
    result.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) =
        denoise(s, denoiser, kernel);
  }
  return result;
}

Batch<float> variants(std::span<const float> z0, double beta, std::size_t steps, std::size_t n,
                      const Denoiser<float>& denoiser, const NoiseKernel& kernel, std::uint64_t seed) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = sub_seed(seed, i);
  return variants_from_sub_seeds(z0, beta, steps, seeds, denoiser, kernel);
}

std::vector<float> inpaint(const InpaintCondition& condition, const Denoiser<float>& denoiser,
                           const NoiseKernel& kernel, const NoiseSchedule& schedule, std::uint64_t seed) {
  check_kinds(denoiser, kernel);
  check_condition(condition, denoiser, kernel);
  if (schedule.kind() != kernel.kind) throw ConfigError("schedule and kernel kinds differ");
  schedule.validate_for(kernel.w);
  if (std::none_of(condition.mask.begin(), condition.mask.end(), [](std::uint8_t m) { return m == 1; })) {
    return condition.observed;
  }
  const auto dim = denoiser.dim();
  ChainState s = fresh_chains(kernel, dim, 0, 1, schedule.beta(0), seed);
  Rng& rng = s.rngs[0];
  std::vector<float> start(dim);
  forward_noise_row<float>(kernel, condition.observed, schedule.beta(0), rng, start);
  for (std::size_t i = 0; i < dim; ++i) {
    if (condition.mask[i] == 1) {
      start[i] = kernel.kind == KernelKind::continuous ? static_cast<float>(rng.normal())
                                                       : static_cast<float>(kernel.absorbing());
    }
    s.x(0, static_cast<Eigen::Index>(i)) = start[i];
  }
  for (std::size_t t = 0; t < schedule.steps(); ++t) chain_step(s, denoiser, kernel, schedule.beta(t + 1), &condition);
  const Batch<float> z = denoise(s, denoiser, kernel);
  std::vector<float> out(condition.observed);
  for (std::size_t i = 0; i < dim; ++i) {
    if (condition.mask[i] == 1) out[i] = z(0, static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<Batch<float>> constant_level_trace(const InpaintCondition& condition,
                                               const Denoiser<float>& denoiser,
                                               const NoiseKernel& kernel, double beta,
                                               std::size_t steps, std::size_t n, std::uint64_t seed) {
  check_kinds(denoiser, kernel);
  check_condition(condition, denoiser, kernel);
  const auto dim = denoiser.dim();
  ChainState s = fresh_chains(kernel, dim, 0, n, beta, seed);
  for (std::size_t r = 0; r < n; ++r) {
    forward_noise_row<float>(kernel, condition.observed, beta, s.rngs[r],
                             std::span<float>(s.x.row(static_cast<Eigen::Index>(r)).data(), dim));
  }
  std::vector<Batch<float>> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    chain_step(s, denoiser, kernel, beta, &condition);
    states.push_back(s.x);
  }
  return states;
}

}  // namespace nkca
