#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nkca/transition.hpp"

namespace nkca {

/// A batch of independent chains, one per row, each with its own stream.
struct ChainState {
  KernelKind kind = KernelKind::continuous;
  Batch<float> x;
  std::size_t t = 0;
  double beta = 1.0;
  std::vector<Rng> rngs;

  Eigen::Index chains() const noexcept { return x.rows(); }
};

/// Known elements for inpainting: mask 1 marks elements to generate, 0
/// marks elements pinned to `observed`.
struct InpaintCondition {
  std::vector<float> observed;
  std::vector<std::uint8_t> mask;
};

/// One transition from state.beta to beta_next. Coefficients are validated
/// before any randomness is drawn.
void chain_step(ChainState& state, const Denoiser<float>& denoiser, const NoiseKernel& kernel,
                double beta_next, const InpaintCondition* condition = nullptr);

/// Per-step observer: first chain index of the block, step t, level, noisy
/// states and their denoised point estimates.
using TraceFn = std::function<void(std::size_t first_chain, std::size_t t, double beta,
                                   const Batch<float>& x, const Batch<float>& denoised)>;

/// Stream seed of chain or candidate `index` under `seed`.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index);

/// Annealed synthesis along `schedule` for n chains. Continuous chains start
/// at N(0, I), categorical chains fully absorbed; the output is the mean
/// (continuous) or argmax (categorical) of r(z | x_T). Chain i draws from
/// sub_seed(seed, i), so results do not depend on batching.
Batch<float> synthesize(const Denoiser<float>& denoiser, const NoiseKernel& kernel,
                        const NoiseSchedule& schedule, std::size_t n, std::uint64_t seed,
                        const TraceFn& trace = {});

/// Candidates seeded by explicit sub-seeds: each forward-noises z0 at level
/// beta, runs `steps` equilibrium transitions and is denoised.
Batch<float> variants_from_sub_seeds(std::span<const float> z0, double beta, std::size_t steps,
                                     std::span<const std::uint64_t> sub_seeds,
                                     const Denoiser<float>& denoiser, const NoiseKernel& kernel);

/// n candidates with sub-seeds sub_seed(seed, 0..n-1).
Batch<float> variants(std::span<const float> z0, double beta, std::size_t steps, std::size_t n,
                      const Denoiser<float>& denoiser, const NoiseKernel& kernel, std::uint64_t seed);

/// Annealed inpainting of one example. Masked elements are initialized as in
/// synthesis and the observed ones by forward noise at the first level.
/// Returns the denoised estimate on masked elements and `observed` exactly
/// elsewhere. An all-zero mask returns `observed` without running a chain.
std::vector<float> inpaint(const InpaintCondition& condition, const Denoiser<float>& denoiser,
                           const NoiseKernel& kernel, const NoiseSchedule& schedule, std::uint64_t seed);

/// Constant-level inpainting chains for diagnostics: n chains start from
/// forward noise of `observed` at level beta; returns the states after
/// each of `steps` transitions.
std::vector<Batch<float>> constant_level_trace(const InpaintCondition& condition,
                                               const Denoiser<float>& denoiser,
                                               const NoiseKernel& kernel, double beta,
                                               std::size_t steps, std::size_t n, std::uint64_t seed);

}  // namespace nkca
