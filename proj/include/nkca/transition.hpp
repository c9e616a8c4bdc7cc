#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nkca/denoiser.hpp"

namespace nkca {

/// Kernel family and hyperparameters, independent of any schedule.
struct NoiseKernel {
  KernelKind kind = KernelKind::continuous;
  double w = 0.5;
  int categories = 0;  // K, categorical only

  void validate() const;
  Category absorbing() const noexcept { return categories + 1; }
};

/// Coefficients for a step from level beta_t to beta_next. Categorical
/// kernels use only `b`.
KernelCoeffs kernel_step(const NoiseKernel& kernel, double beta_t, double beta_next);
/// kernel_step(kernel, beta, beta).
KernelCoeffs kernel_equilibrium(const NoiseKernel& kernel, double beta);

/// Forward noise for one row: continuous x ~ N((1 - beta) z, beta I);
/// categorical elements absorbed with probability beta.
template <typename T>
void forward_noise_row(const NoiseKernel& kernel, std::span<const T> z, double beta, Rng& rng,
                       std::span<T> out);

/// Per-element transition distribution of row `r`.
template <typename T>
GaussianParams<T> row_transition_gaussian(const NoiseKernel& kernel, const Batch<T>& x,
                                          const DenoiserOutput<T>& out, Eigen::Index r,
                                          KernelCoeffs coeffs);
template <typename T>
SimplexArray<T> row_transition_simplex(const NoiseKernel& kernel, const Batch<T>& x,
                                       const DenoiserOutput<T>& out, Eigen::Index r,
                                       KernelCoeffs coeffs);

using RowRng = std::function<Rng&(Eigen::Index)>;

/// y ~ p(. | x) row by row, with `out` the denoiser output at x.
template <typename T>
Batch<T> sample_transition(const NoiseKernel& kernel, const Batch<T>& x,
                           const DenoiserOutput<T>& out, std::span<const KernelCoeffs> coeffs,
                           const RowRng& rng);

/// Sum over rows of log p(to | from), with the denoiser evaluated at `from`
/// and row noise levels `beta`. When `grads` is given, adds
/// scale * d(sum)/d(parameters) into it.
template <typename T>
double transition_logprob_batch(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                                const Batch<T>& from, const Batch<T>& to, std::span<const T> beta,
                                std::span<const KernelCoeffs> coeffs, TensorMap<T>* grads,
                                double scale = 1.0);

/// Sum over rows of log r(z | x); same gradient convention.
template <typename T>
double reconstruction_logprob_batch(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                                    const Batch<T>& clean, const Batch<T>& noisy,
                                    std::span<const T> beta, TensorMap<T>* grads,
                                    double scale = 1.0);

/// Row-wise point estimate of r(z | x): the mean (continuous) or the
/// per-element argmax category (categorical).
template <typename T>
Batch<T> denoise_point(const NoiseKernel& kernel, const DenoiserOutput<T>& out);

}  // namespace nkca
