#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "nkca/error.hpp"
#include "nkca/rng.hpp"
#include "nkca/schedule.hpp"

namespace nkca {

/// Transition coefficients for one chain step: y ~ N(w x + a z, b I).
struct KernelCoeffs {
  double a = 0.0;
  double b = 0.0;
};

struct ContinuousKernelConfig {
  ContinuousKernelConfig(double w, NoiseSchedule schedule);

  double w;
  NoiseSchedule schedule;
};

/// Diagonal Gaussian. Variances must be non-negative; densities additionally
/// require them to be strictly positive.
template <typename T>
struct GaussianParams {
  std::vector<T> mean;
  std::vector<T> variance;

  std::size_t size() const noexcept { return mean.size(); }

  void check() const {
    if (mean.size() != variance.size()) {
      throw ShapeError("gaussian mean/variance size mismatch");
    }
    for (const T& v : variance) {
      if (!(v >= T(0))) throw DomainError("gaussian variance must be non-negative");
    }
  }
};

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": size mismatch (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
  }
}
}  // namespace detail

/// x ~ N(alpha z, beta I).
template <typename T>
std::vector<T> forward_noise(std::span<const T> z, double beta, double alpha,
                             Rng& rng) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw DomainError("forward_noise: beta must lie in (0, 1]");
  }
  const double sd = std::sqrt(beta);
  std::vector<T> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    x[i] = static_cast<T>(alpha * static_cast<double>(z[i]) + sd * rng.normal());
  }
  return x;
}

/// a = alpha_next - w alpha_t, b = beta_next - w^2 beta_t.
/// Throws ScheduleError unless beta_next > w^2 beta_t.
KernelCoeffs annealed_coeffs(double beta_t, double beta_next, double alpha_t,
                             double alpha_next, double w);

/// Constant-noise coefficients a = (1 - w) alpha, b = (1 - w^2) beta.
KernelCoeffs equilibrium_coeffs(double beta, double alpha, double w);

/// Coefficients for step t -> t + 1 of a continuous schedule.
KernelCoeffs step_coeffs(const ContinuousKernelConfig& config, std::size_t t);

/// p(y | z, x) = N(w x + a z, b I).
template <typename T>
GaussianParams<T> conditional_transition_params(std::span<const T> z,
                                                std::span<const T> x,
                                                KernelCoeffs coeffs, double w) {
  detail::require_same_size(z.size(), x.size(), "conditional_transition_params");
  GaussianParams<T> out;
  out.mean.resize(x.size());
  out.variance.assign(x.size(), static_cast<T>(coeffs.b));
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.mean[i] = static_cast<T>(w * x[i] + coeffs.a * z[i]);
  }
  return out;
}

/// Marginalizes the denoiser r(z | x) = N(mu, sigma^2) out of p(y | z, x):
/// mean w x + a mu, variance b + a^2 sigma^2.
template <typename T>
GaussianParams<T> transition_params(std::span<const T> x,
                                    const GaussianParams<T>& denoised,
                                    KernelCoeffs coeffs, double w) {
  denoised.check();
  detail::require_same_size(x.size(), denoised.size(), "transition_params");
  GaussianParams<T> out;
  out.mean.resize(x.size());
  out.variance.resize(x.size());
  const double a2 = coeffs.a * coeffs.a;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.mean[i] = static_cast<T>(w * x[i] + coeffs.a * denoised.mean[i]);
    out.variance[i] = static_cast<T>(coeffs.b + a2 * denoised.variance[i]);
  }
  return out;
}

/// Sum over dimensions of the diagonal Gaussian log density.
template <typename T>
double transition_logprob(std::span<const T> target, const GaussianParams<T>& params) {
  detail::require_same_size(target.size(), params.size(), "transition_logprob");
  constexpr double log_2pi = 1.8378770664093454835606594728112;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double var = params.variance[i];
    if (!(var > 0.0)) throw DomainError("transition_logprob: variance must be positive");
    const double d = static_cast<double>(target[i]) - params.mean[i];
    total += -0.5 * (log_2pi + std::log(var) + d * d / var);
  }
  return total;
}

/// Transition with the denoiser replaced by a point mass at `observed`
/// wherever mask == 0. Unmasked dimensions get variance exactly b.
template <typename T>
GaussianParams<T> inpaint_transition_params(std::span<const T> x,
                                            const GaussianParams<T>& denoised,
                                            std::span<const T> observed,
                                            std::span<const T> mask,
                                            KernelCoeffs coeffs, double w) {
  denoised.check();
  detail::require_same_size(x.size(), denoised.size(), "inpaint_transition_params");
  detail::require_same_size(x.size(), observed.size(), "inpaint_transition_params");
  detail::require_same_size(x.size(), mask.size(), "inpaint_transition_params mask");
  GaussianParams<T> out;
  out.mean.resize(x.size());
  out.variance.resize(x.size());
  const double a2 = coeffs.a * coeffs.a;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] == T(1)) {
      out.mean[i] = static_cast<T>(w * x[i] + coeffs.a * denoised.mean[i]);
      out.variance[i] = static_cast<T>(coeffs.b + a2 * denoised.variance[i]);
    } else if (mask[i] == T(0)) {
      out.mean[i] = static_cast<T>(w * x[i] + coeffs.a * observed[i]);
      out.variance[i] = static_cast<T>(coeffs.b);
    } else {
      throw DomainError("inpaint mask entries must be 0 or 1");
    }
  }
  return out;
}

template <typename T>
std::vector<T> sample_gaussian(const GaussianParams<T>& params, Rng& rng) {
  params.check();
  std::vector<T> y(params.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<T>(params.mean[i] +
                          std::sqrt(static_cast<double>(params.variance[i])) * rng.normal());
  }
  return y;
}

}  // namespace nkca
