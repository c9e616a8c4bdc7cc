#include "nkca/transition.hpp"

#include <cmath>

namespace nkca {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <typename T>
std::vector<Category> row_categories(const Batch<T>& x, Eigen::Index r) {
  std::vector<Category> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out[static_cast<std::size_t>(c)] = static_cast<Category>(std::lround(static_cast<double>(x(r, c))));
  }
  return out;
}

template <typename T>
std::span<const T> row_span(const Batch<T>& x, Eigen::Index r) {
  return {x.data() + r * x.cols(), static_cast<std::size_t>(x.cols())};
}

void require_rows(Eigen::Index rows, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(rows) != n) throw ShapeError(std::string(what) + ": one entry per row required");
}

}  // namespace

void NoiseKernel::validate() const {
  if (!(w > 0.0 && w < 1.0)) throw ConfigError("kernel weight w must lie in (0, 1)");
  if (kind == KernelKind::categorical && categories < 2) throw ConfigError("categorical kernels need K >= 2");
}

KernelCoeffs kernel_step(const NoiseKernel& kernel, double beta_t, double beta_next) {
  if (kernel.kind == KernelKind::continuous) {
    return annealed_coeffs(beta_t, beta_next, 1.0 - beta_t, 1.0 - beta_next, kernel.w);
  }
  return {0.0, annealed_b(beta_t, beta_next, kernel.w)};
}

KernelCoeffs kernel_equilibrium(const NoiseKernel& kernel, double beta) {
  if (kernel.kind == KernelKind::continuous) return equilibrium_coeffs(beta, 1.0 - beta, kernel.w);
  return {0.0, equilibrium_b(beta, kernel.w)};
}

template <typename T>
void forward_noise_row(const NoiseKernel& kernel, std::span<const T> z, double beta, Rng& rng,
                       std::span<T> out) {
  detail::require_same_size(z.size(), out.size(), "forward_noise_row");
  if (kernel.kind == KernelKind::continuous) {
    const auto x = forward_noise<T>(z, beta, 1.0 - beta, rng);
    std::copy(x.begin(), x.end(), out.begin());
  } else {
    std::vector<Category> zc(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) zc[i] = static_cast<Category>(std::lround(static_cast<double>(z[i])));
    const auto x = forward_noise_cat(zc, kernel.categories, beta, rng);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i]);
  }
}

template <typename T>
GaussianParams<T> row_transition_gaussian(const NoiseKernel& kernel, const Batch<T>& x,
                                          const DenoiserOutput<T>& out, Eigen::Index r,
                                          KernelCoeffs coeffs) {
  return transition_params<T>(row_span(x, r), out.gaussian(r), coeffs, kernel.w);
}

template <typename T>
SimplexArray<T> row_transition_simplex(const NoiseKernel& kernel, const Batch<T>& x,
                                       const DenoiserOutput<T>& out, Eigen::Index r,
                                       KernelCoeffs coeffs) {
  const auto xc = row_categories(x, r);
  return transition_probs_cat<T>(xc, out.simplex(r, kernel.categories), coeffs.b, kernel.w);
}

template <typename T>
Batch<T> sample_transition(const NoiseKernel& kernel, const Batch<T>& x,
                           const DenoiserOutput<T>& out, std::span<const KernelCoeffs> coeffs,
                           const RowRng& rng) {
  require_rows(x.rows(), coeffs.size(), "sample_transition coefficients");
  Batch<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto rc = coeffs[static_cast<std::size_t>(r)];
    if (kernel.kind == KernelKind::continuous) {
      const auto v = sample_gaussian(row_transition_gaussian(kernel, x, out, r, rc), rng(r));
      for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = v[static_cast<std::size_t>(c)];
    } else {
      const auto v = sample_cat(row_transition_simplex(kernel, x, out, r, rc), rng(r));
      for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = static_cast<T>(v[static_cast<std::size_t>(c)]);
    }
  }
  return y;
}

template <typename T>
double transition_logprob_batch(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                                const Batch<T>& from, const Batch<T>& to, std::span<const T> beta,
                                std::span<const KernelCoeffs> coeffs, TensorMap<T>* grads,
                                double scale) {
  if (from.rows() != to.rows() || from.cols() != to.cols()) throw ShapeError("transition_logprob_batch: shape mismatch");
  require_rows(from.rows(), beta.size(), "transition_logprob_batch levels");
  require_rows(from.rows(), coeffs.size(), "transition_logprob_batch coefficients");
  if (denoiser.kind() != kernel.kind) throw ConfigError("denoiser and kernel kinds differ");
  const double w = kernel.w;
  double total = 0.0;

  auto upstream = [&](const DenoiserOutput<T>& out) {
    OutputGradient<T> g;
    const Eigen::Index rows = from.rows();
    const Eigen::Index d = from.cols();
    if (kernel.kind == KernelKind::continuous) {
      g.d_mean.setZero(rows, d);
      g.d_variance.setZero(rows, d);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double a = coeffs[static_cast<std::size_t>(r)].a;
        const double b = coeffs[static_cast<std::size_t>(r)].b;
        for (Eigen::Index i = 0; i < d; ++i) {
          const double mean = w * from(r, i) + a * out.mean(r, i);
          const double var = b + a * a * out.variance(r, i);
          if (!(var > 0.0)) throw DomainError("transition variance must be positive");
          const double diff = static_cast<double>(to(r, i)) - mean;
          total += -0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
          g.d_mean(r, i) = static_cast<T>(scale * a * diff / var);
          g.d_variance(r, i) = static_cast<T>(scale * a * a * 0.5 * (diff * diff / (var * var) - 1.0 / var));
        }
      }
    } else {
      const int k = kernel.categories;
      g.d_probs.setZero(rows, d * k);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const double b = coeffs[static_cast<std::size_t>(r)].b;
        const double stay = (1.0 - b) * w;
        const double fresh = (1.0 - b) * (1.0 - w);
        for (Eigen::Index i = 0; i < d; ++i) {
          const auto xi = static_cast<Category>(std::lround(static_cast<double>(from(r, i))));
          const auto yi = static_cast<Category>(std::lround(static_cast<double>(to(r, i))));
          if (xi < 1 || xi > k + 1 || yi < 1 || yi > k + 1) throw DomainError("category outside 1..K+1");
          double q = 0.0;
          if (yi == xi) q += stay;
          if (yi == k + 1) {
            q += b;
          } else {
            q += fresh * out.probs(r, i * k + (yi - 1));
          }
          if (!(q > 0.0)) {
            throw ImpossibleTransition("row " + std::to_string(r) + " element " + std::to_string(i) + ": " +
                                       std::to_string(xi) + " -> " + std::to_string(yi) + " has zero probability");
          }
          total += std::log(q);
          if (yi != k + 1) g.d_probs(r, i * k + (yi - 1)) = static_cast<T>(scale * fresh / q);
        }
      }
    }
    return g;
  };

  if (grads) {
    denoiser.evaluate_and_accumulate(from, beta, upstream, *grads);
  } else {
    upstream(denoiser.evaluate(from, beta));
  }
  return total;
}

template <typename T>
double reconstruction_logprob_batch(const Denoiser<T>& denoiser, const NoiseKernel& kernel,
                                    const Batch<T>& clean, const Batch<T>& noisy,
                                    std::span<const T> beta, TensorMap<T>* grads, double scale) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
    throw ShapeError("reconstruction_logprob_batch: shape mismatch");
  }
  require_rows(noisy.rows(), beta.size(), "reconstruction_logprob_batch levels");
  if (denoiser.kind() != kernel.kind) throw ConfigError("denoiser and kernel kinds differ");
  double total = 0.0;
  auto upstream = [&](const DenoiserOutput<T>& out) {
    OutputGradient<T> g;
    const Eigen::Index rows = noisy.rows();
    const Eigen::Index d = noisy.cols();
    if (kernel.kind == KernelKind::continuous) {
      g.d_mean.setZero(rows, d);
      g.d_variance.setZero(rows, d);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index i = 0; i < d; ++i) {
          const double var = out.variance(r, i);
          const double diff = static_cast<double>(clean(r, i)) - out.mean(r, i);
          total += -0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
          g.d_mean(r, i) = static_cast<T>(scale * diff / var);
          g.d_variance(r, i) = static_cast<T>(scale * 0.5 * (diff * diff / (var * var) - 1.0 / var));
        }
      }
    } else {
      const int k = kernel.categories;
      g.d_probs.setZero(rows, d * k);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index i = 0; i < d; ++i) {
          const auto zi = static_cast<Category>(std::lround(static_cast<double>(clean(r, i))));
          if (zi < 1 || zi > k) throw DomainError("clean category outside 1..K");
          const double p = out.probs(r, i * k + (zi - 1));
          total += std::log(p);
          g.d_probs(r, i * k + (zi - 1)) = static_cast<T>(scale / p);
        }
      }
    }
    return g;
  };
  if (grads) {
    denoiser.evaluate_and_accumulate(noisy, beta, upstream, *grads);
  } else {
    upstream(denoiser.evaluate(noisy, beta));
  }
  return total;
}

template <typename T>
Batch<T> denoise_point(const NoiseKernel& kernel, const DenoiserOutput<T>& out) {
  if (kernel.kind == KernelKind::continuous) return out.mean;
  const int k = kernel.categories;
  const Eigen::Index d = out.probs.cols() / k;
  Batch<T> z(out.probs.rows(), d);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (out.probs(r, i * k + c) > out.probs(r, i * k + best)) best = c;
      }
      z(r, i) = static_cast<T>(best + 1);
    }
  }
  return z;
}

#define NKCA_INSTANTIATE(T)                                                                              \
  template void forward_noise_row<T>(const NoiseKernel&, std::span<const T>, double, Rng&, std::span<T>); \
  template GaussianParams<T> row_transition_gaussian<T>(const NoiseKernel&, const Batch<T>&,             \
                                                        const DenoiserOutput<T>&, Eigen::Index,          \
                                                        KernelCoeffs);                                   \
  template SimplexArray<T> row_transition_simplex<T>(const NoiseKernel&, const Batch<T>&,                \
                                                     const DenoiserOutput<T>&, Eigen::Index,             \
                                                     KernelCoeffs);                                      \
  template Batch<T> sample_transition<T>(const NoiseKernel&, const Batch<T>&, const DenoiserOutput<T>&,  \
                                         std::span<const KernelCoeffs>, const RowRng&);                  \
  template double transition_logprob_batch<T>(const Denoiser<T>&, const NoiseKernel&, const Batch<T>&,   \
                                              const Batch<T>&, std::span<const T>,                       \
                                              std::span<const KernelCoeffs>, TensorMap<T>*, double);     \
  template double reconstruction_logprob_batch<T>(const Denoiser<T>&, const NoiseKernel&,                \
                                                  const Batch<T>&, const Batch<T>&, std::span<const T>,  \
                                                  TensorMap<T>*, double);                                \
  template Batch<T> denoise_point<T>(const NoiseKernel&, const DenoiserOutput<T>&);

NKCA_INSTANTIATE(float)
NKCA_INSTANTIATE(double)

#undef NKCA_INSTANTIATE

}  // namespace nkca
