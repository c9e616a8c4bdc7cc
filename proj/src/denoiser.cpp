#include "nkca/denoiser.hpp"

#include <cmath>

#include "nkca/mlp_denoiser.hpp"
#include "nkca/tabular_denoiser.hpp"

namespace nkca {

template <typename T>
GaussianParams<T> DenoiserOutput<T>::gaussian(Eigen::Index row) const {
  GaussianParams<T> g;
  g.mean.assign(mean.row(row).data(), mean.row(row).data() + mean.cols());
  g.variance.assign(variance.row(row).data(), variance.row(row).data() + variance.cols());
  return g;
}

template <typename T>
SimplexArray<T> DenoiserOutput<T>::simplex(Eigen::Index row, int categories) const {
  const auto k = static_cast<std::size_t>(categories);
  const auto cols = static_cast<std::size_t>(probs.cols());
  std::vector<T> values(probs.row(row).data(), probs.row(row).data() + cols);
  return SimplexArray<T>(cols / k, k, std::move(values));
}

template <typename T>
const TensorMap<T>& Denoiser<T>::parameters() const {
  static const TensorMap<T> empty;
  return empty;
}

template <typename T>
TensorMap<T>& Denoiser<T>::mutable_parameters() {
  throw Error("denoiser has no learnable parameters");
}

template <typename T>
void Denoiser<T>::accumulate_gradient(const Batch<T>&, std::span<const T>,
                                      const OutputGradient<T>&, TensorMap<T>&) const {
  throw Error("denoiser has no learnable parameters");
}

template <typename T>
DenoiserOutput<T> Denoiser<T>::evaluate_and_accumulate(const Batch<T>& x, std::span<const T> beta,
                                                       const UpstreamFn& upstream,
                                                       TensorMap<T>& grads) const {
  DenoiserOutput<T> out = evaluate(x, beta);
  accumulate_gradient(x, beta, upstream(out), grads);
  return out;
}

std::vector<double> sinusoidal_embed(double beta, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("embedding dimension must be even and positive");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("embedding level must lie in [0, 1]");
  constexpr double scale = 1000.0;
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    const double arg = scale * beta * freq;
    out[k] = std::sin(arg);
    out[half + k] = std::cos(arg);
  }
  return out;
}

template <typename T>
Matrix<T> sinusoidal_embed_batch(std::span<const T> beta, std::size_t dim) {
  Matrix<T> out(static_cast<Eigen::Index>(beta.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < beta.size(); ++r) {
    const auto e = sinusoidal_embed(static_cast<double>(beta[r]), dim);
    for (std::size_t c = 0; c < dim; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<T>(e[c]);
    }
  }
  return out;
}

template <typename T>
Matrix<T> grouped_softmax(const Matrix<T>& logits, int k) {
  if (k <= 0 || logits.cols() % k != 0) throw ShapeError("softmax group width mismatch");
  Matrix<T> out(logits.rows(), logits.cols());
  const T floor = static_cast<T>(kProbabilityFloor);
  const T norm = T(1) + static_cast<T>(k) * floor;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index g = 0; g < logits.cols(); g += k) {
      T mx = logits(r, g);
      for (int c = 1; c < k; ++c) mx = std::max(mx, logits(r, g + c));
      T sum = 0;
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(logits(r, g + c) - mx);
        out(r, g + c) = e;
        sum += e;
      }
      for (int c = 0; c < k; ++c) out(r, g + c) = (out(r, g + c) / sum + floor) / norm;
    }
  }
  return out;
}

template <typename T>
Matrix<T> grouped_softmax_backward(const Matrix<T>& probs, const Matrix<T>& d_probs, int k) {
  if (d_probs.rows() != probs.rows() || d_probs.cols() != probs.cols()) {
    throw ShapeError("softmax backward: gradient shape mismatch");
  }
  const T floor = static_cast<T>(kProbabilityFloor);
  const T norm = T(1) + static_cast<T>(k) * floor;
  Matrix<T> out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index g = 0; g < probs.cols(); g += k) {
      // probs = (s + floor) / norm, so ds = dprobs / norm.
      T dot = 0;
      for (int c = 0; c < k; ++c) {
        const T s = probs(r, g + c) * norm - floor;
        dot += s * d_probs(r, g + c) / norm;
      }
      for (int c = 0; c < k; ++c) {
        const T s = probs(r, g + c) * norm - floor;
        out(r, g + c) = s * (d_probs(r, g + c) / norm - dot);
      }
    }
  }
  return out;
}

template <typename T>
TensorMap<T> init_parameters(const DenoiserSpec& spec, Rng& rng) {
  if (spec.type == "mlp") return MlpDenoiser<T>::init(spec, rng);
  if (spec.type == "tabular") {
    if (spec.kind != KernelKind::categorical) {
      throw ConfigError("tabular denoiser supports categorical kernels only");
    }
    return TabularDenoiser<T>::init(spec.dim, spec.categories);
  }
  throw ConfigError("unknown denoiser type '" + spec.type + "'");
}

template <typename T>
std::unique_ptr<Denoiser<T>> make_denoiser(const DenoiserSpec& spec, TensorMap<T> params) {
  if (spec.type == "mlp") return std::make_unique<MlpDenoiser<T>>(spec, std::move(params));
  if (spec.type == "tabular") {
    if (spec.kind != KernelKind::categorical) {
      throw ConfigError("tabular denoiser supports categorical kernels only");
    }
    return std::make_unique<TabularDenoiser<T>>(spec.dim, spec.categories, std::move(params));
  }
  throw ConfigError("unknown denoiser type '" + spec.type + "'");
}

#define NKCA_INSTANTIATE(T)                                                            \
  template struct DenoiserOutput<T>;                                                   \
  template class Denoiser<T>;                                                          \
  template Matrix<T> sinusoidal_embed_batch<T>(std::span<const T>, std::size_t);       \
  template Matrix<T> grouped_softmax<T>(const Matrix<T>&, int);                        \
  template Matrix<T> grouped_softmax_backward<T>(const Matrix<T>&, const Matrix<T>&, int); \
  template TensorMap<T> init_parameters<T>(const DenoiserSpec&, Rng&);                 \
  template std::unique_ptr<Denoiser<T>> make_denoiser<T>(const DenoiserSpec&, TensorMap<T>);

NKCA_INSTANTIATE(float)
NKCA_INSTANTIATE(double)

#undef NKCA_INSTANTIATE

}  // namespace nkca
