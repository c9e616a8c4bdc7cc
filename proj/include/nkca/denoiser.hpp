#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nkca/array.hpp"
#include "nkca/kernel_categorical.hpp"
#include "nkca/kernel_continuous.hpp"
#include "nkca/schedule.hpp"

namespace nkca {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch of states, one example per row. Categorical states hold the integer
/// category values 1..K+1 stored exactly in T.
template <typename T>
using Batch = Matrix<T>;

/// Denoiser output for a batch. Continuous: `mean`, `variance` (B x D).
/// Categorical: `probs` (B x D*K), K probabilities per element.
template <typename T>
struct DenoiserOutput {
  KernelKind kind = KernelKind::continuous;
  Matrix<T> mean;
  Matrix<T> variance;
  Matrix<T> probs;

  GaussianParams<T> gaussian(Eigen::Index row) const;
  SimplexArray<T> simplex(Eigen::Index row, int categories) const;
};

/// Upstream gradient of a scalar objective with respect to a DenoiserOutput.
template <typename T>
struct OutputGradient {
  Matrix<T> d_mean;
  Matrix<T> d_variance;
  Matrix<T> d_probs;
};

/// The reconstruction distribution r(z | x, beta).
template <typename T>
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual KernelKind kind() const = 0;
  /// Number of data elements D.
  virtual std::size_t dim() const = 0;
  /// K for categorical denoisers, 0 otherwise.
  virtual int categories() const { return 0; }

  /// Deterministic in (x, beta, parameters). `beta` has one entry per row.
  virtual DenoiserOutput<T> evaluate(const Batch<T>& x, std::span<const T> beta) const = 0;

  virtual bool trainable() const { return false; }
  virtual const TensorMap<T>& parameters() const;
  virtual TensorMap<T>& mutable_parameters();
  /// Adds d(objective)/d(parameters) into `grads`, which must share the
  /// layout of parameters(). Single writer per `grads`.
  virtual void accumulate_gradient(const Batch<T>& x, std::span<const T> beta,
                                   const OutputGradient<T>& upstream,
                                   TensorMap<T>& grads) const;

  using UpstreamFn = std::function<OutputGradient<T>(const DenoiserOutput<T>&)>;
  /// Evaluates once, obtains the output gradient from `upstream`, and
  /// accumulates the parameter gradient. Returns the output.
  virtual DenoiserOutput<T> evaluate_and_accumulate(const Batch<T>& x, std::span<const T> beta,
                                                    const UpstreamFn& upstream,
                                                    TensorMap<T>& grads) const;
};

/// Features [sin(s beta w_k)..., cos(s beta w_k)...], k = 0..dim/2-1,
/// w_k = 10000^(-2k/dim), s = 1000.
std::vector<double> sinusoidal_embed(double beta, std::size_t dim);

template <typename T>
Matrix<T> sinusoidal_embed_batch(std::span<const T> beta, std::size_t dim);

/// Softmax probabilities are floored at this value and renormalized.
inline constexpr double kProbabilityFloor = 1e-8;

/// Serializable description of a learnable denoiser.
struct DenoiserSpec {
  std::string type = "mlp";  // mlp | tabular
  KernelKind kind = KernelKind::continuous;
  std::size_t dim = 0;
  int categories = 0;
  std::vector<std::size_t> hidden = {256, 256, 256};
  std::size_t embedding_dim = 64;
};

/// Freshly initialized parameters for `spec`.
template <typename T>
TensorMap<T> init_parameters(const DenoiserSpec& spec, Rng& rng);

template <typename T>
std::unique_ptr<Denoiser<T>> make_denoiser(const DenoiserSpec& spec, TensorMap<T> params);

/// Softmax over consecutive groups of `k` columns, floored and renormalized.
template <typename T>
Matrix<T> grouped_softmax(const Matrix<T>& logits, int k);

/// Backward pass of grouped_softmax: maps d/dprobs to d/dlogits.
template <typename T>
Matrix<T> grouped_softmax_backward(const Matrix<T>& softmax_raw, const Matrix<T>& d_probs, int k);

}  // namespace nkca
