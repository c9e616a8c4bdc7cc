#pragma once

#include "nkca/denoiser.hpp"

namespace nkca {

/// Multilayer perceptron denoiser.
///
/// Each hidden layer computes silu(W h + b + P e(beta)) where e is the
/// sinusoidal noise-level embedding and P a per-layer projection. The
/// continuous head emits a linear mean and variance exp(clamp(v, -10, 4));
/// the categorical head emits D x K logits followed by a floored softmax.
/// Categorical inputs are one-hot encoded over K + 1 symbols.
///
/// Parameter names: layer{i}.weight, layer{i}.bias, emb{i}.proj,
/// head.{mu,logvar,logits}.{weight,bias}.
template <typename T>
class MlpDenoiser final : public Denoiser<T> {
 public:
  static constexpr double kLogVarMin = -10.0;
  static constexpr double kLogVarMax = 4.0;

  MlpDenoiser(DenoiserSpec spec, TensorMap<T> params);

  KernelKind kind() const override { return spec_.kind; }
  std::size_t dim() const override { return spec_.dim; }
  int categories() const override { return spec_.categories; }
  const DenoiserSpec& spec() const noexcept { return spec_; }

  DenoiserOutput<T> evaluate(const Batch<T>& x, std::span<const T> beta) const override;

  bool trainable() const override { return true; }
  const TensorMap<T>& parameters() const override { return params_; }
  TensorMap<T>& mutable_parameters() override { return params_; }
  void accumulate_gradient(const Batch<T>& x, std::span<const T> beta,
                           const OutputGradient<T>& upstream,
                           TensorMap<T>& grads) const override;
  DenoiserOutput<T> evaluate_and_accumulate(const Batch<T>& x, std::span<const T> beta,
                                            const typename Denoiser<T>::UpstreamFn& upstream,
                                            TensorMap<T>& grads) const override;

  static TensorMap<T> init(const DenoiserSpec& spec, Rng& rng);

 private:
  struct Tape;
  DenoiserOutput<T> forward(const Batch<T>& x, std::span<const T> beta, Tape* tape) const;
  void backprop(const Tape& tape, const DenoiserOutput<T>& out, const OutputGradient<T>& upstream,
                TensorMap<T>& grads) const;
  Matrix<T> encode_input(const Batch<T>& x) const;
  std::size_t input_width() const;

  DenoiserSpec spec_;
  TensorMap<T> params_;
};

}  // namespace nkca
