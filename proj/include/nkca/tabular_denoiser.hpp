#pragma once

#include <cstdint>

#include "nkca/denoiser.hpp"

namespace nkca {

/// Largest enumerable state space a table may cover.
inline constexpr std::uint64_t kMaxTabularStates = 1'000'000;

/// Number of noisy states (K + 1)^D; throws CapacityError above `limit`.
std::uint64_t noisy_state_count(std::size_t dim, int categories, std::uint64_t limit);

/// Lexicographic index of a noisy state (element 0 most significant).
std::uint64_t noisy_state_index(std::span<const Category> x, int categories);
std::vector<Category> noisy_state_from_index(std::uint64_t index, std::size_t dim,
                                             int categories);

/// Categorical denoiser with one free logit row per (noisy state, element).
/// Ignores the noise level. Parameter: "table.logits" of shape
/// [(K+1)^D, D, K].
template <typename T>
class TabularDenoiser final : public Denoiser<T> {
 public:
  TabularDenoiser(std::size_t dim, int categories, TensorMap<T> params);

  KernelKind kind() const override { return KernelKind::categorical; }
  std::size_t dim() const override { return dim_; }
  int categories() const override { return categories_; }
  std::uint64_t state_count() const noexcept { return states_; }

  DenoiserOutput<T> evaluate(const Batch<T>& x, std::span<const T> beta) const override;

  bool trainable() const override { return true; }
  const TensorMap<T>& parameters() const override { return params_; }
  TensorMap<T>& mutable_parameters() override { return params_; }
  void accumulate_gradient(const Batch<T>& x, std::span<const T> beta,
                           const OutputGradient<T>& upstream,
                           TensorMap<T>& grads) const override;

  /// All-zero logits: every row uniform over K.
  static TensorMap<T> init(std::size_t dim, int categories);

 private:
  std::uint64_t row_index(const Batch<T>& x, Eigen::Index r) const;

  std::size_t dim_;
  int categories_;
  std::uint64_t states_;
  TensorMap<T> params_;
};

}  // namespace nkca
