#pragma once

#include <optional>
#include <vector>

#include "nkca/denoiser.hpp"

namespace nkca {

/// Enumerable distribution over clean categorical states {1..K}^D, stored
/// as a table indexed lexicographically (element 0 most significant).
struct CategoricalDataModel {
  std::size_t dim = 0;
  int categories = 0;
  std::vector<double> probs;

  CategoricalDataModel(std::size_t dim, int categories, std::vector<double> probs);

  /// Product of per-element marginals; `marginals[i]` has K entries.
  static CategoricalDataModel independent(const std::vector<std::vector<double>>& marginals);
  /// Random table with strictly positive entries.
  static CategoricalDataModel random(std::size_t dim, int categories, Rng& rng);

  std::size_t clean_state_count() const noexcept { return probs.size(); }
  std::vector<Category> clean_state(std::size_t index) const;
  std::size_t clean_index(std::span<const Category> z) const;

  /// Posterior over clean states given a noisy state under absorbing noise
  /// at level beta. States with zero evidence fall back to the uniform
  /// distribution over clean states consistent with the unmasked elements.
  std::vector<double> joint_posterior(std::span<const Category> x, double beta) const;

  /// p(x) = sum_z p(z) prod_i p(x_i | z_i) over all (K+1)^D noisy states.
  std::vector<double> noisy_marginal(double beta) const;

  std::vector<Category> sample(Rng& rng) const;
};

/// Finite mixture of diagonal Gaussians.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;      // [component][dim]
  std::vector<std::vector<double>> variances;  // [component][dim]

  GaussianMixture(std::vector<double> weights, std::vector<std::vector<double>> means,
                  std::vector<std::vector<double>> variances);

  std::size_t dim() const { return means.front().size(); }
  std::size_t components() const { return weights.size(); }

  /// Noisy marginal density p(x) under x ~ N(alpha z, beta I).
  double noisy_density(std::span<const double> x, double beta, double alpha) const;

  struct Posterior {
    std::vector<double> responsibilities;        // [component]
    std::vector<std::vector<double>> means;      // [component][dim]
    std::vector<std::vector<double>> variances;  // [component][dim]
  };
  /// Exact posterior p(z | x): a mixture of conjugate component posteriors.
  Posterior posterior(std::span<const double> x, double beta, double alpha) const;

  /// Mean and full mixture variance (including between-component spread)
  /// of p(z | x), per dimension.
  GaussianParams<double> posterior_moments(std::span<const double> x, double beta,
                                           double alpha) const;

  std::vector<double> sample(Rng& rng) const;
};

/// Denoiser that returns the true posterior of a known data model. The
/// continuous variant uses alpha = 1 - beta.
template <typename T>
class ExactPosteriorDenoiser final : public Denoiser<T> {
 public:
  explicit ExactPosteriorDenoiser(CategoricalDataModel model);
  explicit ExactPosteriorDenoiser(GaussianMixture model);

  KernelKind kind() const override { return kind_; }
  std::size_t dim() const override;
  int categories() const override;

  /// Categorical: per-element marginals of p(z | x) (observed elements are
  /// point masses). Continuous: moment-matched diagonal Gaussian.
  DenoiserOutput<T> evaluate(const Batch<T>& x, std::span<const T> beta) const override;

  const CategoricalDataModel& categorical_model() const;
  const GaussianMixture& gaussian_model() const;

 private:
  KernelKind kind_;
  std::optional<CategoricalDataModel> categorical_;
  std::optional<GaussianMixture> gaussian_;
};

}  // namespace nkca
