#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nkca/exact_posterior.hpp"
#include "nkca/transition.hpp"

namespace nkca {

struct LinearGaussianMarginal {
  double mean = 0.0;
  double variance = 0.0;
};

/// Marginal of Y when X ~ N(mu, sigma2) and Y | X ~ N(a X + b, c2).
LinearGaussianMarginal marginal_of_linear_gaussian(double mu, double sigma2, double a, double b, double c2);

inline constexpr std::uint64_t kMaxDenseStates = 10'000;

/// Dense transition matrix over all (K + 1)^D noisy states, indexed by
/// noisy_state_index.
struct TransitionMatrix {
  std::size_t dim = 0;
  int categories = 0;
  Eigen::MatrixXd P;

  std::size_t states() const noexcept { return static_cast<std::size_t>(P.rows()); }
};

/// P[x][y] = prod_i p(y_i | x) with each factor built from the denoiser's
/// per-element output (the model transition).
TransitionMatrix build_transition_matrix(const NoiseKernel& kernel, const Denoiser<double>& denoiser,
                                         double beta_t, double beta_next);
TransitionMatrix build_transition_matrix(const NoiseKernel& kernel, const Denoiser<double>& denoiser,
                                         double beta);

/// P[x][y] = sum_z p(z | x) prod_i p(y_i | z_i, x_i) with the joint
/// posterior of `model`: the exact noise kernel of a known distribution.
/// `b_override` replaces the scheduled mixing weight b (negative controls).
TransitionMatrix build_exact_transition_matrix(const NoiseKernel& kernel, const CategoricalDataModel& model,
                                               double beta_t, double beta_next,
                                               std::optional<double> b_override = std::nullopt);

/// Power iteration from the uniform vector until the L1 change falls below
/// `tol`. Throws ConvergenceError with the last change otherwise.
std::vector<double> stationary_distribution(const Eigen::MatrixXd& P, double tol = 1e-12,
                                            std::size_t max_iter = 1'000'000);

/// max over (x, y) of |pi_x P_xy - pi_y P_yx|.
double detailed_balance_residual(std::span<const double> pi, const Eigen::MatrixXd& P);

/// ||pi P - pi||_1.
double stationarity_residual(std::span<const double> pi, const Eigen::MatrixXd& P);

/// Half the L1 distance.
double tv_distance(std::span<const double> a, std::span<const double> b);

/// Per-element flows of the categorical kernel at constant beta:
/// p(x = z) p(y = K+1 | z, x) and p(x = K+1) p(y = z | z, x).
struct CategoricalFlows {
  double into_absorbing = 0.0;
  double out_of_absorbing = 0.0;
};
CategoricalFlows categorical_element_flows(double beta, double w, int categories = 2);

/// Closed form beta (1 - w)(1 - beta) / (1 - w beta).
double categorical_flow_closed_form(double beta, double w);

struct GridSpec {
  std::size_t points = 50;
  /// Defaults to six noisy standard deviations beyond the outermost means.
  std::optional<double> lo;
  std::optional<double> hi;
};

struct ContinuousDbReport {
  double residual = 0.0;
  double density_mass = 0.0;     // quadrature of p(x)
  double transition_mass = 0.0;  // p(x)-weighted mean |1 - quadrature of p(y | x)|
  std::size_t points = 0;
};

/// Detailed-balance asymmetry of the continuous kernel with the exact
/// mixture posterior of `model` at constant beta: max over grid pairs of
/// |p(x) p(y|x) - p(y) p(x|y)| divided by the largest p(x) p(y|x). The model
/// must be 1- or 2-dimensional; the grid spans each axis. Throws DomainError
/// when the quadrature self-check shows the grid is too coarse or narrow.
ContinuousDbReport continuous_db_residual(const GaussianMixture& model, double w, double beta,
                                          const GridSpec& grid = {},
                                          std::optional<KernelCoeffs> coeffs = std::nullopt);

/// Analytic p(y | x) of the continuous kernel with the exact mixture
/// posterior.
double exact_continuous_transition_density(const GaussianMixture& model, std::span<const double> x,
                                           std::span<const double> y, double beta, double w,
                                           KernelCoeffs coeffs);

struct MarginalCheck {
  double beta_t = 0.0;
  double beta_next = 0.0;
  /// Largest standardized deviation among the tests of this pair.
  double statistic = 0.0;
  double threshold = 3.0;
  bool pass = false;
};

/// Samples y given z through one annealed step and compares the noise of y
/// against level beta_next. Categorical: absorbed fraction vs beta_next.
/// Continuous: mean and variance of (y - alpha_next z) / sqrt(beta_next).
MarginalCheck check_marginal_condition(const NoiseKernel& kernel, const CategoricalDataModel& model,
                                       double beta_t, double beta_next, std::size_t n_samples, Rng& rng);
MarginalCheck check_marginal_condition(const NoiseKernel& kernel, const GaussianMixture& model,
                                       double beta_t, double beta_next, std::size_t n_samples, Rng& rng);

enum class EnergyEstimator { u_statistic, v_statistic };

/// 2 E|A - B| - E|A - A'| - E|B - B'| with Euclidean norms; rows are points.
double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       EnergyEstimator estimator = EnergyEstimator::u_statistic);

}  // namespace nkca
