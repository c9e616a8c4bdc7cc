#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nkca {

/// One verification outcome. `pass` compares `statistic` with `threshold`
/// in the direction the check documents (most require statistic <=
/// threshold; negative controls require statistic > threshold).
struct CheckResult {
  std::string check;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;

  nlohmann::json to_json() const;
};

/// Linear-Gaussian marginal vs Monte Carlo (10^6 draws) for 20 random
/// parameter tuples: worst mean error and worst relative variance error.
std::vector<CheckResult> check_linear_gaussian_marginal(std::uint64_t seed, std::size_t draws = 1'000'000);

/// Constant-noise detailed balance of the continuous kernel on 1- and
/// 2-component mixtures at beta in {0.1, 0.2, 0.5}, w = 0.5, plus the
/// perturbed-coefficient negative control.
std::vector<CheckResult> check_continuous_detailed_balance();

/// Categorical per-element flow identity on beta in {0.1..0.9} x w in
/// {0.5, 0.95}.
std::vector<CheckResult> check_categorical_flow_identity();

/// Marginal condition for every consecutive pair of the default linear
/// schedules (continuous 1.0 -> 0.01 over 100 steps with w = 0.5;
/// categorical 1.0 -> 0.5 over 500 steps with w = 0.95).
std::vector<CheckResult> check_marginal_conditions(std::uint64_t seed, std::size_t samples = 100'000);

/// Exact categorical kernel (D = 2, K = 3, random p(z), beta = 0.5,
/// w = 0.95): stationary distribution vs noisy marginal, detailed balance,
/// and a mismatched-weight negative control.
std::vector<CheckResult> check_exact_stationarity(std::uint64_t seed);

/// Analytic contrastive gradients vs central finite differences on 10
/// random parameters of small 64-bit MLPs, for both kernel kinds.
std::vector<CheckResult> check_contrastive_gradients(std::uint64_t seed);

/// Monte Carlo mean of grad log p(y | x) over model-sampled pairs on the
/// tabular toy, in standard errors, worst over parameters.
std::vector<CheckResult> check_score_identity(std::uint64_t seed, std::size_t pairs = 10'000);

/// Suites: props, marginal, stationarity, gradients, all.
std::vector<CheckResult> run_validation_suite(const std::string& suite, std::uint64_t seed);

std::vector<std::string> validation_suites();

}  // namespace nkca
