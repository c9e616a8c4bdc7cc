#include <doctest.h>

#include "nkca/oracle.hpp"
#include "nkca/tabular_denoiser.hpp"
#include "nkca/validation.hpp"

using namespace nkca;

TEST_SUITE("oracle") {
  TEST_CASE("linear-Gaussian marginal against Monte Carlo") {
    const auto m = marginal_of_linear_gaussian(1.0, 0.25, 0.5, -1.0, 0.1);
    CHECK(m.mean == doctest::Approx(-0.5));
    CHECK(m.variance == doctest::Approx(0.1625));
    Rng rng(3);
    const int n = 1'000'000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = 1.0 + 0.5 * rng.normal();
      const double y = 0.5 * x - 1.0 + std::sqrt(0.1) * rng.normal();
      s += y;
      s2 += y * y;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean + 0.5) < 0.005);
    CHECK(std::abs(var / 0.1625 - 1.0) < 0.01);
  }

  TEST_CASE("stationary distribution by power iteration") {
    Eigen::MatrixXd P(3, 3);
    P << 0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.25, 0.25, 0.5;
    const auto pi = stationary_distribution(P);
    const double expected[] = {0.21739130434782633, 0.5797101449275359, 0.20289855072463772};
    for (int i = 0; i < 3; ++i) CHECK(pi[i] == doctest::Approx(expected[i]).epsilon(1e-10));
    CHECK(stationarity_residual(pi, P) < 1e-12);
  }

  TEST_CASE("periodic chains do not converge") {
    Eigen::MatrixXd P(3, 3);
    P << 0, 1, 0, 0.5, 0, 0.5, 0, 1, 0;
    CHECK_THROWS_AS(stationary_distribution(P, 1e-12, 1000), ConvergenceError);
    CHECK(detailed_balance_residual(std::vector<double>{0.25, 0.5, 0.25}, P) == doctest::Approx(0.0));
    CHECK(tv_distance(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == doctest::Approx(1.0));
  }

  TEST_CASE("model transition matrix rows match the kernel") {
    auto params = TabularDenoiser<double>::init(1, 2);
    params["table.logits"].storage() = {0.3, -0.2, 1.0, 0.5, -1.0, 0.0};
    TabularDenoiser<double> d(1, 2, params);
    const NoiseKernel kernel{KernelKind::categorical, 0.9, 2};
    const auto T = build_transition_matrix(kernel, d, 0.5);
    REQUIRE(T.states() == 3);
    const double b = equilibrium_b(0.5, 0.9);
    for (Category x = 1; x <= 3; ++x) {
      Batch<double> xb(1, 1);
      xb << x;
      const auto out = d.evaluate(xb, std::vector<double>{0.5});
      const auto row = transition_probs_cat<double>(std::vector<Category>{x}, out.simplex(0, 2), b, 0.9);
      for (int y = 0; y < 3; ++y) CHECK(T.P(x - 1, y) == doctest::Approx(row.at(0, y)).epsilon(1e-14));
    }
  }

  TEST_CASE("exact categorical kernel is stationary and reversible") {
    const CategoricalDataModel m(2, 2, {0.1, 0.2, 0.3, 0.4});
    const NoiseKernel kernel{KernelKind::categorical, 0.95, 2};
    const auto T = build_exact_transition_matrix(kernel, m, 0.5, 0.5);
    const auto pi = stationary_distribution(T.P);
    CHECK(tv_distance(pi, m.noisy_marginal(0.5)) < 1e-8);
    CHECK(detailed_balance_residual(pi, T.P) < 1e-10);
    const auto broken = build_exact_transition_matrix(kernel, m, 0.5, 0.5, equilibrium_b(0.5, 0.5));
    const auto pb = stationary_distribution(broken.P);
    CHECK(tv_distance(pb, m.noisy_marginal(0.5)) > 1e-3);
  }

  TEST_CASE("continuous detailed balance on one and two components") {
    const GaussianMixture one({1.0}, {{0.3}}, {{0.2}});
    const GaussianMixture two({0.5, 0.5}, {{-1.0}, {1.0}}, {{0.1}, {0.1}});
    for (const auto* m : {&one, &two}) {
      const auto r = continuous_db_residual(*m, 0.5, 0.2);
      CHECK(r.residual <= 1e-6);
      CHECK(std::abs(r.density_mass - 1.0) < 1e-3);
      auto c = equilibrium_coeffs(0.2, 0.8, 0.5);
      c.a *= 1.05;
      CHECK(continuous_db_residual(*m, 0.5, 0.2, {}, c).residual > 1e-3);
    }
  }

  TEST_CASE("exact continuous transition density") {
    const GaussianMixture two({0.5, 0.5}, {{-1.0}, {1.0}}, {{0.1}, {0.1}});
    const std::vector<double> x{0.2}, y{-0.3};
    const double p = exact_continuous_transition_density(two, x, y, 0.2, 0.5, equilibrium_coeffs(0.2, 0.8, 0.5));
    CHECK(p == doctest::Approx(0.36657298054101817).epsilon(1e-10));
  }

  TEST_CASE("marginal condition on a first annealing step") {
    Rng rng(8);
    const NoiseKernel cont{KernelKind::continuous, 0.5, 0};
    const GaussianMixture g({0.5, 0.5}, {{-0.5}, {0.5}}, {{0.04}, {0.04}});
    CHECK(check_marginal_condition(cont, g, 1.0, 0.99, 100'000, rng).pass);
    const NoiseKernel cat{KernelKind::categorical, 0.95, 2};
    const CategoricalDataModel m(2, 2, {0.1, 0.2, 0.3, 0.4});
    CHECK(check_marginal_condition(cat, m, 1.0, 0.99, 100'000, rng).pass);
  }

  TEST_CASE("energy distance") {
    Eigen::MatrixXd a(3, 2), b(2, 2);
    a << 0, 0, 1, 0, 0, 2;
    b << 1, 1, 2, -1;
    CHECK(energy_distance(a, b, EnergyEstimator::u_statistic) == doctest::Approx(-0.28667065663869873).epsilon(1e-12));
    CHECK(energy_distance(a, b, EnergyEstimator::v_statistic) == doctest::Approx(1.413148662944506).epsilon(1e-12));

    Rng rng(10);
    Eigen::MatrixXd p(1000, 1), q(1000, 1);
    for (int i = 0; i < 1000; ++i) {
      p(i, 0) = rng.normal();
      q(i, 0) = 5.0 + rng.normal();
    }
    CHECK(energy_distance(p, q) > 1.0);
  }

  TEST_CASE("validation suites report structured results") {
    const auto results = run_validation_suite("stationarity", 20251015);
    REQUIRE(!results.empty());
    for (const auto& r : results) {
      INFO(r.check);
      CHECK(r.pass);
      CHECK(r.to_json().contains("threshold"));
    }
    CHECK_THROWS_AS(run_validation_suite("nope", 1), ConfigError);
  }
}
