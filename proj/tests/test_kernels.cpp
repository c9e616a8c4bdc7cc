#include <doctest.h>

#include <cmath>
#include <map>

#include "nkca/kernel_categorical.hpp"
#include "nkca/kernel_continuous.hpp"
#include "nkca/oracle.hpp"
#include "nkca/tabular_denoiser.hpp"

using namespace nkca;

TEST_SUITE("kernel_continuous") {
  TEST_CASE("forward noise of the zero vector has variance beta") {
    Rng rng(1);
    const std::vector<double> z(100'000, 0.0);
    const double beta = 0.3;
    const auto x = forward_noise<double>(z, beta, 0.7, rng);
    double m = 0.0, v = 0.0;
    for (double xi : x) m += xi;
    m /= static_cast<double>(x.size());
    for (double xi : x) v += (xi - m) * (xi - m);
    v /= static_cast<double>(x.size() - 1);
    CHECK(std::abs(m) < 3.0 * std::sqrt(beta / 1e5));
    CHECK(std::abs(v / beta - 1.0) < 0.02);
    CHECK_THROWS_AS(forward_noise<double>(z, 0.0, 1.0, rng), DomainError);
  }

  TEST_CASE("annealed coefficients on the default schedule") {
    const ContinuousKernelConfig cfg(0.5, NoiseSchedule::linear(100, 1.0, 0.01, KernelKind::continuous));
    const auto c0 = step_coeffs(cfg, 0);
    CHECK(c0.a == doctest::Approx(0.0099).epsilon(1e-12));
    CHECK(c0.b == doctest::Approx(0.7401).epsilon(1e-12));
    const auto c1 = step_coeffs(cfg, 1);
    CHECK(c1.a == doctest::Approx(0.01485).epsilon(1e-12));
    CHECK(c1.b == doctest::Approx(0.732675).epsilon(1e-12));
    const auto c98 = step_coeffs(cfg, 98);
    CHECK(c98.a == doctest::Approx(0.495).epsilon(1e-12));
    CHECK(c98.b == doctest::Approx(0.01245).epsilon(1e-10));
  }

  TEST_CASE("equilibrium coefficients") {
    const auto c = equilibrium_coeffs(0.2, 0.8, 0.5);
    CHECK(c.a == doctest::Approx(0.4));
    CHECK(c.b == doctest::Approx(0.15));
    CHECK_THROWS_AS(annealed_coeffs(1.0, 0.2, 0.0, 0.8, 0.5), ScheduleError);
  }

  TEST_CASE("one step from the noisy marginal lands on the next level") {
    const double z = 0.6, bt = 0.5, bn = 0.4, w = 0.5;
    const auto c = annealed_coeffs(bt, bn, 1 - bt, 1 - bn, w);
    // y = w x + a z + N(0, b) with x ~ N(alpha_t z, beta_t).
    const auto m = marginal_of_linear_gaussian((1 - bt) * z, bt, w, c.a * z, c.b);
    CHECK(m.mean == doctest::Approx((1 - bn) * z).epsilon(1e-12));
    CHECK(m.variance == doctest::Approx(bn).epsilon(1e-12));
  }

  TEST_CASE("transition moments marginalize the denoiser") {
    const std::vector<double> x{0.2, -0.4};
    const GaussianParams<double> d{{0.5, 0.1}, {0.04, 0.09}};
    const KernelCoeffs c{0.3, 0.2};
    const auto t = transition_params<double>(x, d, c, 0.5);
    CHECK(t.mean[0] == doctest::Approx(0.5 * 0.2 + 0.3 * 0.5));
    CHECK(t.variance[1] == doctest::Approx(0.2 + 0.09 * 0.09));
  }

  TEST_CASE("transition density integrates to one") {
    const std::vector<double> x{0.3};
    const GaussianParams<double> d{{0.1}, {0.05}};
    const auto t = transition_params<double>(x, d, {0.25, 0.3}, 0.5);
    // Importance sampling from N(0, 1).
    Rng rng(4);
    double acc = 0.0;
    const int n = 200'000;
    for (int i = 0; i < n; ++i) {
      const double y = rng.normal();
      const double q = std::exp(-0.5 * y * y) / std::sqrt(2 * std::numbers::pi);
      acc += std::exp(transition_logprob<double>(std::vector<double>{y}, t)) / q;
    }
    CHECK(std::abs(acc / n - 1.0) < 0.01);
  }

  TEST_CASE("inpaint transition pins observed dims") {
    const std::vector<double> x{0.1, 0.2}, obs{0.8, -0.5}, mask{0.0, 1.0};
    const GaussianParams<double> d{{0.4, 0.3}, {0.1, 0.2}};
    const KernelCoeffs c{0.35, 0.225};
    const auto t = inpaint_transition_params<double>(x, d, obs, mask, c, 0.5);
    CHECK(t.mean[0] == doctest::Approx(0.5 * 0.1 + 0.35 * 0.8));
    CHECK(t.variance[0] == doctest::Approx(0.225));
    CHECK(t.variance[1] == doctest::Approx(0.225 + 0.35 * 0.35 * 0.2));
    CHECK_THROWS_AS(inpaint_transition_params<double>(x, d, obs, std::vector<double>{0.5, 1.0}, c, 0.5),
                    DomainError);
  }

  TEST_CASE("constant-level recursion for an observed dim converges to N(alpha z, beta)") {
    const double w = 0.5, beta = 0.3, zbar = 0.8;
    const auto c = equilibrium_coeffs(beta, 1 - beta, w);
    double mean = 0.0, var = 1.0;
    for (int i = 0; i < 200; ++i) {
      mean = w * mean + c.a * zbar;
      var = w * w * var + c.b;
    }
    CHECK(mean == doctest::Approx(0.5599999999999998).epsilon(1e-12));
    CHECK(var == doctest::Approx(0.3).epsilon(1e-12));
  }
}

TEST_SUITE("kernel_categorical") {
  TEST_CASE("forward noise masks a beta fraction") {
    Rng rng(2);
    const std::vector<Category> z(100'000, 2);
    const auto x = forward_noise_cat(z, 3, 0.5, rng);
    std::size_t absorbed = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 4) ++absorbed;
      else REQUIRE(x[i] == 2);
    }
    CHECK(std::abs(absorbed / 1e5 - 0.5) < 3.0 * std::sqrt(0.25 / 1e5));
  }

  TEST_CASE("mixing weights") {
    CHECK(annealed_b(1.0, 0.999, 0.95) == doctest::Approx(0.98).epsilon(1e-12));
    CHECK(equilibrium_b(0.5, 0.95) == doctest::Approx(0.047619047619047616).epsilon(1e-12));
    const CategoricalKernelConfig cfg(0.95, 3, NoiseSchedule::linear(500, 1.0, 0.5, KernelKind::categorical));
    CHECK(step_b(cfg, 0) == doctest::Approx(0.98).epsilon(1e-12));
    CHECK(step_b(cfg, 250) == doctest::Approx(0.12695652173913044).epsilon(1e-10));
    CHECK_THROWS_AS(annealed_b(1.0, 0.9, 0.95), ScheduleError);
  }

  TEST_CASE("transition mixture row") {
    const std::vector<Category> x{2};
    const SimplexArray<double> f(1, 3, {0.2, 0.3, 0.5});
    const auto p = transition_probs_cat<double>(x, f, 1.0 / 21.0, 0.95);
    const double expected[] = {0.009523809523809525, 0.919047619047619, 0.023809523809523808,
                               0.047619047619047616};
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      CHECK(p.at(0, k) == doctest::Approx(expected[k]).epsilon(1e-12));
      sum += p.at(0, k);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("absorbed fraction after one annealed step equals beta_next") {
    const double bt = 0.8, bn = 0.78, w = 0.95;
    const double b = annealed_b(bt, bn, w);
    Rng rng(9);
    const int n = 100'000;
    int absorbed = 0;
    for (int i = 0; i < n; ++i) {
      const std::vector<Category> z{1};
      const auto x = forward_noise_cat(z, 2, bt, rng);
      const auto p = conditional_transition_probs_cat<double>(z, x, 2, b, w);
      if (sample_cat(p, rng)[0] == 3) ++absorbed;
    }
    CHECK(std::abs(absorbed / static_cast<double>(n) - bn) < 3.0 * std::sqrt(bn * (1 - bn) / n));
    CHECK((1 - b) * w * bt + b == doctest::Approx(bn).epsilon(1e-12));
  }

  TEST_CASE("log probabilities over all outcomes sum to one") {
    const std::vector<Category> x{1, 3};
    const SimplexArray<double> f(2, 2, {0.3, 0.7, 0.6, 0.4});
    const auto p = transition_probs_cat<double>(x, f, 0.2, 0.9);
    double total = 0.0;
    for (Category a = 1; a <= 3; ++a) {
      for (Category c = 1; c <= 3; ++c) {
        total += std::exp(transition_logprob_cat<double>(std::vector<Category>{a, c}, p));
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("zero-probability targets raise ImpossibleTransition") {
    const std::vector<Category> z{1}, x{1};
    const auto p = conditional_transition_probs_cat<double>(z, x, 3, 0.0, 0.9);
    CHECK_THROWS_AS(transition_logprob_cat<double>(std::vector<Category>{2}, p), ImpossibleTransition);
  }

  TEST_CASE("sampled frequencies match the row") {
    const SimplexArray<double> p(1, 4, {0.1, 0.2, 0.3, 0.4});
    Rng rng(6);
    std::map<Category, int> counts;
    const int n = 100'000;
    for (int i = 0; i < n; ++i) counts[sample_cat(p, rng)[0]]++;
    for (int k = 0; k < 4; ++k) {
      const double q = p.at(0, k);
      CHECK(std::abs(counts[k + 1] / static_cast<double>(n) - q) < 3.0 * std::sqrt(q * (1 - q) / n));
    }
  }

  TEST_CASE("per-element flow identity") {
    CHECK(categorical_flow_closed_form(0.1, 0.5) == doctest::Approx(0.04736842105263158).epsilon(1e-14));
    CHECK(categorical_flow_closed_form(0.5, 0.95) == doctest::Approx(0.023809523809523808).epsilon(1e-14));
    CHECK(categorical_flow_closed_form(0.9, 0.95) == doctest::Approx(0.03103448275862069).epsilon(1e-14));
    const auto f = categorical_element_flows(0.5, 0.95);
    CHECK(f.into_absorbing == doctest::Approx(f.out_of_absorbing).epsilon(1e-14));
  }

  TEST_CASE("observed rows are pinned") {
    const SimplexArray<double> f(2, 3, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8});
    const std::vector<Category> obs{3, 1};
    const std::vector<std::uint8_t> mask{0, 1};
    const auto p = pin_observed_rows(f, obs, mask);
    CHECK(p.at(0, 2) == 1.0);
    CHECK(p.at(0, 0) == 0.0);
    CHECK(p.at(1, 2) == doctest::Approx(0.8));
  }

  TEST_CASE("noisy state indexing") {
    CHECK(noisy_state_count(2, 3, kMaxTabularStates) == 16);
    CHECK_THROWS_AS(noisy_state_count(20, 3, kMaxTabularStates), CapacityError);
    for (std::uint64_t i = 0; i < 16; ++i) {
      CHECK(noisy_state_index(noisy_state_from_index(i, 2, 3), 3) == i);
    }
  }
}
