#include "nkca/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nkca/oracle.hpp"
#include "nkca/tabular_denoiser.hpp"
#include "nkca/trainer.hpp"

namespace nkca {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

CheckResult at_most(std::string name, double statistic, double threshold, std::string detail = {}) {
  return {std::move(name), statistic, threshold, statistic <= threshold, std::move(detail)};
}

CheckResult above(std::string name, double statistic, double threshold, std::string detail = {}) {
  return {std::move(name), statistic, threshold, statistic > threshold, std::move(detail)};
}

GaussianMixture single_component() { return GaussianMixture({1.0}, {{0.3}}, {{0.2}}); }

GaussianMixture two_components() { return GaussianMixture({0.5, 0.5}, {{-1.0}, {1.0}}, {{0.1}, {0.1}}); }

template <typename T>
double gradient_rel_error(Denoiser<double>& denoiser, const NoiseKernel& kernel, const Batch<double>& z, Rng& rng,
                          std::string& detail) {
  TrainConfig config;
  const auto pairs = draw_contrastive_pairs<double>(z, denoiser, kernel, config, rng);
  TensorMap<double> grads = zeros_like(denoiser.parameters());
  contrastive_loss<double>(denoiser, kernel, pairs, &grads);

  std::vector<std::pair<std::string, std::size_t>> index;
  for (const auto& [name, array] : denoiser.parameters()) {
    for (std::size_t i = 0; i < array.size(); ++i) index.emplace_back(name, i);
  }
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto& [name, i] = index[rng.below(index.size())];
    double& p = denoiser.mutable_parameters().at(name)[i];
    const double saved = p;
    p = saved + h;
    const double up = contrastive_loss<double>(denoiser, kernel, pairs, nullptr);
    p = saved - h;
    const double down = contrastive_loss<double>(denoiser, kernel, pairs, nullptr);
    p = saved;
    const double fd = (up - down) / (2.0 * h);
    const double analytic = grads.at(name)[i];
    const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-7});
    worst = std::max(worst, rel);
    detail += name + "[" + std::to_string(i) + "] " + fmt(analytic) + " vs " + fmt(fd) + "; ";
  }
  return worst;
}

std::unique_ptr<Denoiser<double>> perturbed_mlp(const DenoiserSpec& spec, Rng& rng) {
  TensorMap<double> params = init_parameters<double>(spec, rng);
  // Zero-initialized heads would make most hidden-layer gradients vanish.
  for (auto& [name, array] : params) {
    for (auto& v : array.values()) v += 0.3 * rng.normal();
  }
  return make_denoiser<double>(spec, std::move(params));
}

}  // namespace

nlohmann::json CheckResult::to_json() const {
  nlohmann::json j = {{"check", check}, {"statistic", statistic}, {"threshold", threshold}, {"pass", pass}};
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

std::vector<CheckResult> check_linear_gaussian_marginal(std::uint64_t seed, std::size_t draws) {
  Rng rng = Rng(seed).split(101);
  double worst_mean = 0.0;
  double worst_var = 0.0;
  for (int tuple = 0; tuple < 20; ++tuple) {
    const double mu = -1.0 + 2.0 * rng.uniform();
    const double sigma2 = 0.05 + 0.95 * rng.uniform();
    const double a = -1.0 + 2.0 * rng.uniform();
    const double b = -1.0 + 2.0 * rng.uniform();
    const double c2 = 0.05 + 0.95 * rng.uniform();
    const auto expected = marginal_of_linear_gaussian(mu, sigma2, a, b, c2);
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const double x = mu + std::sqrt(sigma2) * rng.normal();
      const double y = a * x + b + std::sqrt(c2) * rng.normal();
      sum += y;
      sumsq += y * y;
    }
    const double n = static_cast<double>(draws);
    const double mean = sum / n;
    const double var = (sumsq - n * mean * mean) / (n - 1.0);
    worst_mean = std::max(worst_mean, std::abs(mean - expected.mean));
    worst_var = std::max(worst_var, std::abs(var - expected.variance) / expected.variance);
  }
  return {at_most("linear_gaussian.mean_abs_error", worst_mean, 5e-3, "20 tuples"),
          at_most("linear_gaussian.variance_rel_error", worst_var, 1e-2, "20 tuples")};
}

std::vector<CheckResult> check_continuous_detailed_balance() {
  std::vector<CheckResult> out;
  const double w = 0.5;
  const std::pair<const char*, GaussianMixture> models[] = {{"one_component", single_component()},
                                                            {"two_components", two_components()}};
  for (const auto& [label, model] : models) {
    for (double beta : {0.1, 0.2, 0.5}) {
      const std::string tag = std::string(label) + ".beta=" + fmt(beta);
      const auto ok = continuous_db_residual(model, w, beta);
      out.push_back(at_most("continuous_db." + tag, ok.residual, 1e-6));
      KernelCoeffs bad = equilibrium_coeffs(beta, 1.0 - beta, w);
      bad.a *= 1.05;
      const auto broken = continuous_db_residual(model, w, beta, {}, bad);
      out.push_back(above("continuous_db_negative_control." + tag, broken.residual, 1e-3));
    }
  }
  return out;
}

std::vector<CheckResult> check_categorical_flow_identity() {
  double worst = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double beta = 0.1 * i;
    for (double w : {0.5, 0.95}) {
      const auto flows = categorical_element_flows(beta, w);
      const double expected = categorical_flow_closed_form(beta, w);
      worst = std::max({worst, std::abs(flows.into_absorbing - expected), std::abs(flows.out_of_absorbing - expected)});
    }
  }
  return {at_most("categorical_flow_identity", worst, 1e-12, "beta 0.1..0.9 x w {0.5, 0.95}")};
}

std::vector<CheckResult> check_marginal_conditions(std::uint64_t seed, std::size_t samples) {
  std::vector<CheckResult> out;
  {
    Rng rng = Rng(seed).split(201);
    const NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    const auto schedule = NoiseSchedule::linear(100, 1.0, 0.01, KernelKind::continuous);
    const GaussianMixture model({0.5, 0.5}, {{-0.5}, {0.5}}, {{0.04}, {0.04}});
    double worst = 0.0;
    int failures = 0;
    for (std::size_t t = 0; t < schedule.steps(); ++t) {
      const auto r = check_marginal_condition(kernel, model, schedule.beta(t), schedule.beta(t + 1), samples, rng);
      worst = std::max(worst, r.statistic);
      failures += r.pass ? 0 : 1;
    }
    out.push_back(at_most("marginal_condition.continuous", worst, 3.0,
                          std::to_string(failures) + " of " + std::to_string(schedule.steps()) +
                              " pairs beyond 3 sigma"));
  }
  {
    Rng rng = Rng(seed).split(202);
    const NoiseKernel kernel{KernelKind::categorical, 0.95, 3};
    const auto schedule = NoiseSchedule::linear(500, 1.0, 0.5, KernelKind::categorical);
    Rng model_rng = Rng(seed).split(203);
    const auto model = CategoricalDataModel::random(2, 3, model_rng);
    double worst = 0.0;
    int failures = 0;
    for (std::size_t t = 0; t < schedule.steps(); ++t) {
      const auto r = check_marginal_condition(kernel, model, schedule.beta(t), schedule.beta(t + 1), samples, rng);
      worst = std::max(worst, r.statistic);
      failures += r.pass ? 0 : 1;
    }
    out.push_back(at_most("marginal_condition.categorical", worst, 3.0,
                          std::to_string(failures) + " of " + std::to_string(schedule.steps()) +
                              " pairs beyond 3 sigma"));
  }
  return out;
}

std::vector<CheckResult> check_exact_stationarity(std::uint64_t seed) {
  Rng rng = Rng(seed).split(301);
  const auto model = CategoricalDataModel::random(2, 3, rng);
  const NoiseKernel kernel{KernelKind::categorical, 0.95, 3};
  const double beta = 0.5;
  const auto exact = build_exact_transition_matrix(kernel, model, beta, beta);
  const auto pi = stationary_distribution(exact.P);
  const auto target = model.noisy_marginal(beta);
  const double row_error = (exact.P.rowwise().sum().array() - 1.0).abs().maxCoeff();

  std::vector<CheckResult> out;
  out.push_back(at_most("exact_kernel.row_sums", row_error, 1e-12));
  out.push_back(at_most("exact_kernel.stationary_tv", tv_distance(pi, target), 1e-8));
  out.push_back(at_most("exact_kernel.detailed_balance", detailed_balance_residual(pi, exact.P), 1e-10));

  const auto broken = build_exact_transition_matrix(kernel, model, beta, beta, equilibrium_b(beta, 0.5));
  const auto broken_pi = stationary_distribution(broken.P);
  out.push_back(above("exact_kernel.negative_control", detailed_balance_residual(target, broken.P), 1e-3,
                      "mixing weight from w = 0.5 applied with w = 0.95; stationary TV " +
                          fmt(tv_distance(broken_pi, target))));

  // Per-element posterior marginals lose the correlations of p(z).
  const ExactPosteriorDenoiser<double> factorized(model);
  const auto approx = build_transition_matrix(kernel, factorized, beta);
  const auto approx_pi = stationary_distribution(approx.P);
  CheckResult diag{"factorized_posterior.stationary_tv", tv_distance(approx_pi, target), 0.0, true,
                   "diagnostic only; detailed-balance residual " +
                       fmt(detailed_balance_residual(target, approx.P))};
  out.push_back(diag);
  return out;
}

std::vector<CheckResult> check_contrastive_gradients(std::uint64_t seed) {
  std::vector<CheckResult> out;
  {
    Rng rng = Rng(seed).split(401);
    DenoiserSpec spec{"mlp", KernelKind::continuous, 3, 0, {16, 16}, 8};
    auto denoiser = perturbed_mlp(spec, rng);
    Batch<double> z(8, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = -1.0 + 2.0 * rng.uniform();
    std::string detail;
    const double err = gradient_rel_error<double>(*denoiser, {KernelKind::continuous, 0.5, 0}, z, rng, detail);
    out.push_back(at_most("contrastive_gradient.continuous", err, 1e-4, detail));
  }
  {
    Rng rng = Rng(seed).split(402);
    DenoiserSpec spec{"mlp", KernelKind::categorical, 3, 4, {16, 16}, 8};
    auto denoiser = perturbed_mlp(spec, rng);
    Batch<double> z(8, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<double>(1 + rng.below(4));
    std::string detail;
    const double err = gradient_rel_error<double>(*denoiser, {KernelKind::categorical, 0.95, 4}, z, rng, detail);
    out.push_back(at_most("contrastive_gradient.categorical", err, 1e-4, detail));
  }
  return out;
}

std::vector<CheckResult> check_score_identity(std::uint64_t seed, std::size_t pairs) {
  Rng rng = Rng(seed).split(501);
  const NoiseKernel kernel{KernelKind::categorical, 0.95, 3};
  const double beta = 0.5;
  const TensorMap<double> params = TabularDenoiser<double>::init(2, 3);
  const TabularDenoiser<double> denoiser(2, 3, params);
  const auto states = denoiser.state_count();

  const std::size_t count = params.at("table.logits").size();
  std::vector<double> sum(count, 0.0);
  std::vector<double> sumsq(count, 0.0);
  const std::vector<double> level{beta};
  const std::vector<KernelCoeffs> coeffs{kernel_equilibrium(kernel, beta)};
  Batch<double> x(1, 2);
  for (std::size_t s = 0; s < pairs; ++s) {
    // Uniform over noisy states so every table row is visited often.
    const auto state = noisy_state_from_index(rng.below(states), 2, 3);
    for (int i = 0; i < 2; ++i) x(0, i) = state[static_cast<std::size_t>(i)];
    const auto out = denoiser.evaluate(x, level);
    const Batch<double> y = sample_transition<double>(kernel, x, out, coeffs, [&rng](Eigen::Index) -> Rng& { return rng; });
    TensorMap<double> grads = zeros_like(params);
    transition_logprob_batch<double>(denoiser, kernel, x, y, level, coeffs, &grads);
    const auto g = grads.at("table.logits").values();
    for (std::size_t k = 0; k < count; ++k) {
      sum[k] += g[k];
      sumsq[k] += g[k] * g[k];
    }
  }
  const double n = static_cast<double>(pairs);
  double worst = 0.0;
  std::size_t exceed = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, (sumsq[k] - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double z = se > 0.0 ? std::abs(mean) / se : (mean == 0.0 ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    exceed += z > 3.0 ? 1 : 0;
  }
  return {at_most("score_identity.max_standard_errors", worst, 3.0,
                  std::to_string(exceed) + " of " + std::to_string(count) + " parameters beyond 3 SE over " +
                      std::to_string(pairs) + " pairs")};
}

std::vector<std::string> validation_suites() { return {"props", "marginal", "stationarity", "gradients", "all"}; }

std::vector<CheckResult> run_validation_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto add = [&out](std::vector<CheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  const bool all = suite == "all";
  bool known = all;
  if (all || suite == "props") {
    known = true;
    add(check_linear_gaussian_marginal(seed));
    add(check_continuous_detailed_balance());
    add(check_categorical_flow_identity());
  }
  if (all || suite == "marginal") {
    known = true;
    add(check_marginal_conditions(seed));
  }
  if (all || suite == "stationarity") {
    known = true;
    add(check_exact_stationarity(seed));
  }
  if (all || suite == "gradients") {
    known = true;
    add(check_contrastive_gradients(seed));
    add(check_score_identity(seed));
  }
  if (!known) throw ConfigError("unknown validation suite '" + suite + "'");
  return out;
}

}  // namespace nkca
