#include "nkca/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nkca/tabular_denoiser.hpp"

namespace nkca {

namespace {

double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Eigen::MatrixXd all_noisy_states(std::size_t dim, int categories) {
  const auto n = noisy_state_count(dim, categories, kMaxDenseStates);
  Eigen::MatrixXd states(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto x = noisy_state_from_index(s, dim, categories);
    for (std::size_t i = 0; i < dim; ++i) {
      states(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = x[i];
    }
  }
  return states;
}

void require_categorical(const NoiseKernel& kernel) {
  kernel.validate();
  if (kernel.kind != KernelKind::categorical) throw ConfigError("transition matrices need a categorical kernel");
}

}  // namespace

LinearGaussianMarginal marginal_of_linear_gaussian(double mu, double sigma2, double a, double b, double c2) {
  if (!(sigma2 >= 0.0) || !(c2 >= 0.0)) throw DomainError("variances must be non-negative");
  return {a * mu + b, c2 + a * a * sigma2};
}

TransitionMatrix build_transition_matrix(const NoiseKernel& kernel, const Denoiser<double>& denoiser,
                                         double beta_t, double beta_next) {
  require_categorical(kernel);
  if (denoiser.kind() != KernelKind::categorical || denoiser.categories() != kernel.categories) {
    throw ConfigError("denoiser does not match the kernel");
  }
  const std::size_t dim = denoiser.dim();
  const KernelCoeffs coeffs = kernel_step(kernel, beta_t, beta_next);
  const Batch<double> states = all_noisy_states(dim, kernel.categories);
  const auto n = states.rows();
  const std::vector<double> beta(static_cast<std::size_t>(n), beta_t);
  const DenoiserOutput<double> out = denoiser.evaluate(states, beta);

  TransitionMatrix m{dim, kernel.categories, Eigen::MatrixXd(n, n)};
  for (Eigen::Index x = 0; x < n; ++x) {
    const SimplexArray<double> rows = row_transition_simplex<double>(kernel, states, out, x, coeffs);
    for (Eigen::Index y = 0; y < n; ++y) {
      double p = 1.0;
      for (std::size_t i = 0; i < dim; ++i) {
        p *= rows.at(i, static_cast<std::size_t>(states(y, static_cast<Eigen::Index>(i))) - 1);
      }
      m.P(x, y) = p;
    }
  }
  return m;
}

TransitionMatrix build_transition_matrix(const NoiseKernel& kernel, const Denoiser<double>& denoiser,
                                         double beta) {
  return build_transition_matrix(kernel, denoiser, beta, beta);
}

TransitionMatrix build_exact_transition_matrix(const NoiseKernel& kernel, const CategoricalDataModel& model,
                                               double beta_t, double beta_next,
                                               std::optional<double> b_override) {
  require_categorical(kernel);
  if (model.categories != kernel.categories) throw ConfigError("data model does not match the kernel");
  const std::size_t dim = model.dim;
  const double b = b_override ? *b_override : kernel_step(kernel, beta_t, beta_next).b;
  const Eigen::MatrixXd states = all_noisy_states(dim, kernel.categories);
  const auto n = states.rows();
  TransitionMatrix m{dim, kernel.categories, Eigen::MatrixXd::Zero(n, n)};
  std::vector<Category> x(dim);
  for (Eigen::Index xi = 0; xi < n; ++xi) {
    for (std::size_t i = 0; i < dim; ++i) x[i] = static_cast<Category>(states(xi, static_cast<Eigen::Index>(i)));
    const auto post = model.joint_posterior(x, beta_t);
    for (std::size_t zi = 0; zi < post.size(); ++zi) {
      if (post[zi] == 0.0) continue;
      const auto z = model.clean_state(zi);
      const auto cond = conditional_transition_probs_cat<double>(z, x, kernel.categories, b, kernel.w);
      for (Eigen::Index yi = 0; yi < n; ++yi) {
        double p = post[zi];
        for (std::size_t i = 0; i < dim; ++i) {
          p *= cond.at(i, static_cast<std::size_t>(states(yi, static_cast<Eigen::Index>(i))) - 1);
        }
        m.P(xi, yi) += p;
      }
    }
  }
  return m;
}

std::vector<double> stationary_distribution(const Eigen::MatrixXd& P, double tol, std::size_t max_iter) {
  if (P.rows() != P.cols() || P.rows() == 0) throw ShapeError("transition matrix must be square and non-empty");
  const Eigen::Index n = P.rows();
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd Pt = P.transpose();
  double change = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Eigen::VectorXd next = Pt * pi;
    next /= next.sum();
    change = (next - pi).lpNorm<1>();
    pi = std::move(next);
    if (change < tol) return {pi.data(), pi.data() + n};
  }
  throw ConvergenceError("power iteration did not converge (last L1 change " + std::to_string(change) + ")", change);
}

double detailed_balance_residual(std::span<const double> pi, const Eigen::MatrixXd& P) {
  if (static_cast<Eigen::Index>(pi.size()) != P.rows() || P.rows() != P.cols()) {
    throw ShapeError("detailed_balance_residual: dimension mismatch");
  }
  double worst = 0.0;
  for (Eigen::Index x = 0; x < P.rows(); ++x) {
    for (Eigen::Index y = x + 1; y < P.cols(); ++y) {
      const double flow = pi[static_cast<std::size_t>(x)] * P(x, y) - pi[static_cast<std::size_t>(y)] * P(y, x);
      worst = std::max(worst, std::abs(flow));
    }
  }
  return worst;
}

double stationarity_residual(std::span<const double> pi, const Eigen::MatrixXd& P) {
  if (static_cast<Eigen::Index>(pi.size()) != P.rows()) throw ShapeError("stationarity_residual: dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> v(pi.data(), static_cast<Eigen::Index>(pi.size()));
  return (P.transpose() * v - v).lpNorm<1>();
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

CategoricalFlows categorical_element_flows(double beta, double w, int categories) {
  const double b = equilibrium_b(beta, w);
  const Category z = 1;
  const Category absorbing = categories + 1;
  const std::vector<Category> zv{z};
  const std::vector<Category> clean{z};
  const std::vector<Category> masked{absorbing};
  const auto from_clean = conditional_transition_probs_cat<double>(zv, clean, categories, b, w);
  const auto from_masked = conditional_transition_probs_cat<double>(zv, masked, categories, b, w);
  return {(1.0 - beta) * from_clean.at(0, static_cast<std::size_t>(absorbing) - 1),
          beta * from_masked.at(0, static_cast<std::size_t>(z) - 1)};
}

double categorical_flow_closed_form(double beta, double w) {
  return beta * (1.0 - w) * (1.0 - beta) / (1.0 - w * beta);
}

double exact_continuous_transition_density(const GaussianMixture& model, std::span<const double> x,
                                           std::span<const double> y, double beta, double w,
                                           KernelCoeffs coeffs) {
  const auto post = model.posterior(x, beta, 1.0 - beta);
  double p = 0.0;
  for (std::size_t k = 0; k < model.components(); ++k) {
    double pk = post.responsibilities[k];
    for (std::size_t d = 0; d < x.size(); ++d) {
      pk *= normal_pdf(y[d], w * x[d] + coeffs.a * post.means[k][d],
                       coeffs.b + coeffs.a * coeffs.a * post.variances[k][d]);
    }
    p += pk;
  }
  return p;
}

ContinuousDbReport continuous_db_residual(const GaussianMixture& model, double w, double beta,
                                          const GridSpec& grid, std::optional<KernelCoeffs> coeffs) {
  const std::size_t dim = model.dim();
  if (dim != 1 && dim != 2) throw DomainError("continuous_db_residual supports 1- or 2-dimensional models");
  if (grid.points < 3) throw DomainError("grid needs at least 3 points per axis");
  const double alpha = 1.0 - beta;
  const KernelCoeffs kc = coeffs ? *coeffs : equilibrium_coeffs(beta, alpha, w);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < model.components(); ++k) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double sd = std::sqrt(alpha * alpha * model.variances[k][d] + beta);
      lo = std::min(lo, alpha * model.means[k][d] - 6.0 * sd);
      hi = std::max(hi, alpha * model.means[k][d] + 6.0 * sd);
    }
  }
  if (grid.lo) lo = *grid.lo;
  if (grid.hi) hi = *grid.hi;
  if (!(hi > lo)) throw DomainError("grid range is empty");

  const std::size_t m = grid.points;
  const double step = (hi - lo) / static_cast<double>(m - 1);
  const std::size_t n = dim == 1 ? m : m * m;
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  std::vector<double> weight(n);
  for (std::size_t p = 0; p < n; ++p) {
    double wgt = 1.0;
    std::size_t rest = p;
    for (std::size_t d = 0; d < dim; ++d) {
      const std::size_t j = rest % m;
      rest /= m;
      pts[p][d] = lo + step * static_cast<double>(j);
      wgt *= (j == 0 || j == m - 1) ? 0.5 * step : step;
    }
    weight[p] = wgt;
  }

  std::vector<double> density(n);
  Eigen::MatrixXd T(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    density[i] = model.noisy_density(pts[i], beta, alpha);
    const auto post = model.posterior(pts[i], beta, alpha);
    for (std::size_t j = 0; j < n; ++j) {
      double p = 0.0;
      for (std::size_t k = 0; k < model.components(); ++k) {
        double pk = post.responsibilities[k];
        for (std::size_t d = 0; d < dim; ++d) {
          pk *= normal_pdf(pts[j][d], w * pts[i][d] + kc.a * post.means[k][d],
                           kc.b + kc.a * kc.a * post.variances[k][d]);
        }
        p += pk;
      }
      T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
    }
  }

  ContinuousDbReport report;
  report.points = n;
  double leak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    report.density_mass += weight[i] * density[i];
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += weight[j] * T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    leak += weight[i] * density[i] * std::abs(1.0 - row);
  }
  report.transition_mass = leak / report.density_mass;
  if (std::abs(report.density_mass - 1.0) > 1e-3 || report.transition_mass > 1e-3) {
    throw DomainError("quadrature self-check failed: p(x) integrates to " + std::to_string(report.density_mass) +
                      ", mean transition leak " + std::to_string(report.transition_mass) +
                      "; widen or refine the grid");
  }

  double peak = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double forward = density[i] * T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double backward = density[j] * T(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      peak = std::max(peak, forward);
      worst = std::max(worst, std::abs(forward - backward));
    }
  }
  report.residual = worst / peak;
  return report;
}

MarginalCheck check_marginal_condition(const NoiseKernel& kernel, const CategoricalDataModel& model,
                                       double beta_t, double beta_next, std::size_t n_samples, Rng& rng) {
  require_categorical(kernel);
  if (model.categories != kernel.categories) throw ConfigError("data model does not match the kernel");
  if (n_samples == 0) throw DomainError("n_samples must be positive");
  const double b = kernel_step(kernel, beta_t, beta_next).b;
  std::size_t absorbed = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto z = model.sample(rng);
    const auto x = forward_noise_cat(z, kernel.categories, beta_t, rng);
    const auto y = sample_cat(conditional_transition_probs_cat<double>(z, x, kernel.categories, b, kernel.w), rng);
    for (Category v : y) absorbed += v == kernel.absorbing() ? 1 : 0;
  }
  const double total = static_cast<double>(n_samples * model.dim);
  const double rate = static_cast<double>(absorbed) / total;
  const double sd = std::sqrt(beta_next * (1.0 - beta_next) / total);
  MarginalCheck r{beta_t, beta_next, 0.0, 3.0, false};
  r.statistic = sd > 0.0 ? std::abs(rate - beta_next) / sd : (rate == beta_next ? 0.0 : INFINITY);
  r.pass = r.statistic <= r.threshold;
  return r;
}

MarginalCheck check_marginal_condition(const NoiseKernel& kernel, const GaussianMixture& model,
                                       double beta_t, double beta_next, std::size_t n_samples, Rng& rng) {
  kernel.validate();
  if (kernel.kind != KernelKind::continuous) throw ConfigError("expected a continuous kernel");
  if (n_samples < 2) throw DomainError("n_samples must be at least 2");
  const KernelCoeffs c = kernel_step(kernel, beta_t, beta_next);
  const double alpha_t = 1.0 - beta_t;
  const double alpha_next = 1.0 - beta_next;
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto z = model.sample(rng);
    for (double zd : z) {
      const double x = alpha_t * zd + std::sqrt(beta_t) * rng.normal();
      const double y = kernel.w * x + c.a * zd + std::sqrt(c.b) * rng.normal();
      const double u = (y - alpha_next * zd) / std::sqrt(beta_next);
      sum += u;
      sumsq += u * u;
      ++count;
    }
  }
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  const double var = (sumsq - n * mean * mean) / (n - 1.0);
  const double mean_stat = std::abs(mean) * std::sqrt(n);
  const double var_stat = std::abs(var - 1.0) / std::sqrt(2.0 / (n - 1.0));
  MarginalCheck r{beta_t, beta_next, std::max(mean_stat, var_stat), 3.0, false};
  r.pass = r.statistic <= r.threshold;
  return r;
}

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, EnergyEstimator estimator) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("energy_distance needs non-empty samples");
  if (a.cols() != b.cols()) throw ShapeError("energy_distance: dimension mismatch");
  if (estimator == EnergyEstimator::u_statistic && (a.rows() < 2 || b.rows() < 2)) {
    throw DomainError("the U-statistic needs at least two points per sample");
  }
  auto mean_cross = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < q.rows(); ++j) s += (p.row(i) - q.row(j)).norm();
    }
    return s / (static_cast<double>(p.rows()) * static_cast<double>(q.rows()));
  };
  auto mean_within = [estimator](const Eigen::MatrixXd& p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < p.rows(); ++j) s += (p.row(i) - p.row(j)).norm();
    }
    const double n = static_cast<double>(p.rows());
    return estimator == EnergyEstimator::u_statistic ? 2.0 * s / (n * (n - 1.0)) : 2.0 * s / (n * n);
  };
  return 2.0 * mean_cross(a, b) - mean_within(a) - mean_within(b);
}

}  // namespace nkca
