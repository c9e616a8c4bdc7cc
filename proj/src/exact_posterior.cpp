#include "nkca/exact_posterior.hpp"

#include <cmath>
#include <numeric>

#include "nkca/tabular_denoiser.hpp"

namespace nkca {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

}  // namespace

CategoricalDataModel::CategoricalDataModel(std::size_t dim_, int categories_,
                                           std::vector<double> probs_)
    : dim(dim_), categories(categories_), probs(std::move(probs_)) {
  if (categories < 2) throw ConfigError("categorical data model needs K >= 2");
  std::size_t expected = 1;
  for (std::size_t i = 0; i < dim; ++i) {
    expected *= static_cast<std::size_t>(categories);
    if (expected > kMaxTabularStates) throw CapacityError("clean state space too large to enumerate");
  }
  if (probs.size() != expected) throw ShapeError("data model table needs K^D entries");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("data model probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("data model probabilities must sum to 1");
}

CategoricalDataModel CategoricalDataModel::independent(
    const std::vector<std::vector<double>>& marginals) {
  if (marginals.empty()) throw ShapeError("independent model needs at least one element");
  const int k = static_cast<int>(marginals.front().size());
  const std::size_t dim = marginals.size();
  std::size_t n = 1;
  for (std::size_t i = 0; i < dim; ++i) n *= static_cast<std::size_t>(k);
  std::vector<double> probs(n, 1.0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t rest = idx;
    for (std::size_t i = dim; i-- > 0;) {
      probs[idx] *= marginals[i].at(rest % static_cast<std::size_t>(k));
      rest /= static_cast<std::size_t>(k);
    }
  }
  return CategoricalDataModel(dim, k, std::move(probs));
}

CategoricalDataModel CategoricalDataModel::random(std::size_t dim, int categories, Rng& rng) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < dim; ++i) n *= static_cast<std::size_t>(categories);
  std::vector<double> probs(n);
  double sum = 0.0;
  for (auto& p : probs) {
    // Exponential draws give a flat Dirichlet; the offset keeps entries positive.
    p = 0.05 - std::log(1.0 - rng.uniform());
    sum += p;
  }
  for (auto& p : probs) p /= sum;
  return CategoricalDataModel(dim, categories, std::move(probs));
}

std::vector<Category> CategoricalDataModel::clean_state(std::size_t index) const {
  std::vector<Category> z(dim);
  const auto k = static_cast<std::size_t>(categories);
  for (std::size_t i = dim; i-- > 0;) {
    z[i] = static_cast<Category>(index % k + 1);
    index /= k;
  }
  return z;
}

std::size_t CategoricalDataModel::clean_index(std::span<const Category> z) const {
  std::size_t idx = 0;
  for (Category v : z) {
    if (v < 1 || v > categories) throw DomainError("clean state value outside 1..K");
    idx = idx * static_cast<std::size_t>(categories) + static_cast<std::size_t>(v - 1);
  }
  return idx;
}

std::vector<double> CategoricalDataModel::joint_posterior(std::span<const Category> x,
                                                          double beta) const {
  if (x.size() != dim) throw ShapeError("joint_posterior: state width mismatch");
  const Category absorbing = categories + 1;
  std::vector<double> post(probs.size(), 0.0);
  std::vector<double> consistent(probs.size(), 0.0);
  double total = 0.0;
  double n_consistent = 0.0;
  for (std::size_t idx = 0; idx < probs.size(); ++idx) {
    const auto z = clean_state(idx);
    double lik = 1.0;
    bool matches = true;
    for (std::size_t i = 0; i < dim; ++i) {
      if (x[i] == absorbing) {
        lik *= beta;
      } else if (x[i] == z[i]) {
        lik *= 1.0 - beta;
      } else {
        lik = 0.0;
        matches = false;
        break;
      }
    }
    if (matches) {
      consistent[idx] = 1.0;
      n_consistent += 1.0;
    }
    post[idx] = probs[idx] * lik;
    total += post[idx];
  }
  if (total > 0.0) {
    for (auto& p : post) p /= total;
    return post;
  }
  for (auto& p : consistent) p /= n_consistent;
  return consistent;
}

std::vector<double> CategoricalDataModel::noisy_marginal(double beta) const {
  const std::uint64_t n = noisy_state_count(dim, categories, kMaxTabularStates);
  const Category absorbing = categories + 1;
  std::vector<double> px(n, 0.0);
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto x = noisy_state_from_index(s, dim, categories);
    double acc = 0.0;
    for (std::size_t idx = 0; idx < probs.size(); ++idx) {
      if (probs[idx] == 0.0) continue;
      const auto z = clean_state(idx);
      double lik = 1.0;
      for (std::size_t i = 0; i < dim && lik > 0.0; ++i) {
        if (x[i] == absorbing) {
          lik *= beta;
        } else if (x[i] == z[i]) {
          lik *= 1.0 - beta;
        } else {
          lik = 0.0;
        }
      }
      acc += probs[idx] * lik;
    }
    px[s] = acc;
  }
  return px;
}

std::vector<Category> CategoricalDataModel::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = probs.size() - 1;
  for (std::size_t idx = 0; idx < probs.size(); ++idx) {
    acc += probs[idx];
    if (u < acc) {
      pick = idx;
      break;
    }
  }
  return clean_state(pick);
}

GaussianMixture::GaussianMixture(std::vector<double> weights_,
                                 std::vector<std::vector<double>> means_,
                                 std::vector<std::vector<double>> variances_)
    : weights(std::move(weights_)), means(std::move(means_)), variances(std::move(variances_)) {
  if (weights.empty() || weights.size() != means.size() || weights.size() != variances.size()) {
    throw ShapeError("mixture weights/means/variances disagree in component count");
  }
  const std::size_t d = means.front().size();
  if (d == 0) throw ShapeError("mixture components need at least one dimension");
  double sum = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (means[k].size() != d || variances[k].size() != d) {
      throw ShapeError("mixture components disagree in dimension");
    }
    if (!(weights[k] > 0.0)) throw DomainError("mixture weights must be positive");
    for (double v : variances[k]) {
      if (!(v > 0.0)) throw DomainError("mixture variances must be positive");
    }
    sum += weights[k];
  }
  for (auto& w : weights) w /= sum;
}

double GaussianMixture::noisy_density(std::span<const double> x, double beta, double alpha) const {
  if (x.size() != dim()) throw ShapeError("noisy_density: dimension mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < components(); ++k) {
    double lp = std::log(weights[k]);
    for (std::size_t d = 0; d < x.size(); ++d) {
      lp += log_normal(x[d], alpha * means[k][d], alpha * alpha * variances[k][d] + beta);
    }
    total += std::exp(lp);
  }
  return total;
}

GaussianMixture::Posterior GaussianMixture::posterior(std::span<const double> x, double beta,
                                                      double alpha) const {
  if (x.size() != dim()) throw ShapeError("posterior: dimension mismatch");
  if (!(beta > 0.0)) throw DomainError("posterior: beta must be positive");
  Posterior post;
  const std::size_t nk = components();
  post.responsibilities.resize(nk);
  post.means.assign(nk, std::vector<double>(x.size()));
  post.variances.assign(nk, std::vector<double>(x.size()));
  double max_lp = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nk; ++k) {
    double lp = std::log(weights[k]);
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double m = means[k][d];
      const double v = variances[k][d];
      lp += log_normal(x[d], alpha * m, alpha * alpha * v + beta);
      const double denom = beta + alpha * alpha * v;
      post.means[k][d] = (beta * m + alpha * v * x[d]) / denom;
      post.variances[k][d] = v * beta / denom;
    }
    post.responsibilities[k] = lp;
    max_lp = std::max(max_lp, lp);
  }
  double sum = 0.0;
  for (auto& r : post.responsibilities) {
    r = std::exp(r - max_lp);
    sum += r;
  }
  for (auto& r : post.responsibilities) r /= sum;
  return post;
}

GaussianParams<double> GaussianMixture::posterior_moments(std::span<const double> x, double beta,
                                                          double alpha) const {
  const Posterior post = posterior(x, beta, alpha);
  GaussianParams<double> out;
  out.mean.assign(x.size(), 0.0);
  out.variance.assign(x.size(), 0.0);
  for (std::size_t d = 0; d < x.size(); ++d) {
    double m1 = 0.0;
    double m2 = 0.0;
    for (std::size_t k = 0; k < components(); ++k) {
      const double r = post.responsibilities[k];
      const double mk = post.means[k][d];
      m1 += r * mk;
      m2 += r * (post.variances[k][d] + mk * mk);
    }
    out.mean[d] = m1;
    out.variance[d] = std::max(m2 - m1 * m1, 0.0);
  }
  return out;
}

std::vector<double> GaussianMixture::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = components() - 1;
  for (std::size_t k = 0; k < components(); ++k) {
    acc += weights[k];
    if (u < acc) {
      pick = k;
      break;
    }
  }
  std::vector<double> z(dim());
  for (std::size_t d = 0; d < z.size(); ++d) {
    z[d] = means[pick][d] + std::sqrt(variances[pick][d]) * rng.normal();
  }
  return z;
}

template <typename T>
ExactPosteriorDenoiser<T>::ExactPosteriorDenoiser(CategoricalDataModel model)
    : kind_(KernelKind::categorical), categorical_(std::move(model)) {}

template <typename T>
ExactPosteriorDenoiser<T>::ExactPosteriorDenoiser(GaussianMixture model)
    : kind_(KernelKind::continuous), gaussian_(std::move(model)) {}

template <typename T>
std::size_t ExactPosteriorDenoiser<T>::dim() const {
  return categorical_ ? categorical_->dim : gaussian_->dim();
}

template <typename T>
int ExactPosteriorDenoiser<T>::categories() const {
  return categorical_ ? categorical_->categories : 0;
}

template <typename T>
const CategoricalDataModel& ExactPosteriorDenoiser<T>::categorical_model() const {
  if (!categorical_) throw Error("exact posterior holds a continuous data model");
  return *categorical_;
}

template <typename T>
const GaussianMixture& ExactPosteriorDenoiser<T>::gaussian_model() const {
  if (!gaussian_) throw Error("exact posterior holds a categorical data model");
  return *gaussian_;
}

template <typename T>
DenoiserOutput<T> ExactPosteriorDenoiser<T>::evaluate(const Batch<T>& x,
                                                      std::span<const T> beta) const {
  if (static_cast<std::size_t>(x.cols()) != dim()) throw ShapeError("exact posterior: input width mismatch");
  if (beta.size() != static_cast<std::size_t>(x.rows())) throw ShapeError("one noise level per row required");
  DenoiserOutput<T> out;
  out.kind = kind_;
  const auto d = static_cast<std::size_t>(x.cols());
  if (categorical_) {
    const int k = categorical_->categories;
    out.probs = Matrix<T>::Zero(x.rows(), static_cast<Eigen::Index>(d * k));
    std::vector<Category> state(d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        state[i] = static_cast<Category>(std::lround(static_cast<double>(x(r, static_cast<Eigen::Index>(i)))));
      }
      const auto post = categorical_->joint_posterior(state, static_cast<double>(beta[r]));
      for (std::size_t idx = 0; idx < post.size(); ++idx) {
        if (post[idx] == 0.0) continue;
        const auto z = categorical_->clean_state(idx);
        for (std::size_t i = 0; i < d; ++i) {
          out.probs(r, static_cast<Eigen::Index>(i * k + (z[i] - 1))) += static_cast<T>(post[idx]);
        }
      }
    }
  } else {
    out.mean.resize(x.rows(), x.cols());
    out.variance.resize(x.rows(), x.cols());
    std::vector<double> row(d);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (std::size_t i = 0; i < d; ++i) row[i] = static_cast<double>(x(r, static_cast<Eigen::Index>(i)));
      const double b = static_cast<double>(beta[r]);
      const auto m = gaussian_->posterior_moments(row, b, 1.0 - b);
      for (std::size_t i = 0; i < d; ++i) {
        out.mean(r, static_cast<Eigen::Index>(i)) = static_cast<T>(m.mean[i]);
        out.variance(r, static_cast<Eigen::Index>(i)) = static_cast<T>(m.variance[i]);
      }
    }
  }
  return out;
}

template class ExactPosteriorDenoiser<float>;
template class ExactPosteriorDenoiser<double>;

}  // namespace nkca
