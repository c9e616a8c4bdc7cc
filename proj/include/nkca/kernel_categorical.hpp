#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "nkca/error.hpp"
#include "nkca/rng.hpp"
#include "nkca/schedule.hpp"

namespace nkca {

/// Categories are 1-based: clean values lie in 1..K and K + 1 is the
/// absorbing (masked) symbol.
using Category = std::int32_t;

struct CategoricalKernelConfig {
  CategoricalKernelConfig(double w, int categories, NoiseSchedule schedule);

  double w;
  int categories;  // K
  NoiseSchedule schedule;

  Category absorbing() const noexcept { return categories + 1; }
};

/// One probability row per element. Width is K (denoiser output) or K + 1
/// (transition distribution including the absorbing symbol).
template <typename T>
class SimplexArray {
 public:
  SimplexArray() = default;
  SimplexArray(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  SimplexArray(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) throw ShapeError("simplex array size mismatch");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<T> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  T& at(std::size_t i, std::size_t k) { return values_[i * cols_ + k]; }
  const T& at(std::size_t i, std::size_t k) const { return values_[i * cols_ + k]; }
  const std::vector<T>& values() const noexcept { return values_; }

  /// Throws DomainError if any row has a negative entry or does not sum to 1.
  void check(double tol = 1e-6) const {
    for (std::size_t i = 0; i < rows_; ++i) {
      double sum = 0.0;
      for (const T& p : row(i)) {
        if (!(p >= T(0))) throw DomainError("simplex row has a negative entry");
        sum += static_cast<double>(p);
      }
      if (std::abs(sum - 1.0) > tol) {
        throw DomainError("simplex row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
      }
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

/// Each element independently becomes K + 1 with probability beta.
std::vector<Category> forward_noise_cat(std::span<const Category> z, int categories,
                                        double beta, Rng& rng);

/// b = (beta_next - w beta_t) / (1 - w beta_t); throws ScheduleError unless
/// beta_next >= w beta_t and w beta_t < 1.
double annealed_b(double beta_t, double beta_next, double w);

/// Constant-noise value beta (1 - w) / (1 - w beta).
double equilibrium_b(double beta, double w);

double step_b(const CategoricalKernelConfig& config, std::size_t t);

namespace detail {
inline void check_state(std::span<const Category> x, int categories, bool allow_absorbing) {
  const Category hi = allow_absorbing ? categories + 1 : categories;
  for (Category v : x) {
    if (v < 1 || v > hi) {
      throw DomainError("category " + std::to_string(v) + " outside 1.." +
                        std::to_string(hi));
    }
  }
}
}  // namespace detail

/// Mixture (1-b) w 1_x + (1-b)(1-w) f + b 1_{K+1}, one row per element.
template <typename T>
SimplexArray<T> transition_probs_cat(std::span<const Category> x,
                                     const SimplexArray<T>& denoised, double b,
                                     double w) {
  if (denoised.rows() != x.size()) throw ShapeError("transition_probs_cat: row count mismatch");
  const std::size_t k = denoised.cols();
  detail::check_state(x, static_cast<int>(k), true);
  SimplexArray<T> out(x.size(), k + 1);
  const double stay = (1.0 - b) * w;
  const double fresh = (1.0 - b) * (1.0 - w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto f = denoised.row(i);
    auto r = out.row(i);
    for (std::size_t c = 0; c < k; ++c) r[c] = static_cast<T>(fresh * f[c]);
    r[k] = static_cast<T>(b);
    r[x[i] - 1] += static_cast<T>(stay);
  }
  return out;
}

/// Same mixture with the denoiser replaced by the clean value z.
template <typename T = double>
SimplexArray<T> conditional_transition_probs_cat(std::span<const Category> z,
                                                 std::span<const Category> x,
                                                 int categories, double b, double w) {
  if (z.size() != x.size()) throw ShapeError("conditional_transition_probs_cat: size mismatch");
  detail::check_state(z, categories, false);
  detail::check_state(x, categories, true);
  SimplexArray<T> out(x.size(), categories + 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto r = out.row(i);
    r[categories] += static_cast<T>(b);
    r[x[i] - 1] += static_cast<T>((1.0 - b) * w);
    r[z[i] - 1] += static_cast<T>((1.0 - b) * (1.0 - w));
  }
  return out;
}

/// Sum_i log probs[i][y_i]. Throws ImpossibleTransition when a selected
/// probability is zero.
template <typename T>
double transition_logprob_cat(std::span<const Category> y, const SimplexArray<T>& probs) {
  if (probs.rows() != y.size()) throw ShapeError("transition_logprob_cat: row count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 1 || static_cast<std::size_t>(y[i]) > probs.cols()) {
      throw DomainError("transition_logprob_cat: category out of range");
    }
    const double p = probs.at(i, y[i] - 1);
    if (!(p > 0.0)) {
      throw ImpossibleTransition("element " + std::to_string(i) + " has zero probability of category " +
                                 std::to_string(y[i]));
    }
    total += std::log(p);
  }
  return total;
}

template <typename T>
std::vector<Category> sample_cat(const SimplexArray<T>& probs, Rng& rng) {
  std::vector<Category> y(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = r.size() - 1;
    // Fall back to the last positive entry if rounding leaves u above the sum.
    while (pick > 0 && !(r[pick] > T(0))) --pick;
    for (std::size_t c = 0; c < r.size(); ++c) {
      acc += static_cast<double>(r[c]);
      if (u < acc) {
        pick = c;
        break;
      }
    }
    y[i] = static_cast<Category>(pick + 1);
  }
  return y;
}

/// Categorical inpainting: rows where mask == 0 become one-hot at the
/// observed value.
template <typename T>
SimplexArray<T> pin_observed_rows(const SimplexArray<T>& denoised,
                                  std::span<const Category> observed,
                                  std::span<const std::uint8_t> mask) {
  if (observed.size() != denoised.rows() || mask.size() != denoised.rows()) {
    throw ShapeError("pin_observed_rows: size mismatch");
  }
  detail::check_state(observed, static_cast<int>(denoised.cols()), false);
  SimplexArray<T> out = denoised;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw DomainError("inpaint mask entries must be 0 or 1");
    if (mask[i] == 0) {
      auto r = out.row(i);
      for (auto& p : r) p = T(0);
      r[observed[i] - 1] = T(1);
    }
  }
  return out;
}

}  // namespace nkca
