#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nkca {

enum class KernelKind { continuous, categorical };

const char* to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Noise levels beta_0..beta_T. For continuous kernels alpha_t = 1 - beta_t.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, KernelKind kind);

  /// beta_t = beta_start + (t / T) (beta_end - beta_start), t = 0..T.
  static NoiseSchedule linear(std::size_t steps, double beta_start,
                              double beta_end, KernelKind kind);
  /// T + 1 copies of the same level.
  static NoiseSchedule constant(std::size_t steps, double beta, KernelKind kind);

  const std::vector<double>& betas() const noexcept { return betas_; }
  KernelKind kind() const noexcept { return kind_; }
  /// Number of transitions T.
  std::size_t steps() const noexcept { return betas_.size() - 1; }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha(std::size_t t) const { return 1.0 - betas_.at(t); }

  bool is_monotone_non_increasing() const;

  /// Throws ScheduleError naming the first t where the transition from t to
  /// t + 1 is invalid for previous-state weight `w`:
  /// continuous needs beta_{t+1} > w^2 beta_t, categorical needs
  /// beta_{t+1} >= w beta_t.
  void validate_for(double w) const;

 private:
  std::vector<double> betas_;
  KernelKind kind_;
};

}  // namespace nkca
