#include "nkca/kernel_continuous.hpp"

#include <sstream>

namespace nkca {

ContinuousKernelConfig::ContinuousKernelConfig(double w_, NoiseSchedule schedule_)
    : w(w_), schedule(std::move(schedule_)) {
  if (schedule.kind() != KernelKind::continuous) {
    throw ConfigError("continuous kernel needs a continuous schedule");
  }
  schedule.validate_for(w);
}

KernelCoeffs annealed_coeffs(double beta_t, double beta_next, double alpha_t,
                             double alpha_next, double w) {
  const double b = beta_next - w * w * beta_t;
  if (!(b > 0.0)) {
    std::ostringstream msg;
    msg << "schedule step invalid: beta_next = " << beta_next
        << " must exceed w^2 * beta_t = " << w * w * beta_t;
    throw ScheduleError(msg.str());
  }
  return {alpha_next - w * alpha_t, b};
}

KernelCoeffs equilibrium_coeffs(double beta, double alpha, double w) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw DomainError("equilibrium_coeffs: beta must lie in (0, 1]");
  }
  return {(1.0 - w) * alpha, (1.0 - w * w) * beta};
}

KernelCoeffs step_coeffs(const ContinuousKernelConfig& config, std::size_t t) {
  const auto& s = config.schedule;
  try {
    return annealed_coeffs(s.beta(t), s.beta(t + 1), s.alpha(t), s.alpha(t + 1),
                           config.w);
  } catch (const ScheduleError& e) {
    throw ScheduleError(std::string(e.what()) + " at t=" + std::to_string(t),
                        static_cast<std::ptrdiff_t>(t));
  }
}

}  // namespace nkca
