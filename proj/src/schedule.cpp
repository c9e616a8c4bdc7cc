#include "nkca/schedule.hpp"

#include <cmath>
#include <sstream>

#include "nkca/error.hpp"

namespace nkca {

const char* to_string(KernelKind kind) {
  return kind == KernelKind::continuous ? "continuous" : "categorical";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "continuous") return KernelKind::continuous;
  if (name == "categorical") return KernelKind::categorical;
  throw ConfigError("unknown kernel kind '" + name +
                    "' (expected continuous or categorical)");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, KernelKind kind)
    : betas_(std::move(betas)), kind_(kind) {
  if (betas_.empty()) throw ScheduleError("schedule needs at least one level");
  for (std::size_t t = 0; t < betas_.size(); ++t) {
    const double b = betas_[t];
    if (!(b > 0.0 && b <= 1.0)) {
      std::ostringstream msg;
      msg << "noise level beta_" << t << " = " << b << " outside (0, 1]";
      throw ScheduleError(msg.str(), static_cast<std::ptrdiff_t>(t));
    }
  }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start,
                                    double beta_end, KernelKind kind) {
  if (steps == 0) throw ScheduleError("linear schedule needs T >= 1");
  std::vector<double> betas(steps + 1);
  const double span = beta_end - beta_start;
  for (std::size_t t = 0; t <= steps; ++t) {
    betas[t] = beta_start + span * static_cast<double>(t) / static_cast<double>(steps);
  }
  betas.back() = beta_end;
  return NoiseSchedule(std::move(betas), kind);
}

NoiseSchedule NoiseSchedule::constant(std::size_t steps, double beta,
                                      KernelKind kind) {
  return NoiseSchedule(std::vector<double>(steps + 1, beta), kind);
}

bool NoiseSchedule::is_monotone_non_increasing() const {
  for (std::size_t t = 0; t + 1 < betas_.size(); ++t) {
    if (betas_[t + 1] > betas_[t]) return false;
  }
  return true;
}

void NoiseSchedule::validate_for(double w) const {
  if (!(w > 0.0 && w < 1.0)) {
    throw ScheduleError("previous-state weight w must lie in (0, 1), got " +
                        std::to_string(w));
  }
  for (std::size_t t = 0; t + 1 < betas_.size(); ++t) {
    const double cur = betas_[t];
    const double next = betas_[t + 1];
    const bool ok = kind_ == KernelKind::continuous ? next > w * w * cur
                                                    : next >= w * cur;
    if (!ok) {
      std::ostringstream msg;
      msg << "invalid schedule at t=" << t << ": beta_" << t + 1 << " = "
          << next
          << (kind_ == KernelKind::continuous ? " must exceed w^2 * beta_"
                                              : " must be >= w * beta_")
          << t << " = "
          << (kind_ == KernelKind::continuous ? w * w * cur : w * cur);
      throw ScheduleError(msg.str(), static_cast<std::ptrdiff_t>(t));
    }
  }
}

}  // namespace nkca
