#include "nkca/kernel_categorical.hpp"

#include <sstream>

namespace nkca {

CategoricalKernelConfig::CategoricalKernelConfig(double w_, int categories_,
                                                 NoiseSchedule schedule_)
    : w(w_), categories(categories_), schedule(std::move(schedule_)) {
  if (categories < 2) throw ConfigError("categorical kernel needs K >= 2");
  if (schedule.kind() != KernelKind::categorical) {
    throw ConfigError("categorical kernel needs a categorical schedule");
  }
  schedule.validate_for(w);
}

std::vector<Category> forward_noise_cat(std::span<const Category> z, int categories,
                                        double beta, Rng& rng) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw DomainError("forward_noise_cat: beta must lie in [0, 1]");
  }
  for (Category v : z) {
    if (v == categories + 1) {
      throw DomainError("forward_noise_cat: clean data contains the absorbing symbol");
    }
  }
  detail::check_state(z, categories, false);
  std::vector<Category> x(z.begin(), z.end());
  for (auto& v : x) {
    if (rng.uniform() < beta) v = static_cast<Category>(categories + 1);
  }
  return x;
}

double annealed_b(double beta_t, double beta_next, double w) {
  const double denom = 1.0 - w * beta_t;
  if (!(denom > 0.0)) {
    throw ScheduleError("annealed_b: w * beta_t must be below 1");
  }
  if (!(beta_next >= w * beta_t)) {
    std::ostringstream msg;
    msg << "schedule step invalid: beta_next = " << beta_next
        << " must be >= w * beta_t = " << w * beta_t;
    throw ScheduleError(msg.str());
  }
  const double b = (beta_next - w * beta_t) / denom;
  if (b > 1.0) throw ScheduleError("annealed_b: beta_next must not exceed 1");
  return b;
}

double equilibrium_b(double beta, double w) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("equilibrium_b: beta outside (0, 1]");
  return beta * (1.0 - w) / (1.0 - w * beta);
}

double step_b(const CategoricalKernelConfig& config, std::size_t t) {
  const auto& s = config.schedule;
  try {
    return annealed_b(s.beta(t), s.beta(t + 1), config.w);
  } catch (const ScheduleError& e) {
    throw ScheduleError(std::string(e.what()) + " at t=" + std::to_string(t),
                        static_cast<std::ptrdiff_t>(t));
  }
}

}  // namespace nkca
