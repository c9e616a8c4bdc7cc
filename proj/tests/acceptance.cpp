#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nkca/cli.hpp"
#include "nkca/npy.hpp"
#include "nkca/oracle.hpp"
#include "nkca/sampler.hpp"
#include "nkca/tabular_denoiser.hpp"
#include "nkca/validation.hpp"
#include "support.hpp"

using namespace nkca;

namespace {

constexpr std::uint64_t kSeed = 20251015;

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome from_checks(const std::vector<CheckResult>& checks) {
  Outcome o;
  std::ostringstream s;
  for (const auto& c : checks) {
    o.pass = o.pass && c.pass;
    if (!s.str().empty()) s << "; ";
    s << c.check << " " << c.statistic << (c.pass ? " ok" : " FAILED") << " vs " << c.threshold;
  }
  o.detail = s.str();
  return o;
}

TensorMap<double> to_double(const TensorMap<float>& p) {
  TensorMap<double> d;
  for (const auto& [name, a] : p) d.emplace(name, a.cast<double>());
  return d;
}

Outcome learned_stationarity() {
  const auto model = categorical_toy_model(kSeed);
  const auto data = categorical_toy(100'000, kSeed);
  const NoiseKernel kernel{KernelKind::categorical, 0.95, 3};
  DenoiserSpec spec;
  spec.type = "tabular";
  spec.kind = KernelKind::categorical;
  spec.dim = 2;
  spec.categories = 3;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 64;
  cfg.total_steps = 20'000;
  cfg.beta_min = cfg.beta_max = 0.5;
  cfg.seed = kSeed;
  cfg.log_every = 0;
  const auto ckpt = train(cfg, data, spec, kernel);
  const auto target = model.noisy_marginal(0.5);

  struct Eval {
    double tv, db;
  };
  auto eval = [&](const TensorMap<float>& p) {
    TabularDenoiser<double> d(2, 3, to_double(p));
    const auto P = build_transition_matrix(kernel, d, 0.5);
    const auto pi = stationary_distribution(P.P);
    return Eval{tv_distance(pi, target), detailed_balance_residual(target, P.P)};
  };
  const Eval init = eval(initial_parameters(spec, kSeed));
  const Eval learned = eval(ckpt.ema_parameters());
  const double reduction = init.db / learned.db;
  std::ostringstream s;
  s << "tv " << learned.tv << " vs 0.05; db init " << init.db << " learned " << learned.db << " reduction "
    << reduction << "x vs 10x";
  return {learned.tv <= 0.05 && reduction >= 10.0, s.str()};
}

Outcome end_to_end_synthesis() {
  const RunConfig cfg = load_run_config(std::filesystem::path(NKCA_SOURCE_DIR) / "configs" / "gmm2d.toml");
  const Dataset data = load_dataset(cfg);
  DenoiserSpec spec = cfg.denoiser;
  spec.dim = data.dim();
  const auto ckpt = train(cfg.train, data, spec, cfg.kernel);
  const auto denoiser = make_denoiser<float>(spec, ckpt.ema_parameters());
  const std::size_t n = 5000;
  const auto samples = synthesize(*denoiser, cfg.kernel, NoiseSchedule::linear(100, 1.0, 0.01, KernelKind::continuous),
                                  n, sub_seed(cfg.seed, 1));
  const auto held = eight_gaussians(2 * n, sub_seed(cfg.seed, 2));
  Eigen::MatrixXd a(n, 2), b(n, 2), c(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (int d = 0; d < 2; ++d) {
      a(i, d) = samples(static_cast<Eigen::Index>(i), d);
      b(i, d) = held.continuous_example(i)[d];
      c(i, d) = held.continuous_example(n + i)[d];
    }
  }
  const double ed = energy_distance(a, b, EnergyEstimator::v_statistic);
  const double base = energy_distance(b, c, EnergyEstimator::v_statistic);
  const auto mixture = eight_gaussians_model();
  double worst_mode = 1.0;
  for (std::size_t k = 0; k < mixture.means.size(); ++k) {
    const double radius = 3.0 * std::sqrt(mixture.variances[k][0]);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      hits += std::hypot(a(i, 0) - mixture.means[k][0], a(i, 1) - mixture.means[k][1]) <= radius;
    }
    worst_mode = std::min(worst_mode, static_cast<double>(hits) / n);
  }
  std::ostringstream s;
  s << "energy " << ed << " baseline " << base << " ratio " << ed / base << " vs 2; least-visited mode " << worst_mode
    << " vs 0.02";
  return {ed <= 2.0 * base && worst_mode >= 0.02, s.str()};
}

Outcome inpainting_contract() {
  const ExactPosteriorDenoiser<float> d(GaussianMixture({0.5, 0.5}, {{-0.5, 0.4}, {0.5, -0.2}}, {{0.05, 0.1}, {0.05, 0.1}}));
  const NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
  Outcome o;
  std::ostringstream s;

  const InpaintCondition cond{{0.8f, -0.6f}, {0, 1}};
  bool exact = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = inpaint(cond, d, kernel, NoiseSchedule::linear(100, 1.0, 0.01, KernelKind::continuous), seed);
    exact = exact && std::memcmp(&out[0], &cond.observed[0], sizeof(float)) == 0;
  }
  s << "unmasked exact " << (exact ? "yes" : "no");
  o.pass = exact;

  const double beta = 0.3, alpha = 1.0 - beta;
  const auto trace = constant_level_trace(cond, d, kernel, beta, 200, 4000, kSeed);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 100; t < trace.size(); ++t) {
    for (Eigen::Index i = 0; i < trace[t].rows(); ++i) {
      const double v = trace[t](i, 0);
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  const double mean_err = std::abs(mean / (alpha * cond.observed[0]) - 1.0);
  const double var_err = std::abs(var / beta - 1.0);
  s << "; tail mean rel err " << mean_err << ", variance rel err " << var_err << " vs 0.05";
  o.pass = o.pass && mean_err <= 0.05 && var_err <= 0.05;
  o.detail = s.str();
  return o;
}

Outcome determinism() {
  test::TempDir dir("acceptance");
  const auto cfg = (dir / "run.json").string();
  std::ofstream(cfg) << R"({
    "seed": 31,
    "kernel": {"kind": "continuous", "w": 0.5},
    "schedule": {"steps": 50, "beta_start": 1.0, "beta_end": 0.01},
    "denoiser": {"type": "mlp", "hidden": [64, 64], "embedding_dim": 16},
    "train": {"learning_rate": 0.001, "batch_size": 32, "steps": 300, "log_every": 0},
    "dataset": {"generator": "stripes", "count": 256, "side": 8, "seed": 2}
  })";
  auto pipeline = [&](const std::string& tag) {
    std::ostringstream out, err;
    const auto root = dir / tag;
    if (cli_main({"train", "--config", cfg, "-o", (root / "train").string()}, out, err) != 0) throw Error(err.str());
    if (cli_main({"sample", "--ckpt", (root / "train" / "model.ckpt").string(), "-n", "16", "-o", (root / "s").string()},
                 out, err) != 0) {
      throw Error(err.str());
    }
    return std::pair{load_checkpoint(root / "train" / "model.ckpt"), npy::read(root / "s" / "sample.npy")};
  };
  const auto [ck1, s1] = pipeline("a");
  const auto [ck2, s2] = pipeline("b");
  const bool same_ckpt = serialize_checkpoint(ck1) == serialize_checkpoint(ck2);
  const bool same_samples = s1.shape == s2.shape && s1.values == s2.values;
  const auto bytes = serialize_checkpoint(ck1);
  const bool round_trip = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes && deserialize_checkpoint(bytes) == ck1;
  std::ostringstream s;
  s << "checkpoints identical " << same_ckpt << ", samples identical " << same_samples << ", round trip " << round_trip;
  return {same_ckpt && same_samples && round_trip, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::ofstream report;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") {
      strict = true;
    } else if (arg == "--report" && i + 1 < argc) {
      report.open(argv[++i]);
    } else {
      std::cerr << "usage: nkca_acceptance [--strict] [--report FILE]\n";
      return 2;
    }
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (report.is_open()) report << line << std::endl;
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"linear-gaussian marginal", [] { return from_checks(check_linear_gaussian_marginal(kSeed)); }},
      {"continuous detailed balance", [] { return from_checks(check_continuous_detailed_balance()); }},
      {"categorical flow identity", [] { return from_checks(check_categorical_flow_identity()); }},
      {"marginal condition on default schedules", [] { return from_checks(check_marginal_conditions(kSeed)); }},
      {"exact kernel stationarity", [] { return from_checks(check_exact_stationarity(kSeed)); }},
      {"learned kernel stationarity", learned_stationarity},
      {"gradient correctness", [] { return from_checks(check_contrastive_gradients(kSeed)); }},
      {"score identity", [] { return from_checks(check_score_identity(kSeed)); }},
      {"end-to-end continuous synthesis", end_to_end_synthesis},
      {"inpainting contract", inpainting_contract},
      {"determinism", determinism},
  };
  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << " (" << std::fixed
         << std::setprecision(1) << secs << " s) " << std::defaultfloat << std::setprecision(6) << o.detail;
    emit(line.str());
  }
  emit(std::to_string(criteria.size() - failed) + "/" + std::to_string(criteria.size()) + " criteria passed");
  return strict && failed > 0 ? 1 : 0;
}
