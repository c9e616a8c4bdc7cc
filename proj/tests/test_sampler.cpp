#include <doctest.h>

#include <set>

#include "nkca/exact_posterior.hpp"
#include "nkca/sampler.hpp"
#include "support.hpp"

using namespace nkca;

namespace {

ExactPosteriorDenoiser<float> gaussian_1d(double m0, double v0) {
  return ExactPosteriorDenoiser<float>(GaussianMixture({1.0}, {{m0}}, {{v0}}));
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("equilibrium steps preserve the noisy marginal") {
    const double m0 = 0.4, v0 = 0.1, beta = 0.3;
    const auto d = gaussian_1d(m0, v0);
    const NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    const std::size_t n = 100'000;
    Rng rng(21);
    ChainState s;
    s.x.resize(n, 1);
    s.beta = beta;
    for (std::size_t i = 0; i < n; ++i) {
      s.rngs.push_back(rng.split(i));
      const double z = m0 + std::sqrt(v0) * rng.normal();
      s.x(static_cast<Eigen::Index>(i), 0) = static_cast<float>((1 - beta) * z + std::sqrt(beta) * rng.normal());
    }
    chain_step(s, d, kernel, beta);
    chain_step(s, d, kernel, beta);
    const double alpha = 1 - beta;
    const double mean = s.x.cast<double>().mean();
    const double var = (s.x.cast<double>().array() - mean).square().sum() / (n - 1);
    const double target_var = alpha * alpha * v0 + beta;
    CHECK(std::abs(mean - alpha * m0) < 4.0 * std::sqrt(target_var / n));
    CHECK(std::abs(var / target_var - 1.0) < 0.02);
  }

  TEST_CASE("invalid steps are rejected before sampling") {
    const auto d = gaussian_1d(0.0, 1.0);
    ChainState s;
    s.x = Batch<float>::Zero(2, 1);
    s.beta = 1.0;
    s.rngs = {Rng(1), Rng(2)};
    CHECK_THROWS_AS(chain_step(s, d, NoiseKernel{KernelKind::continuous, 0.5, 0}, 0.2), ScheduleError);
    CHECK(s.x(0, 0) == 0.0f);
  }

  TEST_CASE("synthesis does not depend on batching") {
    const auto d = gaussian_1d(0.2, 0.05);
    const NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    const auto sched = NoiseSchedule::linear(20, 1.0, 0.05, KernelKind::continuous);
    const auto four = synthesize(d, kernel, sched, 4, 77);
    const auto one = synthesize(d, kernel, sched, 1, 77);
    CHECK(four.row(0) == one.row(0));
    CHECK(four.row(1) != four.row(0));
    CHECK(synthesize(d, kernel, sched, 4, 77) == four);
  }

  TEST_CASE("learned denoisers sample independently of batching") {
    const auto model = test::tiny_stripes_model();
    const NoiseKernel kernel = model.kernel();
    const auto sched = NoiseSchedule::linear(10, 1.0, 0.05, KernelKind::continuous);
    const auto many = synthesize(*model.denoiser, kernel, sched, 37, 5);
    const auto one = synthesize(*model.denoiser, kernel, sched, 1, 5);
    CHECK(many.row(0) == one.row(0));
    const std::vector<float> z0(many.row(3).data(), many.row(3).data() + many.cols());
    const auto all = variants(z0, 0.2, 5, 8, *model.denoiser, kernel, 9);
    const std::uint64_t pick[] = {sub_seed(9, 7)};
    CHECK(variants_from_sub_seeds(z0, 0.2, 5, pick, *model.denoiser, kernel).row(0) == all.row(7));
  }

  TEST_CASE("categorical synthesis starts absorbed and ends clean") {
    ExactPosteriorDenoiser<float> d(CategoricalDataModel(2, 2, {0.1, 0.2, 0.3, 0.4}));
    const NoiseKernel kernel{KernelKind::categorical, 0.95, 2};
    const auto sched = NoiseSchedule::linear(50, 1.0, 0.5, KernelKind::categorical);
    bool first = true;
    const auto out = synthesize(d, kernel, sched, 8, 3,
                                [&](std::size_t, std::size_t, double, const Batch<float>& x, const Batch<float>&) {
                                  if (first) {
                                    CHECK((x.array() == 3.0f).all());
                                    first = false;
                                  }
                                });
    CHECK((out.array() >= 1.0f).all());
    CHECK((out.array() <= 2.0f).all());
  }

  TEST_CASE("variants are reproducible from their sub-seeds") {
    const auto d = gaussian_1d(0.0, 0.5);
    const NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    const std::vector<float> z0{0.3f};
    const auto all = variants(z0, 0.2, 10, 8, d, kernel, 5);
    const std::vector<std::uint64_t> pick{sub_seed(5, 6), sub_seed(5, 2)};
    const auto again = variants_from_sub_seeds(z0, 0.2, 10, pick, d, kernel);
    CHECK(again.row(0) == all.row(6));
    CHECK(again.row(1) == all.row(2));
    std::set<float> distinct;
    for (Eigen::Index i = 0; i < all.rows(); ++i) distinct.insert(all(i, 0));
    CHECK(distinct.size() == 8);
  }

  TEST_CASE("inpainting keeps observed elements exactly") {
    const auto model = test::tiny_stripes_model();
    const auto& d = *model.denoiser;
    const NoiseKernel kernel = model.kernel();
    const auto sched = NoiseSchedule::linear(20, 1.0, 0.05, KernelKind::continuous);
    std::vector<float> observed(d.dim());
    Rng rng(1);
    for (auto& v : observed) v = static_cast<float>(rng.uniform() * 2 - 1);

    const InpaintCondition none{observed, std::vector<std::uint8_t>(d.dim(), 0)};
    CHECK(inpaint(none, d, kernel, sched, 4) == observed);

    std::vector<std::uint8_t> mask(d.dim(), 0);
    for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
    const auto out = inpaint({observed, mask}, d, kernel, sched, 4);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (mask[i] == 0) CHECK(out[i] == observed[i]);
      else changed += out[i] != observed[i];
    }
    CHECK(changed > 0);
    CHECK(inpaint({observed, mask}, d, kernel, sched, 4) == out);
  }

  TEST_CASE("categorical inpainting keeps observed elements") {
    ExactPosteriorDenoiser<float> d(CategoricalDataModel(2, 2, {0.1, 0.2, 0.3, 0.4}));
    const NoiseKernel kernel{KernelKind::categorical, 0.95, 2};
    const auto sched = NoiseSchedule::linear(50, 1.0, 0.5, KernelKind::categorical);
    const InpaintCondition c{{2.0f, 1.0f}, {0, 1}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto out = inpaint(c, d, kernel, sched, seed);
      CHECK(out[0] == 2.0f);
      CHECK((out[1] == 1.0f || out[1] == 2.0f));
    }
  }

  TEST_CASE("mask entries other than zero and one are rejected") {
    const auto d = gaussian_1d(0.0, 1.0);
    const auto sched = NoiseSchedule::linear(5, 1.0, 0.1, KernelKind::continuous);
    CHECK_THROWS(inpaint({{0.1f}, {2}}, d, NoiseKernel{KernelKind::continuous, 0.5, 0}, sched, 1));
  }
}
