#include <doctest.h>

#include "nkca/tabular_denoiser.hpp"
#include "nkca/trainer.hpp"
#include "nkca/validation.hpp"
#include "support.hpp"

using namespace nkca;

TEST_SUITE("trainer") {
  TEST_CASE("adam matches a hand trace") {
    TensorMap<float> p;
    p["w"] = BasicArray<float>({1}, {0.5f});
    auto state = AdamState::zeros_like(p);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    const double expected[] = {0.4900000009999999, 0.4936610360388489, 0.4902286253947743};
    const float grads[] = {0.1f, -0.2f, 0.3f};
    for (int i = 0; i < 3; ++i) {
      TensorMap<float> g;
      g["w"] = BasicArray<float>({1}, {grads[i]});
      adam_update(p, g, state, cfg);
      CHECK(p["w"].storage()[0] == doctest::Approx(expected[i]).epsilon(1e-6));
    }
    CHECK(state.step == 3);
    const auto restored = AdamState::from_tensors(state.to_tensors(), p);
    CHECK(restored.step == 3);
    CHECK(restored.m == state.m);
  }

  TEST_CASE("ema update") {
    TensorMap<float> ema, p;
    ema["w"] = BasicArray<float>({2}, {1.0f, 0.0f});
    p["w"] = BasicArray<float>({2}, {0.0f, 1.0f});
    ema_update(ema, p, 0.9);
    CHECK(ema["w"].storage()[0] == doctest::Approx(0.9));
    CHECK(ema["w"].storage()[1] == doctest::Approx(0.1));
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = -1;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.beta_min = 0.6;
    cfg.beta_max = 0.4;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
    CHECK(objective_from_string("reconstruction") == Objective::reconstruction);
    CHECK_THROWS(objective_from_string("kl"));
  }

  TEST_CASE("contrastive gradients match finite differences") {
    for (const auto& r : check_contrastive_gradients(17)) {
      INFO(r.check << " " << r.statistic);
      CHECK(r.pass);
    }
  }

  TEST_CASE("one step decreases the loss on fixed pairs") {
    const auto data = categorical_toy(256, 5);
    NoiseKernel kernel{KernelKind::categorical, 0.95, 3};
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 64;
    cfg.beta_min = cfg.beta_max = 0.5;
    double total_change = 0.0;
    int decreased = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto params = TabularDenoiser<double>::init(2, 3);
      TabularDenoiser<double> model(2, 3, params);
      Rng rng(seed);
      Batch<double> z(64, 2);
      for (Eigen::Index i = 0; i < 64; ++i) {
        const auto ex = data.categorical_example(rng.below(data.size()));
        z(i, 0) = ex[0];
        z(i, 1) = ex[1];
      }
      const auto pairs = draw_contrastive_pairs<double>(z, model, kernel, cfg, rng);
      auto grads = zeros_like(params);
      const double before = contrastive_loss<double>(model, kernel, pairs, &grads);
      auto fparams = cast_tensors<float>(params);
      auto state = AdamState::zeros_like(fparams);
      adam_update(fparams, cast_tensors<float>(grads), state, cfg);
      TabularDenoiser<double> stepped(2, 3, cast_tensors<double>(fparams));
      const double after = contrastive_loss<double>(stepped, kernel, pairs, nullptr);
      total_change += after - before;
      if (after < before) ++decreased;
    }
    CHECK(total_change < 0.0);
    CHECK(decreased > 50);
  }

  TEST_CASE("training is deterministic and records metrics") {
    const Dataset data = eight_gaussians(256, 1);
    NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    DenoiserSpec spec;
    spec.dim = 2;
    spec.hidden = {16};
    spec.embedding_dim = 8;
    TrainConfig cfg;
    cfg.total_steps = 30;
    cfg.batch_size = 32;
    cfg.learning_rate = 1e-3;
    cfg.log_every = 10;
    cfg.seed = 12;
    std::vector<nlohmann::json> records;
    TrainOptions opt;
    opt.metrics = [&](const nlohmann::json& r) { records.push_back(r); };
    const auto a = train(cfg, data, spec, kernel, opt);
    const auto b = train(cfg, data, spec, kernel);
    CHECK(checkpoint_digest(a) == checkpoint_digest(b));
    CHECK(records.size() == 3);
    CHECK(records.back()["step"] == 30);
    CHECK(a.parameters() != a.ema_parameters());
    cfg.seed = 13;
    CHECK(checkpoint_digest(train(cfg, data, spec, kernel)) != checkpoint_digest(a));
  }

  TEST_CASE("reconstruction objective trains") {
    const Dataset data = eight_gaussians(256, 1);
    NoiseKernel kernel{KernelKind::continuous, 0.5, 0};
    DenoiserSpec spec;
    spec.dim = 2;
    spec.hidden = {16};
    spec.embedding_dim = 8;
    TrainConfig cfg;
    cfg.total_steps = 200;
    cfg.batch_size = 64;
    cfg.learning_rate = 1e-2;
    cfg.log_every = 20;
    cfg.objective = Objective::reconstruction;
    std::vector<double> losses;
    TrainOptions opt;
    opt.metrics = [&](const nlohmann::json& r) { losses.push_back(r["loss"]); };
    train(cfg, data, spec, kernel, opt);
    REQUIRE(losses.size() == 10);
    CHECK(losses.back() < losses.front());
  }

  TEST_CASE("kind mismatch between dataset and kernel is rejected") {
    const Dataset data = categorical_toy(16, 1);
    DenoiserSpec spec;
    spec.dim = 2;
    TrainConfig cfg;
    cfg.total_steps = 1;
    CHECK_THROWS(train(cfg, data, spec, NoiseKernel{KernelKind::continuous, 0.5, 0}));
  }
}
