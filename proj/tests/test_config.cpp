#include <doctest.h>

#include "support.hpp"

using namespace nkca;

TEST_SUITE("config") {
  TEST_CASE("defaults per kernel kind") {
    const auto c = default_run_config(KernelKind::continuous);
    CHECK(c.kernel.w == 0.5);
    CHECK(c.schedule.steps == 100);
    CHECK(c.schedule.beta_end == 0.01);
    CHECK(c.variants.beta == 0.2);
    CHECK(c.variants.n == 8);
    CHECK(c.inpaint.tile == 16);
    CHECK(c.train.learning_rate == 1e-4);
    CHECK(c.train.ema_decay == 0.999);
    const auto k = default_run_config(KernelKind::categorical);
    CHECK(k.kernel.w == 0.95);
    CHECK(k.schedule.steps == 500);
    CHECK(k.schedule.beta_end == 0.5);
  }

  TEST_CASE("TOML and JSON give the same config") {
    const std::string toml = R"(
seed = 9
[kernel]
kind = "categorical"
w = 0.9
categories = 3
[schedule]
steps = 50
beta_start = 1.0
beta_end = 0.6
[denoiser]
type = "tabular"
[train]
learning_rate = 0.01
steps = 10
[dataset]
generator = "categorical_toy"
count = 100
)";
    const RunConfig a = parse_run_config(toml);
    CHECK(a.seed == 9);
    CHECK(a.train.seed == 9);
    CHECK(a.kernel.categories == 3);
    CHECK(a.inpaint.schedule.steps == 50);
    const RunConfig b = parse_run_config(a.to_json().dump());
    CHECK(b.to_json() == a.to_json());
  }

  TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_run_config("[kernel]\nkind = \"continuous\"\nwidth = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous"}, "extra": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[kernel\n"), ConfigError);
  }

  TEST_CASE("invalid schedules report the step") {
    const std::string toml = R"(
[kernel]
kind = "continuous"
[schedule]
steps = 2
beta_start = 1.0
beta_end = 0.1
[dataset]
generator = "eight_gaussians"
)";
    try {
      parse_run_config(toml);
      FAIL("expected ScheduleError");
    } catch (const ScheduleError& e) {
      CHECK(e.step() == 1);
      CHECK(std::string(e.what()).find("schedule") != std::string::npos);
    }
  }

  TEST_CASE("cross-field validation") {
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous"}, "dataset": {"generator": "categorical_toy"}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous"}, "denoiser": {"type": "tabular"},
                                        "dataset": {"generator": "eight_gaussians"}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous", "w": 1.5}, "dataset": {"generator": "stripes"}})"),
                    Error);
    CHECK_THROWS_AS(parse_run_config(R"({"kernel": {"kind": "continuous"}, "variants": {"beta": 0},
                                        "dataset": {"generator": "stripes"}})"),
                    ConfigError);
  }

  TEST_CASE("shipped configs load") {
    for (const char* name : {"gmm2d.toml", "categorical-toy.toml", "cifar-toy.toml", "stripes.toml"}) {
      INFO(name);
      CHECK_NOTHROW(load_run_config(std::filesystem::path(NKCA_SOURCE_DIR) / "configs" / name));
    }
    const auto g = load_run_config(std::filesystem::path(NKCA_SOURCE_DIR) / "configs" / "gmm2d.toml");
    CHECK(g.kernel.w == 0.5);
    CHECK(g.schedule.steps == 100);
    const auto c = load_run_config(std::filesystem::path(NKCA_SOURCE_DIR) / "configs" / "categorical-toy.toml");
    CHECK(c.kernel.w == 0.95);
    CHECK(c.schedule.steps == 500);
  }

  TEST_CASE("generators") {
    const auto g = eight_gaussians(1000, 1);
    CHECK(g.example_shape() == Shape{2});
    for (float v : g.continuous_values()) CHECK(std::abs(v) <= 1.0f);
    CHECK(eight_gaussians(10, 1) == eight_gaussians(10, 1));
    const auto c = categorical_toy(50, 2);
    CHECK(c.categories() == 3);
    CHECK(c.dim() == 2);
    const auto s = stripes(4, 6, 3);
    CHECK(s.example_shape() == Shape{6, 6, 1});
  }

  TEST_CASE("image conversion and masks follow the model shape") {
    const auto model = test::tiny_stripes_model(2);
    REQUIRE(model.example_shape == Shape{8, 8, 1});
    std::vector<float> v(64);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 5) * 0.5f - 1.0f;
    const Image img = render_example(model, v);
    CHECK(img.shape() == Shape{8, 8, 1});
    CHECK(render_example(model, example_from_image(model, img)).pixels == img.pixels);
    CHECK_THROWS_AS(example_from_image(model, Image{4, 4, 1, std::vector<std::uint8_t>(16)}), ShapeError);

    Image m{8, 8, 1, std::vector<std::uint8_t>(64, 0)};
    m.pixels[9] = 255;
    const auto mask = mask_from_image(model, m);
    CHECK(std::count(mask.begin(), mask.end(), 1) == 1);
    CHECK(mask[9] == 1);
    Rng rng(1);
    const auto tiles = random_tile_mask(model, 1, 4, rng);
    CHECK(std::count(tiles.begin(), tiles.end(), 1) == 16);
  }

  TEST_CASE("checkpoints carry the run config") {
    const auto ck = test::tiny_stripes_checkpoint(2);
    const auto model = model_from_checkpoint(ck);
    CHECK(model.config.dataset.generator == std::optional<std::string>("stripes"));
    CHECK(model.digest == checkpoint_digest(ck));
    CHECK(model.denoiser->dim() == 64);
  }
}
