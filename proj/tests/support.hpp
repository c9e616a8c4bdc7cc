#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "nkca/config.hpp"

namespace nkca::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nkca-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A few training steps on 8x8 stripes with a small MLP.
inline Checkpoint tiny_stripes_checkpoint(std::size_t steps = 20, std::uint64_t seed = 3) {
  RunConfig cfg = default_run_config(KernelKind::continuous);
  cfg.seed = seed;
  cfg.train.seed = seed;
  cfg.train.total_steps = steps;
  cfg.train.learning_rate = 1e-3;
  cfg.train.batch_size = 16;
  cfg.train.log_every = 0;
  cfg.denoiser.hidden = {32};
  cfg.denoiser.embedding_dim = 8;
  cfg.schedule = {20, 1.0, 0.05};
  cfg.inpaint.schedule = cfg.schedule;
  cfg.variants.steps = 10;
  cfg.inpaint.tile = 4;
  cfg.dataset.generator = "stripes";
  cfg.dataset.count = 64;
  cfg.dataset.side = 8;
  cfg.dataset.seed = seed;
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  DenoiserSpec spec = cfg.denoiser;
  spec.dim = data.dim();
  TrainOptions options;
  options.run_config = checkpoint_config(cfg, data.example_shape());
  return train(cfg.train, data, spec, cfg.kernel, options);
}

inline LoadedModel tiny_stripes_model(std::size_t steps = 20, std::uint64_t seed = 3) {
  return model_from_checkpoint(tiny_stripes_checkpoint(steps, seed));
}

}  // namespace nkca::test
