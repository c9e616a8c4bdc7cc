#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nkca/array.hpp"

namespace nkca {

inline constexpr int kCheckpointFormatVersion = 1;

/// Trained model state. `ema_parameters` must mirror `parameters` name for
/// name and shape for shape; the constructor enforces it.
class Checkpoint {
 public:
  Checkpoint(TensorMap<float> parameters, TensorMap<float> ema_parameters,
             TensorMap<float> optimizer_state, nlohmann::json config, std::uint64_t rng_seed);

  const TensorMap<float>& parameters() const noexcept { return parameters_; }
  const TensorMap<float>& ema_parameters() const noexcept { return ema_parameters_; }
  const TensorMap<float>& optimizer_state() const noexcept { return optimizer_state_; }
  const nlohmann::json& config() const noexcept { return config_; }
  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  int format_version() const noexcept { return kCheckpointFormatVersion; }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  TensorMap<float> parameters_;
  TensorMap<float> ema_parameters_;
  TensorMap<float> optimizer_state_;
  nlohmann::json config_;
  std::uint64_t rng_seed_;
};

/// File layout: 8-byte magic "NKCA\0CKP", u64 little-endian header length,
/// UTF-8 JSON header, then the raw little-endian float32 payload. The header
/// lists every tensor with its group, name, dtype, shape, offset and size,
/// plus the payload length and its FNV-1a 64 digest.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes atomically (temporary file, then rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
/// 16 lowercase hex digits.
std::string hex_digest(std::uint64_t value);

/// Digest of the serialized checkpoint; equal digests mean identical files.
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace nkca
