#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nkca/config.hpp"
#include "nkca/image_io.hpp"

namespace httplib {
class Server;
}

namespace nkca {

struct ServiceOptions {
  /// Journal and image blobs live here; created when missing.
  std::filesystem::path state_dir = "nkca-state";
  std::size_t max_upload_bytes = 8 * 1024 * 1024;
  /// Candidate requests still running after this long answer 202 with a
  /// job URL.
  std::chrono::milliseconds async_after{2000};
  std::string cors_origin = "*";
  std::uint64_t seed = 0;
  /// Source for dataset-index sessions; loaded from the checkpoint's run
  /// config on first use when absent.
  std::optional<Dataset> dataset;
};

/// One node of a session lineage. Immutable once created.
struct Candidate {
  std::string id;
  std::string session_id;
  std::optional<std::string> parent_id;
  std::string origin;  // upload | dataset | synthesize | variant | inpaint
  double beta = 0.0;
  std::size_t steps = 0;
  std::uint64_t sub_seed = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> png;
  std::string etag;
  std::string created_at;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// REST front end over a loaded model. Thread-safe; register it on an
/// httplib::Server with `bind`.
class Service {
 public:
  Service(LoadedModel model, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void bind(httplib::Server& server);

  std::size_t session_count() const;

  /// Renders values of the model's example shape as an 8-bit image.
  Image render(const std::vector<float>& values) const;

  static nlohmann::json openapi();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving on host:port until the server stops.
void run_service(const std::filesystem::path& checkpoint, const std::string& host, int port,
                 ServiceOptions options);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws ParseError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace nkca
