#include "nkca/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nkca/error.hpp"

namespace nkca {

namespace {

constexpr char kMagic[8] = {'N', 'K', 'C', 'A', '\0', 'C', 'K', 'P'};
constexpr std::size_t kPreamble = 16;
constexpr std::size_t kMaxHeader = 64u << 20;

struct Group {
  const char* name;
  const TensorMap<float>* tensors;
};

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

Checkpoint::Checkpoint(TensorMap<float> parameters, TensorMap<float> ema_parameters,
                       TensorMap<float> optimizer_state, nlohmann::json config,
                       std::uint64_t rng_seed)
    : parameters_(std::move(parameters)),
      ema_parameters_(std::move(ema_parameters)),
      optimizer_state_(std::move(optimizer_state)),
      config_(std::move(config)),
      rng_seed_(rng_seed) {
  try {
    require_same_layout(parameters_, ema_parameters_, "checkpoint ema_parameters");
  } catch (const ShapeError& e) {
    throw ValidationError(e.what());
  }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = digits[value & 0xf];
  return s;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little);
  const Group groups[] = {{"parameters", &ckpt.parameters()},
                          {"ema_parameters", &ckpt.ema_parameters()},
                          {"optimizer_state", &ckpt.optimizer_state()}};
  std::vector<std::uint8_t> payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& g : groups) {
    for (const auto& [name, array] : *g.tensors) {
      const std::size_t nbytes = array.size() * sizeof(float);
      tensors.push_back({{"group", g.name},
                         {"name", name},
                         {"dtype", "f32"},
                         {"shape", array.shape()},
                         {"offset", payload.size()},
                         {"nbytes", nbytes}});
      const auto* p = reinterpret_cast<const std::uint8_t*>(array.data());
      payload.insert(payload.end(), p, p + nbytes);
    }
  }
  const nlohmann::json header = {
      {"format_version", ckpt.format_version()},
      {"rng_seed", ckpt.rng_seed()},
      {"config", ckpt.config()},
      {"tensors", tensors},
      {"payload_bytes", payload.size()},
      {"payload_fnv1a64", hex_digest(fnv1a64(payload.data(), payload.size()))},
  };
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  append_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kPreamble) throw IntegrityError("checkpoint truncated inside the preamble");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("not a checkpoint file (bad magic)", 0);
  const std::uint64_t header_len = read_u64(bytes.data() + 8);
  if (header_len > kMaxHeader) throw IntegrityError("checkpoint header length is implausible");
  if (bytes.size() - kPreamble < header_len) throw IntegrityError("checkpoint truncated inside the header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble,
                                   bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what(), kPreamble + e.byte);
  }

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw VersionError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointFormatVersion) + ")");
    }
    const std::size_t payload_start = kPreamble + header_len;
    const auto payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const std::size_t available = bytes.size() - payload_start;
    if (available < payload_bytes) {
      throw IntegrityError("checkpoint payload truncated: " + std::to_string(available) + " of " +
                           std::to_string(payload_bytes) + " bytes present");
    }
    if (available > payload_bytes) throw IntegrityError("checkpoint has trailing bytes after the payload");
    const std::uint8_t* payload = bytes.data() + payload_start;
    if (hex_digest(fnv1a64(payload, payload_bytes)) != header.at("payload_fnv1a64").get<std::string>()) {
      throw IntegrityError("checkpoint payload digest mismatch");
    }

    TensorMap<float> groups[3];
    const char* group_names[3] = {"parameters", "ema_parameters", "optimizer_state"};
    for (const auto& t : header.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f32") throw IntegrityError("unsupported tensor dtype");
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("nbytes").get<std::size_t>();
      if (nbytes != shape_size(shape) * sizeof(float) || offset > payload_bytes || payload_bytes - offset < nbytes) {
        throw IntegrityError("tensor '" + t.at("name").get<std::string>() + "' lies outside the payload");
      }
      std::vector<float> values(shape_size(shape));
      std::memcpy(values.data(), payload + offset, nbytes);
      const auto group = t.at("group").get<std::string>();
      int gi = 0;
      while (gi < 3 && group != group_names[gi]) ++gi;
      if (gi == 3) throw IntegrityError("unknown tensor group '" + group + "'");
      groups[gi].emplace(t.at("name").get<std::string>(), NumericArray(shape, std::move(values)));
    }
    return Checkpoint(std::move(groups[0]), std::move(groups[1]), std::move(groups[2]), header.at("config"),
                      header.at("rng_seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is incomplete: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  return hex_digest(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace nkca
