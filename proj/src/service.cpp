#include "nkca/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <ctime>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "nkca/image_io.hpp"
#include "nkca/sampler.hpp"

namespace nkca {

namespace {

using nlohmann::json;

constexpr std::size_t kMaxSteps = 10'000;
constexpr std::size_t kMaxCandidates = 64;

/// Maps onto an HTTP status at the handler boundary.
struct HttpError {
  int status;
  std::string message;
};

[[noreturn]] void fail(int status, std::string message) { throw HttpError{status, std::move(message)}; }

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(int status, const std::string& message) {
  return {{"error", {{"status", status}, {"message", message}}}};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) fail(400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(400, std::string("invalid JSON body: ") + e.what());
  }
}

std::uint64_t parse_seed(const json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      try {
        return std::stoull(s);
      } catch (const std::out_of_range&) {
      }
    }
  }
  fail(422, what + " must be an unsigned 64-bit integer or its decimal string");
}

double number_field(const json& body, const char* key, double fallback) {
  if (!body.contains(key)) return fallback;
  if (!body[key].is_number()) fail(422, std::string(key) + " must be a number");
  return body[key].get<double>();
}

std::size_t count_field(const json& body, const char* key, std::size_t fallback) {
  if (!body.contains(key)) return fallback;
  if (!body[key].is_number_integer() || body[key].get<std::int64_t>() < 0) {
    fail(422, std::string(key) + " must be a non-negative integer");
  }
  return body[key].get<std::size_t>();
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("missing blob " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string_view s = text;
  // Accept data URLs from browsers.
  if (s.rfind("data:", 0) == 0) {
    const auto comma = s.find(',');
    if (comma == std::string_view::npos) throw ParseError("malformed data URL", 0);
    s.remove_prefix(comma + 1);
  }
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  bool padding = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    int v;
    if (c >= 'A' && c <= 'Z') v = c - 'A';
    else if (c >= 'a' && c <= 'z') v = c - 'a' + 26;
    else if (c >= '0' && c <= '9') v = c - '0' + 52;
    else if (c == '+') v = 62;
    else if (c == '/') v = 63;
    else if (c == '=') { padding = true; continue; }
    else if (c == '\n' || c == '\r' || c == ' ') continue;
    else throw ParseError("invalid base64 character", i);
    if (padding) throw ParseError("base64 data after padding", i);
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

json Candidate::to_json() const {
  return {
      {"id", id},
      {"session_id", session_id},
      {"parent_id", parent_id ? json(*parent_id) : json(nullptr)},
      {"origin", origin},
      {"beta", beta},
      {"steps", steps},
      {"sub_seed", std::to_string(sub_seed)},
      {"image_url", "/candidates/" + id + "/image"},
      {"etag", etag},
      {"created_at", created_at},
      {"extra", extra},
  };
}

struct Service::Impl {
  struct Session {
    std::string id;
    std::string created_at;
    std::uint64_t base_seed = 0;
    std::string checkpoint_digest;
    json source;
    std::vector<std::shared_ptr<const Candidate>> nodes;
    std::size_t next_index = 0;
    /// Serializes lineage writers; readers copy `nodes` under Impl::mu.
    std::mutex writer;
  };

  struct Job {
    std::string id;
    std::string status = "running";
    int code = 0;
    json result;
    std::mutex mu;
    std::condition_variable done;
  };

  LoadedModel model;
  ServiceOptions options;
  NoiseKernel kernel;

  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::shared_ptr<const Candidate>> candidates;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::vector<std::thread> workers;
  std::uint64_t session_counter = 0;
  std::uint64_t job_counter = 0;
  std::ofstream journal;

  std::once_flag dataset_once;
  std::optional<Dataset> dataset;
  std::string dataset_error;

  Impl(LoadedModel m, ServiceOptions o) : model(std::move(m)), options(std::move(o)), kernel(model.kernel()) {
    dataset = options.dataset;
    std::filesystem::create_directories(options.state_dir / "blobs");
    replay();
    journal.open(options.state_dir / "journal.jsonl", std::ios::app);
    if (!journal) throw Error("cannot open journal in " + options.state_dir.string());
  }

  ~Impl() {
    for (auto& t : workers) {
      if (t.joinable()) t.join();
    }
  }

  std::size_t dim() const { return model.denoiser->dim(); }

  Image render(const std::vector<float>& values) const { return render_example(model, values); }

  std::vector<float> values_from_image(const Image& image) const {
    try {
      return example_from_image(model, image);
    } catch (const ShapeError& e) {
      fail(400, e.what());
    }
  }

  std::shared_ptr<Candidate> make_candidate(const Session& s, std::size_t index, std::vector<float> values) const {
    auto c = std::make_shared<Candidate>();
    c->id = s.id + "-c" + std::to_string(index);
    c->session_id = s.id;
    c->values = std::move(values);
    c->png = encode_png(render(c->values));
    c->etag = "\"" + hex_digest(fnv1a64(c->png.data(), c->png.size())) + "\"";
    c->created_at = now_iso8601();
    return c;
  }

  // Persistence.

  std::filesystem::path blob(const std::string& id, const char* ext) const {
    return options.state_dir / "blobs" / (id + ext);
  }

  void append_journal(const json& event) {
    journal << event.dump() << '\n';
    journal.flush();
  }

  void persist_candidate(const Candidate& c) {
    write_bytes(blob(c.id, ".f32"), c.values.data(), c.values.size() * sizeof(float));
    write_bytes(blob(c.id, ".png"), c.png.data(), c.png.size());
    json event = c.to_json();
    event["type"] = "candidate";
    std::lock_guard lock(mu);
    append_journal(event);
  }

  void replay() {
    std::ifstream in(options.state_dir / "journal.jsonl");
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json e;
      try {
        e = json::parse(line);
      } catch (const json::parse_error&) {
        // A torn final line from an interrupted write.
        continue;
      }
      if (e.value("type", "") == "session") {
        auto s = std::make_shared<Session>();
        s->id = e.at("id");
        s->created_at = e.at("created_at");
        s->base_seed = std::stoull(e.at("base_seed").get<std::string>());
        s->checkpoint_digest = e.at("checkpoint_digest");
        s->source = e.at("source");
        sessions[s->id] = s;
        session_counter = std::max<std::uint64_t>(session_counter, std::stoull(s->id.substr(1)));
      } else if (e.value("type", "") == "candidate") {
        auto c = std::make_shared<Candidate>();
        c->id = e.at("id");
        c->session_id = e.at("session_id");
        if (!e.at("parent_id").is_null()) c->parent_id = e.at("parent_id").get<std::string>();
        c->origin = e.at("origin");
        c->beta = e.at("beta");
        c->steps = e.at("steps");
        c->sub_seed = std::stoull(e.at("sub_seed").get<std::string>());
        c->etag = e.at("etag");
        c->created_at = e.at("created_at");
        c->extra = e.at("extra");
        const auto raw = read_bytes(blob(c->id, ".f32"));
        c->values.resize(raw.size() / sizeof(float));
        std::memcpy(c->values.data(), raw.data(), c->values.size() * sizeof(float));
        c->png = read_bytes(blob(c->id, ".png"));
        auto it = sessions.find(c->session_id);
        if (it == sessions.end()) continue;
        it->second->nodes.push_back(c);
        it->second->next_index = std::max<std::size_t>(it->second->next_index, std::stoull(c->id.substr(c->id.rfind('c') + 1)) + 1);
        candidates[c->id] = c;
      }
    }
  }

  // Lookups.

  std::shared_ptr<Session> session(const std::string& id) const {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) fail(404, "unknown session '" + id + "'");
    return it->second;
  }

  std::shared_ptr<const Candidate> candidate(const std::string& id) const {
    std::lock_guard lock(mu);
    auto it = candidates.find(id);
    if (it == candidates.end()) fail(404, "unknown candidate '" + id + "'");
    return it->second;
  }

  std::vector<std::shared_ptr<const Candidate>> snapshot(const Session& s) const {
    std::lock_guard lock(mu);
    return s.nodes;
  }

  void publish(Session& s, const std::shared_ptr<const Candidate>& c) {
    persist_candidate(*c);
    std::lock_guard lock(mu);
    s.nodes.push_back(c);
    candidates[c->id] = c;
  }

  const Dataset& source_dataset() {
    std::call_once(dataset_once, [this] {
      if (dataset) return;
      try {
        dataset = load_dataset(model.config);
      } catch (const std::exception& e) {
        dataset_error = e.what();
      }
    });
    if (!dataset) fail(404, "no dataset available: " + dataset_error);
    return *dataset;
  }

  // Sessions.

  json create_session(const json& body, std::size_t body_bytes) {
    if (!body.contains("source") || !body["source"].is_string()) {
      fail(400, "source must be one of upload, dataset-index, synthesize");
    }
    const std::string source = body["source"];
    std::uint64_t number;
    {
      std::lock_guard lock(mu);
      number = ++session_counter;
    }
    auto s = std::make_shared<Session>();
    s->id = "s" + std::to_string(number);
    s->created_at = now_iso8601();
    s->base_seed = body.contains("seed") ? parse_seed(body["seed"], "seed") : sub_seed(options.seed, number);
    s->checkpoint_digest = model.digest;

    std::vector<float> values;
    json extra = json::object();
    double beta = 0.0;
    std::size_t steps = 0;
    std::string origin;
    if (source == "upload") {
      if (body_bytes > options.max_upload_bytes) fail(413, "upload exceeds the size limit");
      if (!body.contains("image") || !body["image"].is_string()) fail(400, "upload needs a base64 PNG in image");
      Image image;
      try {
        const auto bytes = base64_decode(body["image"]);
        if (bytes.size() > options.max_upload_bytes) fail(413, "upload exceeds the size limit");
        image = decode_png(bytes);
      } catch (const ParseError& e) {
        fail(400, std::string("image is not a valid base64 PNG: ") + e.what());
      }
      values = values_from_image(image);
      origin = "upload";
    } else if (source == "dataset-index") {
      if (!body.contains("index") || !body["index"].is_number_integer()) fail(400, "dataset-index needs an integer index");
      const auto index = body["index"].get<std::int64_t>();
      const Dataset& data = source_dataset();
      if (index < 0 || static_cast<std::size_t>(index) >= data.size()) {
        fail(404, "dataset index " + std::to_string(index) + " out of range [0, " + std::to_string(data.size()) + ")");
      }
      if (data.dim() != dim()) fail(400, "dataset examples do not match the model shape");
      const auto i = static_cast<std::size_t>(index);
      if (data.kind() == KernelKind::continuous) {
        const auto ex = data.continuous_example(i);
        values.assign(ex.begin(), ex.end());
      } else {
        for (Category c : data.categorical_example(i)) values.push_back(static_cast<float>(c));
      }
      extra["index"] = index;
      origin = "dataset";
    } else if (source == "synthesize") {
      const auto& sched = model.config.schedule;
      const auto schedule = sched.build(kernel.kind);
      const Batch<float> out = synthesize(*model.denoiser, kernel, schedule, 1, s->base_seed);
      values.assign(out.data(), out.data() + out.size());
      beta = sched.beta_end;
      steps = sched.steps;
      extra["schedule"] = {{"steps", sched.steps}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}};
      origin = "synthesize";
    } else {
      fail(400, "source must be one of upload, dataset-index, synthesize");
    }

    auto root = make_candidate(*s, 0, std::move(values));
    root->origin = origin;
    root->beta = beta;
    root->steps = steps;
    root->sub_seed = s->base_seed;
    root->extra = extra;
    s->next_index = 1;
    s->source = {{"source", source}};
    {
      std::lock_guard lock(mu);
      sessions[s->id] = s;
      append_journal({{"type", "session"},
                      {"id", s->id},
                      {"created_at", s->created_at},
                      {"base_seed", std::to_string(s->base_seed)},
                      {"checkpoint_digest", s->checkpoint_digest},
                      {"source", s->source}});
    }
    publish(*s, root);
    return {{"session_id", s->id}, {"root_candidate", root->to_json()}};
  }

  json session_json(const Session& s) const {
    return {{"id", s.id},
            {"created_at", s.created_at},
            {"base_seed", std::to_string(s.base_seed)},
            {"checkpoint_digest", s.checkpoint_digest},
            {"source", s.source},
            {"candidates", snapshot(s).size()}};
  }

  json lineage(const Session& s) const {
    const auto nodes = snapshot(s);
    std::map<std::string, std::vector<const Candidate*>> children;
    const Candidate* root = nullptr;
    for (const auto& n : nodes) {
      if (n->parent_id) children[*n->parent_id].push_back(n.get());
      else root = n.get();
    }
    std::function<json(const Candidate*)> build = [&](const Candidate* c) {
      json node = c->to_json();
      node["children"] = json::array();
      for (const Candidate* child : children[c->id]) node["children"].push_back(build(child));
      return node;
    };
    return {{"session_id", s.id}, {"count", nodes.size()}, {"root", root ? build(root) : json(nullptr)}};
  }

  // Generation.

  const Candidate& parent_in(const Session& s, const std::string& id) const {
    for (const auto& n : snapshot(s)) {
      if (n->id == id) return *n;
    }
    fail(404, "unknown parent '" + id + "' in session " + s.id);
  }

  json create_variants(Session& s, const json& body) {
    if (!body.contains("parent_id") || !body["parent_id"].is_string()) fail(422, "parent_id is required");
    const std::string parent_id = body["parent_id"];
    const double beta = number_field(body, "beta", model.config.variants.beta);
    const std::size_t steps = count_field(body, "steps", model.config.variants.steps);
    std::vector<std::uint64_t> seeds;
    if (body.contains("sub_seeds")) {
      if (!body["sub_seeds"].is_array()) fail(422, "sub_seeds must be a list");
      for (const auto& v : body["sub_seeds"]) seeds.push_back(parse_seed(v, "sub_seeds entry"));
    }
    const std::size_t n = count_field(body, "n", seeds.empty() ? model.config.variants.n : seeds.size());
    if (!(beta > 0.0 && beta < 1.0)) fail(422, "beta must lie in (0, 1)");
    if (steps > kMaxSteps) fail(422, "steps must not exceed " + std::to_string(kMaxSteps));
    if (n == 0 || n > kMaxCandidates) fail(422, "n must lie in [1, " + std::to_string(kMaxCandidates) + "]");
    if (!seeds.empty() && seeds.size() != n) fail(422, "sub_seeds must have n entries");

    std::lock_guard writer(s.writer);
    const Candidate& parent = parent_in(s, parent_id);
    if (seeds.empty()) {
      for (std::size_t i = 0; i < n; ++i) seeds.push_back(sub_seed(s.base_seed, s.next_index + i));
    }
    // Identical (parent, beta, steps, sub-seed) requests return the existing node.
    std::vector<std::shared_ptr<const Candidate>> result(n);
    std::vector<std::uint64_t> fresh;
    std::vector<std::size_t> slots;
    const auto nodes = snapshot(s);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& node : nodes) {
        if (node->parent_id == parent_id && node->origin == "variant" && node->beta == beta &&
            node->steps == steps && node->sub_seed == seeds[i]) {
          result[i] = node;
        }
      }
      if (!result[i]) {
        fresh.push_back(seeds[i]);
        slots.push_back(i);
      }
    }
    if (!fresh.empty()) {
      const Batch<float> out = variants_from_sub_seeds(parent.values, beta, steps, fresh, *model.denoiser, kernel);
      for (std::size_t j = 0; j < fresh.size(); ++j) {
        const auto row = out.row(static_cast<Eigen::Index>(j));
        auto c = make_candidate(s, s.next_index++, std::vector<float>(row.data(), row.data() + row.size()));
        c->parent_id = parent_id;
        c->origin = "variant";
        c->beta = beta;
        c->steps = steps;
        c->sub_seed = fresh[j];
        publish(s, c);
        result[slots[j]] = c;
      }
    }
    json list = json::array();
    for (const auto& c : result) list.push_back(c->to_json());
    return {{"candidates", list}};
  }

  std::vector<std::uint8_t> mask_from(const json& spec, Rng& tiles_rng) const {
    const std::size_t d = dim();
    std::vector<std::uint8_t> mask(d, 0);
    if (spec.is_array()) {
      if (spec.size() != d) fail(422, "mask list must have " + std::to_string(d) + " entries");
      for (std::size_t i = 0; i < d; ++i) {
        if (!spec[i].is_number_integer() || (spec[i] != 0 && spec[i] != 1)) fail(422, "mask entries must be 0 or 1");
        mask[i] = spec[i].get<std::uint8_t>();
      }
    } else if (spec.is_string()) {
      try {
        mask = mask_from_image(model, decode_png(base64_decode(spec)));
      } catch (const ParseError& e) {
        fail(422, std::string("mask is not a valid base64 PNG: ") + e.what());
      } catch (const ShapeError& e) {
        fail(422, e.what());
      }
    } else if (spec.is_object() && spec.contains("tiles")) {
      if (!spec["tiles"].is_number_integer() || spec["tiles"].get<std::int64_t>() < 0) fail(422, "tiles must be a count");
      const std::size_t tile = spec.contains("size") ? count_field(spec, "size", 0) : model.config.inpaint.tile;
      if (tile == 0) fail(422, "tile size must be positive");
      mask = random_tile_mask(model, spec["tiles"].get<std::size_t>(), tile, tiles_rng);
    } else {
      fail(422, "mask must be a base64 PNG, a 0/1 list or {\"tiles\": n}");
    }
    return mask;
  }

  json create_inpaint(Session& s, const json& body) {
    if (!body.contains("candidate_id") || !body["candidate_id"].is_string()) fail(422, "candidate_id is required");
    if (!body.contains("mask")) fail(422, "mask is required");
    const std::string parent_id = body["candidate_id"];
    ScheduleSpec sched = model.config.inpaint.schedule;
    sched.steps = count_field(body, "steps", sched.steps);
    sched.beta_start = number_field(body, "beta_start", sched.beta_start);
    sched.beta_end = number_field(body, "beta_end", sched.beta_end);
    if (sched.steps == 0 || sched.steps > kMaxSteps) fail(422, "steps must lie in [1, " + std::to_string(kMaxSteps) + "]");
    if (!(sched.beta_start > 0.0 && sched.beta_start <= 1.0 && sched.beta_end > 0.0 && sched.beta_end <= 1.0)) {
      fail(422, "schedule levels must lie in (0, 1]");
    }
    const auto schedule = sched.build(kernel.kind);
    try {
      schedule.validate_for(kernel.w);
    } catch (const ScheduleError& e) {
      fail(422, e.what());
    }

    std::lock_guard writer(s.writer);
    const Candidate& parent = parent_in(s, parent_id);
    const std::uint64_t seed = body.contains("seed") ? parse_seed(body["seed"], "seed") : sub_seed(s.base_seed, s.next_index);
    Rng tiles_rng = Rng(seed).split(7);
    const auto mask = mask_from(body["mask"], tiles_rng);
    const InpaintCondition condition{parent.values, mask};
    std::vector<float> values = inpaint(condition, *model.denoiser, kernel, schedule, seed);
    auto c = make_candidate(s, s.next_index++, std::move(values));
    write_bytes(blob(c->id, ".mask"), mask.data(), mask.size());
    c->parent_id = parent_id;
    c->origin = "inpaint";
    c->beta = sched.beta_end;
    c->steps = sched.steps;
    c->sub_seed = seed;
    c->extra = {{"schedule", {{"steps", sched.steps}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}}},
                {"masked_elements", std::count(mask.begin(), mask.end(), 1)}};
    publish(s, c);
    return {{"candidate", c->to_json()}};
  }

  /// Recomputes a candidate from its recorded parameters.
  json verify(const Candidate& c) {
    std::vector<float> again;
    if (c.origin == "variant") {
      const auto parent = candidate(*c.parent_id);
      const std::uint64_t seeds[] = {c.sub_seed};
      const Batch<float> out = variants_from_sub_seeds(parent->values, c.beta, c.steps, seeds, *model.denoiser, kernel);
      again.assign(out.data(), out.data() + out.size());
    } else if (c.origin == "synthesize") {
      const auto& sc = c.extra.at("schedule");
      const ScheduleSpec sched{sc.at("steps"), sc.at("beta_start"), sc.at("beta_end")};
      const Batch<float> out = synthesize(*model.denoiser, kernel, sched.build(kernel.kind), 1, c.sub_seed);
      again.assign(out.data(), out.data() + out.size());
    } else if (c.origin == "inpaint") {
      const auto parent = candidate(*c.parent_id);
      const auto& sc = c.extra.at("schedule");
      const ScheduleSpec sched{sc.at("steps"), sc.at("beta_start"), sc.at("beta_end")};
      const InpaintCondition condition{parent->values, read_bytes(blob(c.id, ".mask"))};
      again = inpaint(condition, *model.denoiser, kernel, sched.build(kernel.kind), c.sub_seed);
    } else {
      return {{"id", c.id}, {"reproducible", true}, {"bit_exact", true}, {"note", "source data, nothing to recompute"}};
    }
    const bool same = again.size() == c.values.size() &&
                      std::memcmp(again.data(), c.values.data(), again.size() * sizeof(float)) == 0;
    return {{"id", c.id}, {"reproducible", true}, {"bit_exact", same}};
  }

  // Asynchronous execution.

  void run_async(httplib::Response& res, std::function<json()> work, int success_status) {
    auto job = std::make_shared<Job>();
    {
      std::lock_guard lock(mu);
      job->id = "j" + std::to_string(++job_counter);
      jobs[job->id] = job;
    }
    std::thread worker([job, work = std::move(work), success_status] {
      json result;
      int code = success_status;
      try {
        result = work();
      } catch (const HttpError& e) {
        code = e.status;
        result = error_body(e.status, e.message);
      } catch (const DomainError& e) {
        code = 422;
        result = error_body(422, e.what());
      } catch (const ShapeError& e) {
        code = 422;
        result = error_body(422, e.what());
      } catch (const ScheduleError& e) {
        code = 422;
        result = error_body(422, e.what());
      } catch (const std::exception& e) {
        code = 500;
        result = error_body(500, e.what());
      }
      std::lock_guard lock(job->mu);
      job->code = code;
      job->result = std::move(result);
      job->status = code < 400 ? "succeeded" : "failed";
      job->done.notify_all();
    });
    {
      std::lock_guard lock(mu);
      workers.push_back(std::move(worker));
    }
    std::unique_lock lock(job->mu);
    if (job->done.wait_for(lock, options.async_after, [&] { return job->status != "running"; })) {
      send_json(res, job->code, job->result);
      return;
    }
    res.set_header("Location", "/jobs/" + job->id);
    send_json(res, 202, {{"job_id", job->id}, {"status", "running"}, {"poll", "/jobs/" + job->id}});
  }

  json job_json(const std::string& id) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard lock(mu);
      auto it = jobs.find(id);
      if (it == jobs.end()) fail(404, "unknown job '" + id + "'");
      job = it->second;
    }
    std::lock_guard lock(job->mu);
    json j = {{"job_id", job->id}, {"status", job->status}};
    if (job->status != "running") {
      j["code"] = job->code;
      j["result"] = job->result;
    }
    return j;
  }

  json model_json() const {
    const auto& c = model.config;
    json j = {
        {"checkpoint_digest", model.digest},
        {"kind", to_string(kernel.kind)},
        {"w", kernel.w},
        {"example_shape", model.example_shape},
        {"dim", dim()},
        {"denoiser", c.denoiser.type},
        {"defaults",
         {{"synthesize", {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
          {"variants", {{"beta", c.variants.beta}, {"steps", c.variants.steps}, {"n", c.variants.n}}},
          {"inpaint",
           {{"steps", c.inpaint.schedule.steps},
            {"beta_start", c.inpaint.schedule.beta_start},
            {"beta_end", c.inpaint.schedule.beta_end},
            {"tile", c.inpaint.tile}}}}},
        {"limits",
         {{"beta_exclusive", {0.0, 1.0}},
          {"max_steps", kMaxSteps},
          {"max_candidates", kMaxCandidates},
          {"max_upload_bytes", options.max_upload_bytes}}},
    };
    if (kernel.kind == KernelKind::categorical) j["categories"] = kernel.categories;
    return j;
  }
};

Service::Service(LoadedModel model, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(options))) {}

Service::~Service() = default;

std::size_t Service::session_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

Image Service::render(const std::vector<float>& values) const { return impl_->render(values); }

void Service::bind(httplib::Server& server) {
  Impl* impl = impl_.get();
  server.set_payload_max_length(impl->options.max_upload_bytes + 4096);

  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status, error_body(e.status, e.message));
      } catch (const DomainError& e) {
        send_json(res, 422, error_body(422, e.what()));
      } catch (const ShapeError& e) {
        send_json(res, 422, error_body(422, e.what()));
      } catch (const ScheduleError& e) {
        send_json(res, 422, error_body(422, e.what()));
      } catch (const std::exception& e) {
        send_json(res, 500, error_body(500, e.what()));
      }
    };
  };

  server.set_post_routing_handler([impl](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", impl->options.cors_origin);
    res.set_header("Access-Control-Expose-Headers", "ETag, Location");
    if (impl->options.cors_origin != "*") res.set_header("Vary", "Origin");
  });
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, If-None-Match");
    res.set_header("Access-Control-Max-Age", "600");
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string message = res.status == 413 ? "request body too large" : httplib::status_message(res.status);
      send_json(res, res.status, error_body(res.status, message));
    }
  });

  server.Get("/model", guarded([impl](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, impl->model_json());
             }));
  server.Get("/openapi.json", guarded([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, Service::openapi());
             }));
  server.Get("/sessions", guarded([impl](const httplib::Request&, httplib::Response& res) {
               std::vector<std::shared_ptr<Impl::Session>> all;
               {
                 std::lock_guard lock(impl->mu);
                 for (const auto& [id, s] : impl->sessions) all.push_back(s);
               }
               json list = json::array();
               for (const auto& s : all) list.push_back(impl->session_json(*s));
               send_json(res, 200, {{"sessions", list}});
             }));
  server.Post("/sessions", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                if (req.body.size() > impl->options.max_upload_bytes) fail(413, "request body too large");
                const json body = parse_body(req);
                json out = impl->create_session(body, req.body.size());
                res.set_header("Location", "/sessions/" + out["session_id"].get<std::string>());
                send_json(res, 201, out);
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, impl->session_json(*impl->session(req.matches[1])));
             }));
  server.Get(R"(/sessions/([^/]+)/lineage)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, impl->lineage(*impl->session(req.matches[1])));
             }));
  server.Post(R"(/sessions/([^/]+)/candidates)",
              guarded([impl](const httplib::Request& req, httplib::Response& res) {
                auto s = impl->session(req.matches[1]);
                const json body = parse_body(req);
                impl->run_async(res, [impl, s, body] { return impl->create_variants(*s, body); }, 201);
              }));
  server.Post(R"(/sessions/([^/]+)/inpaint)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                auto s = impl->session(req.matches[1]);
                const json body = parse_body(req);
                impl->run_async(res, [impl, s, body] { return impl->create_inpaint(*s, body); }, 201);
              }));
  server.Get(R"(/candidates/([^/]+))", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, impl->candidate(req.matches[1])->to_json());
             }));
  server.Get(R"(/candidates/([^/]+)/image)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               const auto c = impl->candidate(req.matches[1]);
               res.set_header("ETag", c->etag);
               res.set_header("Cache-Control", "public, max-age=31536000, immutable");
               if (req.has_header("If-None-Match") && req.get_header_value("If-None-Match") == c->etag) {
                 res.status = 304;
                 return;
               }
               res.status = 200;
               res.set_content(reinterpret_cast<const char*>(c->png.data()), c->png.size(), "image/png");
             }));
  server.Get(R"(/candidates/([^/]+)/values)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               const auto c = impl->candidate(req.matches[1]);
               send_json(res, 200, {{"id", c->id}, {"shape", impl->model.example_shape}, {"values", c->values}});
             }));
  server.Post(R"(/candidates/([^/]+)/verify)", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, impl->verify(*impl->candidate(req.matches[1])));
              }));
  server.Get(R"(/jobs/([^/]+))", guarded([impl](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, impl->job_json(req.matches[1]));
             }));
}

void run_service(const std::filesystem::path& checkpoint, const std::string& host, int port, ServiceOptions options) {
  Service service(load_model(checkpoint), std::move(options));
  httplib::Server server;
  service.bind(server);
  if (!server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  server.listen_after_bind();
}

}  // namespace nkca
