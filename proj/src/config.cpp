#include "nkca/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace nkca {

namespace {

using nlohmann::json;

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a table");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename F>
  void with(const std::string& key, F&& f) {
    if (has(key)) f(raw(key));
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const json& v) {
      if (!v.is_number()) throw ConfigError(path(key) + " must be a number");
      out = v.get<double>();
    });
  }

  void count(const std::string& key, std::size_t& out) {
    with(key, [&](const json& v) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError(path(key) + " must be a non-negative integer");
      }
      out = v.get<std::size_t>();
    });
  }

  void seed(const std::string& key, std::uint64_t& out) {
    with(key, [&](const json& v) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(path(key) + " must be a non-negative integer");
      }
      out = v.get<std::uint64_t>();
    });
  }

  void integer(const std::string& key, int& out) {
    with(key, [&](const json& v) {
      if (!v.is_number_integer()) throw ConfigError(path(key) + " must be an integer");
      out = v.get<int>();
    });
  }

  void boolean(const std::string& key, bool& out) {
    with(key, [&](const json& v) {
      if (!v.is_boolean()) throw ConfigError(path(key) + " must be true or false");
      out = v.get<bool>();
    });
  }

  void text(const std::string& key, std::string& out) {
    with(key, [&](const json& v) {
      if (!v.is_string()) throw ConfigError(path(key) + " must be a string");
      out = v.get<std::string>();
    });
  }

  Section child(const std::string& key) { return Section(raw(key), path(key)); }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + path(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_schedule(Section& s, ScheduleSpec& out) {
  s.count("steps", out.steps);
  s.number("beta_start", out.beta_start);
  s.number("beta_end", out.beta_end);
}

json schedule_json(const ScheduleSpec& s) {
  return {{"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

void validate_schedule(const ScheduleSpec& s, const NoiseKernel& kernel, const std::string& name) {
  if (s.steps == 0) throw ConfigError(name + ".steps must be positive");
  for (double b : {s.beta_start, s.beta_end}) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError(name + " levels must lie in (0, 1]");
  }
  try {
    s.build(kernel.kind).validate_for(kernel.w);
  } catch (const ScheduleError& e) {
    throw ScheduleError(name + ": " + e.what(), e.step());
  }
}

std::string expected_generator_kind(const std::string& generator) {
  if (generator == "eight_gaussians" || generator == "stripes") return "continuous";
  if (generator == "categorical_toy") return "categorical";
  throw ConfigError("unknown dataset generator '" + generator + "'");
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

}  // namespace

NoiseSchedule ScheduleSpec::build(KernelKind kind) const {
  return NoiseSchedule::linear(steps, beta_start, beta_end, kind);
}

RunConfig default_run_config(KernelKind kind) {
  RunConfig c;
  c.kernel.kind = kind;
  c.denoiser.kind = kind;
  if (kind == KernelKind::continuous) {
    c.kernel.w = 0.5;
    c.schedule = {100, 1.0, 0.01};
  } else {
    c.kernel.w = 0.95;
    c.schedule = {500, 1.0, 0.5};
  }
  c.inpaint.schedule = c.schedule;
  c.train.total_steps = 10'000;
  return c;
}

void RunConfig::validate() const {
  kernel.validate();
  if (denoiser.kind != kernel.kind) throw ConfigError("denoiser and kernel kinds differ");
  if (kernel.kind == KernelKind::categorical && denoiser.categories != kernel.categories) {
    throw ConfigError("denoiser and kernel category counts differ");
  }
  if (denoiser.type != "mlp" && denoiser.type != "tabular") {
    throw ConfigError("denoiser.type must be mlp or tabular");
  }
  if (denoiser.type == "tabular" && kernel.kind != KernelKind::categorical) {
    throw ConfigError("tabular denoisers need a categorical kernel");
  }
  if (denoiser.type == "mlp" && denoiser.embedding_dim == 0) throw ConfigError("denoiser.embedding_dim must be positive");
  validate_schedule(schedule, kernel, "schedule");
  validate_schedule(inpaint.schedule, kernel, "inpaint");
  if (!(variants.beta > 0.0 && variants.beta < 1.0)) throw ConfigError("variants.beta must lie in (0, 1)");
  if (variants.n == 0) throw ConfigError("variants.n must be positive");
  if (inpaint.tile == 0) throw ConfigError("inpaint.tile must be positive");
  train.validate();
  if (dataset.path.has_value() == dataset.generator.has_value()) {
    throw ConfigError("dataset needs exactly one of path or generator");
  }
  if (dataset.generator) {
    if (expected_generator_kind(*dataset.generator) != to_string(kernel.kind)) {
      throw ConfigError("dataset generator '" + *dataset.generator + "' does not match the " +
                        to_string(kernel.kind) + " kernel");
    }
    if (*dataset.generator == "categorical_toy" && kernel.categories != 3) {
      throw ConfigError("categorical_toy has K = 3");
    }
    if (dataset.count == 0) throw ConfigError("dataset.count must be positive");
  }
  if (dataset.source_range && !(dataset.source_range->first < dataset.source_range->second)) {
    throw ConfigError("dataset.source_range must be increasing");
  }
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

json RunConfig::to_json() const {
  json d = json::object();
  if (dataset.path) d["path"] = *dataset.path;
  if (dataset.generator) d["generator"] = *dataset.generator;
  d["count"] = dataset.count;
  d["seed"] = dataset.seed;
  d["side"] = dataset.side;
  if (dataset.source_range) d["source_range"] = {dataset.source_range->first, dataset.source_range->second};
  json k = {{"kind", to_string(kernel.kind)}, {"w", kernel.w}};
  if (kernel.kind == KernelKind::categorical) k["categories"] = kernel.categories;
  json inp = schedule_json(inpaint.schedule);
  inp["tile"] = inpaint.tile;
  return {
      {"seed", seed},
      {"kernel", k},
      {"schedule", schedule_json(schedule)},
      {"variants", {{"beta", variants.beta}, {"steps", variants.steps}, {"n", variants.n}}},
      {"inpaint", inp},
      {"denoiser", {{"type", denoiser.type}, {"hidden", denoiser.hidden}, {"embedding_dim", denoiser.embedding_dim}}},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"steps", train.total_steps},
        {"ema_decay", train.ema_decay},
        {"beta_min", train.beta_min},
        {"beta_max", train.beta_max},
        {"adam_b1", train.adam_b1},
        {"adam_b2", train.adam_b2},
        {"adam_eps", train.adam_eps},
        {"horizontal_flip", train.horizontal_flip},
        {"objective", to_string(train.objective)},
        {"log_every", train.log_every}}},
      {"dataset", d},
      {"output", {{"dir", output_dir}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  Section root(j, "");
  if (!root.has("kernel")) throw ConfigError("missing [kernel] table");
  Section ks = root.child("kernel");
  std::string kind_name = "continuous";
  ks.text("kind", kind_name);
  KernelKind kind;
  try {
    kind = kernel_kind_from_string(kind_name);
  } catch (const Error& e) {
    throw ConfigError(std::string("kernel.kind: ") + e.what());
  }
  RunConfig c = default_run_config(kind);
  ks.number("w", c.kernel.w);
  ks.integer("categories", c.kernel.categories);
  ks.finish();
  c.denoiser.categories = c.kernel.kind == KernelKind::categorical ? c.kernel.categories : 0;

  root.seed("seed", c.seed);
  bool inpaint_schedule_set = false;
  if (root.has("schedule")) {
    Section s = root.child("schedule");
    read_schedule(s, c.schedule);
    s.finish();
  }
  if (root.has("variants")) {
    Section s = root.child("variants");
    s.number("beta", c.variants.beta);
    s.count("steps", c.variants.steps);
    s.count("n", c.variants.n);
    s.finish();
  }
  if (root.has("inpaint")) {
    Section s = root.child("inpaint");
    inpaint_schedule_set = s.has("steps") || s.has("beta_start") || s.has("beta_end");
    if (!inpaint_schedule_set) c.inpaint.schedule = c.schedule;
    read_schedule(s, c.inpaint.schedule);
    s.count("tile", c.inpaint.tile);
    s.finish();
  }
  if (!inpaint_schedule_set) c.inpaint.schedule = c.schedule;
  if (root.has("denoiser")) {
    Section s = root.child("denoiser");
    s.text("type", c.denoiser.type);
    s.with("hidden", [&](const json& v) {
      if (!v.is_array()) throw ConfigError("denoiser.hidden must be a list of widths");
      c.denoiser.hidden.clear();
      for (const auto& h : v) {
        if (!h.is_number_integer() || h.get<std::int64_t>() <= 0) {
          throw ConfigError("denoiser.hidden entries must be positive integers");
        }
        c.denoiser.hidden.push_back(h.get<std::size_t>());
      }
    });
    s.count("embedding_dim", c.denoiser.embedding_dim);
    s.finish();
  }
  if (root.has("train")) {
    Section s = root.child("train");
    s.number("learning_rate", c.train.learning_rate);
    s.count("batch_size", c.train.batch_size);
    s.count("steps", c.train.total_steps);
    s.number("ema_decay", c.train.ema_decay);
    s.number("beta_min", c.train.beta_min);
    s.number("beta_max", c.train.beta_max);
    s.number("adam_b1", c.train.adam_b1);
    s.number("adam_b2", c.train.adam_b2);
    s.number("adam_eps", c.train.adam_eps);
    s.boolean("horizontal_flip", c.train.horizontal_flip);
    std::string objective = to_string(c.train.objective);
    s.text("objective", objective);
    try {
      c.train.objective = objective_from_string(objective);
    } catch (const Error& e) {
      throw ConfigError(std::string("train.objective: ") + e.what());
    }
    s.count("log_every", c.train.log_every);
    s.finish();
  }
  if (root.has("dataset")) {
    Section s = root.child("dataset");
    s.with("path", [&](const json& v) {
      if (!v.is_string()) throw ConfigError("dataset.path must be a string");
      c.dataset.path = v.get<std::string>();
    });
    s.with("generator", [&](const json& v) {
      if (!v.is_string()) throw ConfigError("dataset.generator must be a string");
      c.dataset.generator = v.get<std::string>();
    });
    s.count("count", c.dataset.count);
    s.seed("seed", c.dataset.seed);
    s.count("side", c.dataset.side);
    s.with("source_range", [&](const json& v) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError("dataset.source_range must be [lo, hi]");
      }
      c.dataset.source_range = std::make_pair(v[0].get<double>(), v[1].get<double>());
    });
    s.finish();
  }
  if (root.has("output")) {
    Section s = root.child("output");
    s.text("dir", c.output_dir);
    s.finish();
  }
  root.finish();
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  json j;
  if (first != std::string::npos && text[first] == '{') {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
  } else {
    try {
      const toml::table table = toml::parse(text);
      std::ostringstream os;
      os << toml::json_formatter{table};
      j = json::parse(os.str());
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "invalid TOML config at line " << e.source().begin.line << ": " << e.description();
      throw ConfigError(msg.str());
    }
  }
  return RunConfig::from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_run_config(os.str());
}

GaussianMixture eight_gaussians_model(double radius, double stddev) {
  std::vector<double> weights(8, 1.0 / 8.0);
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> variances;
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    means.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    variances.push_back({stddev * stddev, stddev * stddev});
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(variances));
}

Dataset eight_gaussians(std::size_t count, std::uint64_t seed) {
  const auto model = eight_gaussians_model();
  Rng rng(seed);
  std::vector<float> values;
  values.reserve(count * 2);
  for (std::size_t i = 0; i < count; ++i) {
    for (double v : model.sample(rng)) values.push_back(clamp_unit(v));
  }
  return Dataset::continuous({2}, std::move(values));
}

CategoricalDataModel categorical_toy_model(std::uint64_t seed) {
  Rng rng(seed);
  return CategoricalDataModel::random(2, 3, rng);
}

Dataset categorical_toy(std::size_t count, std::uint64_t seed) {
  const auto model = categorical_toy_model(seed);
  Rng rng = Rng(seed).split(1);
  std::vector<Category> values;
  values.reserve(count * 2);
  for (std::size_t i = 0; i < count; ++i) {
    for (Category c : model.sample(rng)) values.push_back(c);
  }
  return Dataset::categorical({2}, 3, std::move(values));
}

Dataset stripes(std::size_t count, std::size_t side, std::uint64_t seed) {
  if (side == 0) throw ConfigError("stripes side must be positive");
  Rng rng(seed);
  std::vector<float> values;
  values.reserve(count * side * side);
  for (std::size_t n = 0; n < count; ++n) {
    const bool vertical = rng.below(2) == 1;
    const double period = 2.0 + static_cast<double>(rng.below(std::max<std::size_t>(side / 2, 1)));
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double u = static_cast<double>(vertical ? c : r);
        values.push_back(clamp_unit(0.8 * std::sin(2.0 * std::numbers::pi * u / period + phase)));
      }
    }
  }
  return Dataset::continuous({side, side, 1}, std::move(values));
}

Dataset load_dataset(const RunConfig& config) {
  const auto& spec = config.dataset;
  if (spec.generator) {
    const auto& g = *spec.generator;
    if (g == "eight_gaussians") return eight_gaussians(spec.count, spec.seed);
    if (g == "categorical_toy") return categorical_toy(spec.count, spec.seed);
    if (g == "stripes") return stripes(spec.count, spec.side, spec.seed);
    throw ConfigError("unknown dataset generator '" + g + "'");
  }
  if (!spec.path) throw ConfigError("dataset needs a path or a generator");
  IngestOptions options;
  options.kind = config.kernel.kind;
  if (config.kernel.kind == KernelKind::categorical) options.categories = config.kernel.categories;
  options.source_range = spec.source_range;
  return ingest_dataset(*spec.path, options);
}

nlohmann::json checkpoint_config(const RunConfig& config, const Shape& example_shape) {
  nlohmann::json run = config.to_json();
  run.erase("output");
  return {{"run", std::move(run)}, {"example_shape", example_shape}};
}

LoadedModel model_from_checkpoint(const Checkpoint& checkpoint) {
  const auto& j = checkpoint.config();
  if (!j.is_object() || !j.contains("run") || !j.contains("example_shape")) {
    throw ConfigError("checkpoint does not carry a run config");
  }
  LoadedModel m;
  m.config = RunConfig::from_json(j.at("run"));
  m.example_shape = j.at("example_shape").get<Shape>();
  m.digest = checkpoint_digest(checkpoint);
  DenoiserSpec spec = m.config.denoiser;
  spec.dim = shape_size(m.example_shape);
  m.denoiser = make_denoiser<float>(spec, checkpoint.ema_parameters());
  return m;
}

LoadedModel load_model(const std::filesystem::path& checkpoint_path) {
  return model_from_checkpoint(load_checkpoint(checkpoint_path));
}

Image render_example(const LoadedModel& model, std::span<const float> values) {
  Shape shape = model.example_shape;
  if (shape.size() == 1) shape = {1, shape[0]};
  if (model.config.kernel.kind == KernelKind::continuous) return image_from_unit_range(values, shape);
  std::vector<std::int32_t> cats(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) cats[i] = static_cast<std::int32_t>(std::lround(values[i]));
  return image_from_categories(cats, shape, model.config.kernel.categories);
}

std::vector<float> example_from_image(const LoadedModel& model, const Image& image) {
  Shape expected = model.example_shape;
  if (expected.size() == 1) expected = {1, expected[0]};
  if (expected.size() == 2) expected.push_back(1);
  if (image.shape() != expected) {
    throw ShapeError("image shape " + shape_to_string(image.shape()) + " does not match the model's " +
                     shape_to_string(expected));
  }
  if (model.config.kernel.kind == KernelKind::continuous) return unit_range_from_image(image);
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(discretize(image.pixels[i], 0.0, 255.0, model.config.kernel.categories));
  }
  return out;
}

namespace {

struct Grid {
  std::size_t h, w, c;
};

Grid example_grid(const LoadedModel& model) {
  const Shape& shape = model.example_shape;
  const std::size_t d = shape_size(shape);
  const std::size_t h = shape.size() >= 2 ? shape[0] : 1;
  const std::size_t w = shape.size() >= 2 ? shape[1] : d;
  return {h, w, d / (h * w)};
}

}  // namespace

std::vector<std::uint8_t> mask_from_image(const LoadedModel& model, const Image& image) {
  const auto [h, w, c] = example_grid(model);
  if (image.height != h || image.width != w) {
    throw ShapeError("mask is " + std::to_string(image.height) + "x" + std::to_string(image.width) + ", expected " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<std::uint8_t> mask(h * w * c, 0);
  for (std::size_t p = 0; p < h * w; ++p) {
    bool on = false;
    for (std::size_t k = 0; k < image.channels; ++k) on |= image.pixels[p * image.channels + k] != 0;
    for (std::size_t k = 0; k < c; ++k) mask[p * c + k] = on ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> random_tile_mask(const LoadedModel& model, std::size_t count, std::size_t tile, Rng& rng) {
  const auto [h, w, c] = example_grid(model);
  tile = std::min({tile, h, w});
  if (tile == 0) throw DomainError("tile size must be positive");
  std::vector<std::uint8_t> mask(h * w * c, 0);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t r0 = rng.below(h - tile + 1);
    const std::size_t c0 = rng.below(w - tile + 1);
    for (std::size_t r = r0; r < r0 + tile; ++r) {
      for (std::size_t q = c0; q < c0 + tile; ++q) {
        for (std::size_t k = 0; k < c; ++k) mask[(r * w + q) * c + k] = 1;
      }
    }
  }
  return mask;
}

}  // namespace nkca
