#include "nkca/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nkca/config.hpp"
#include "nkca/error.hpp"
#include "nkca/npy.hpp"
#include "nkca/sampler.hpp"
#include "nkca/service.hpp"
#include "nkca/validation.hpp"

namespace nkca {

namespace {

using json = nlohmann::json;

struct Common {
  bool json_output = false;
  std::optional<std::uint64_t> seed;
};

/// --seed, then NKCA_SEED, then the configured value.
std::uint64_t resolve_seed(const Common& common, std::uint64_t configured) {
  if (common.seed) return *common.seed;
  if (const char* env = std::getenv("NKCA_SEED"); env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    std::istringstream in(env);
    if (!(in >> v) || !in.eof()) throw ConfigError(std::string("NKCA_SEED is not an unsigned integer: ") + env);
    return v;
  }
  return configured;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

std::string index_name(const std::string& prefix, std::size_t i) {
  std::ostringstream s;
  s << prefix << "_" << std::setw(4) << std::setfill('0') << i << ".png";
  return s.str();
}

/// samples.npy with a leading batch axis, plus one PNG per row for image
/// models or a CSV for vector models.
std::vector<std::string> write_examples(const std::filesystem::path& dir, const LoadedModel& model,
                                        const Batch<float>& rows, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  Shape shape = model.example_shape;
  shape.insert(shape.begin(), static_cast<std::size_t>(rows.rows()));
  const std::size_t d = model.denoiser->dim();
  std::vector<float> flat(static_cast<std::size_t>(rows.rows()) * d);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) flat[static_cast<std::size_t>(i) * d + j] = rows(i, static_cast<Eigen::Index>(j));
  }
  const auto npy_path = dir / (prefix + ".npy");
  if (model.config.kernel.kind == KernelKind::continuous) {
    npy::write_f32(npy_path, shape, flat);
  } else {
    std::vector<std::int32_t> labels(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) labels[i] = static_cast<std::int32_t>(std::lround(flat[i]));
    npy::write_i32(npy_path, shape, labels);
  }
  files.push_back(npy_path.string());
  if (model.example_shape.size() >= 2) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      const auto path = dir / index_name(prefix, static_cast<std::size_t>(i));
      write_png(path, render_example(model, std::span<const float>(flat).subspan(static_cast<std::size_t>(i) * d, d)));
      files.push_back(path.string());
    }
  } else {
    const auto path = dir / (prefix + ".csv");
    std::ofstream f(path);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) f << (j ? "," : "") << rows(i, static_cast<Eigen::Index>(j));
      f << "\n";
    }
    files.push_back(path.string());
  }
  return files;
}

/// A PNG of the model's example shape, or an npy holding one example.
std::vector<float> read_example(const LoadedModel& model, const std::filesystem::path& path) {
  if (path.extension() == ".npy") {
    const auto arr = npy::read(path);
    if (shape_size(arr.shape) != model.denoiser->dim()) {
      throw ShapeError(path.string() + " holds " + shape_to_string(arr.shape) + ", expected " +
                       shape_to_string(model.example_shape));
    }
    return {arr.values.begin(), arr.values.end()};
  }
  return example_from_image(model, read_png(path));
}

std::vector<std::uint8_t> read_mask(const LoadedModel& model, const std::filesystem::path& path) {
  if (path.extension() == ".npy") {
    const auto arr = npy::read(path);
    if (shape_size(arr.shape) != model.denoiser->dim()) {
      throw ShapeError("mask " + path.string() + " holds " + shape_to_string(arr.shape) + ", expected " +
                       shape_to_string(model.example_shape));
    }
    std::vector<std::uint8_t> mask(arr.values.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = arr.values[i] != 0.0 ? 1 : 0;
    return mask;
  }
  return mask_from_image(model, read_png(path));
}

Batch<float> single_row(const std::vector<float>& values) {
  Batch<float> b(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t j = 0; j < values.size(); ++j) b(0, static_cast<Eigen::Index>(j)) = values[j];
  return b;
}

void report(const Common& common, std::ostream& out, const json& j, const std::string& text) {
  if (common.json_output) {
    out << j.dump() << "\n";
  } else {
    out << text;
  }
}

struct TrainArgs {
  std::string config;
  std::string output;
  std::optional<std::size_t> steps;
};

int run_train(const TrainArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config);
  cfg.seed = resolve_seed(common, cfg.seed);
  cfg.train.seed = cfg.seed;
  if (a.steps) cfg.train.total_steps = *a.steps;
  if (!a.output.empty()) cfg.output_dir = a.output;
  cfg.validate();

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  write_json(dir / "config.json", cfg.to_json());

  const Dataset data = load_dataset(cfg);
  if (data.kind() != cfg.kernel.kind) throw ConfigError("dataset kind does not match the kernel");
  if (data.kind() == KernelKind::categorical && data.categories() != cfg.kernel.categories) {
    throw ConfigError("dataset has K = " + std::to_string(data.categories()) + ", kernel has " +
                      std::to_string(cfg.kernel.categories));
  }
  DenoiserSpec spec = cfg.denoiser;
  spec.dim = data.dim();

  std::ofstream metrics(dir / "metrics.jsonl");
  double last_loss = 0.0;
  TrainOptions options;
  options.run_config = checkpoint_config(cfg, data.example_shape());
  options.fault_checkpoint = dir / "last-good.ckpt";
  options.metrics = [&](const json& rec) {
    metrics << rec.dump() << "\n";
    metrics.flush();
    last_loss = rec.value("loss", last_loss);
    if (!common.json_output) err << "step " << rec.value("step", 0) << " loss " << last_loss << "\n";
  };
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint ckpt = train(cfg.train, data, spec, cfg.kernel, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto path = dir / "model.ckpt";
  save_checkpoint(ckpt, path);
  const std::string digest = checkpoint_digest(ckpt);

  report(common, out,
         {{"checkpoint", path.string()}, {"digest", digest}, {"steps", cfg.train.total_steps},
          {"seed", std::to_string(cfg.seed)}, {"final_loss", last_loss}, {"seconds", seconds}},
         "checkpoint " + path.string() + "\ndigest " + digest + "\n");
  return 0;
}

struct ScheduleArgs {
  std::optional<std::size_t> steps;
  std::optional<double> beta_start;
  std::optional<double> beta_end;

  ScheduleSpec resolve(const ScheduleSpec& base) const {
    ScheduleSpec s = base;
    if (steps) s.steps = *steps;
    if (beta_start) s.beta_start = *beta_start;
    if (beta_end) s.beta_end = *beta_end;
    return s;
  }
};

NoiseSchedule checked_schedule(const ScheduleSpec& spec, const NoiseKernel& kernel) {
  if (spec.steps == 0) throw ConfigError("-T must be positive");
  NoiseSchedule schedule = spec.build(kernel.kind);
  schedule.validate_for(kernel.w);
  return schedule;
}

json schedule_json(const ScheduleSpec& s) {
  return {{"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

struct SampleArgs {
  std::string ckpt;
  std::size_t n = 16;
  ScheduleArgs schedule;
  std::string output = "samples";
};

int run_sample(const SampleArgs& a, const Common& common, std::ostream& out) {
  const LoadedModel model = load_model(a.ckpt);
  const ScheduleSpec spec = a.schedule.resolve(model.config.schedule);
  const NoiseSchedule schedule = checked_schedule(spec, model.kernel());
  const std::uint64_t seed = resolve_seed(common, model.config.seed);
  if (a.n == 0) throw ConfigError("-n must be positive");

  const Batch<float> rows = synthesize(*model.denoiser, model.kernel(), schedule, a.n, seed);
  const std::filesystem::path dir = a.output;
  const auto files = write_examples(dir, model, rows, "sample");
  const json echo = {{"command", "sample"}, {"checkpoint", a.ckpt}, {"checkpoint_digest", model.digest},
                     {"seed", std::to_string(seed)}, {"n", a.n}, {"schedule", schedule_json(spec)}};
  write_json(dir / "run.json", echo);
  report(common, out, {{"run", echo}, {"files", files}},
         "wrote " + std::to_string(a.n) + " samples to " + dir.string() + "\n");
  return 0;
}

struct VariantArgs {
  std::string ckpt;
  std::string seed_image;
  std::optional<double> beta;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> n;
  std::string output = "variants";
};

int run_variants(const VariantArgs& a, const Common& common, std::ostream& out) {
  const LoadedModel model = load_model(a.ckpt);
  const double beta = a.beta.value_or(model.config.variants.beta);
  const std::size_t steps = a.steps.value_or(model.config.variants.steps);
  const std::size_t n = a.n.value_or(model.config.variants.n);
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("--beta must lie in (0, 1)");
  if (n == 0) throw ConfigError("-n must be positive");
  const std::uint64_t seed = resolve_seed(common, model.config.seed);

  const std::vector<float> z0 = read_example(model, a.seed_image);
  const Batch<float> rows = variants(z0, beta, steps, n, *model.denoiser, model.kernel(), seed);
  const std::filesystem::path dir = a.output;
  auto files = write_examples(dir, model, rows, "variant");
  json sub_seeds = json::array();
  for (std::size_t i = 0; i < n; ++i) sub_seeds.push_back(std::to_string(sub_seed(seed, i)));
  const json echo = {{"command", "variants"}, {"checkpoint", a.ckpt}, {"checkpoint_digest", model.digest},
                     {"seed_image", a.seed_image}, {"seed", std::to_string(seed)}, {"beta", beta},
                     {"steps", steps}, {"n", n}, {"sub_seeds", sub_seeds}};
  write_json(dir / "run.json", echo);
  report(common, out, {{"run", echo}, {"files", files}},
         "wrote " + std::to_string(n) + " variants to " + dir.string() + "\n");
  return 0;
}

struct InpaintArgs {
  std::string ckpt;
  std::string image;
  std::string mask;
  ScheduleArgs schedule;
  std::string output = "inpaint";
};

int run_inpaint(const InpaintArgs& a, const Common& common, std::ostream& out) {
  const LoadedModel model = load_model(a.ckpt);
  const ScheduleSpec spec = a.schedule.resolve(model.config.inpaint.schedule);
  const NoiseSchedule schedule = checked_schedule(spec, model.kernel());
  const std::uint64_t seed = resolve_seed(common, model.config.seed);

  InpaintCondition condition{read_example(model, a.image), read_mask(model, a.mask)};
  const std::vector<float> result = inpaint(condition, *model.denoiser, model.kernel(), schedule, seed);
  const std::filesystem::path dir = a.output;
  auto files = write_examples(dir, model, single_row(result), "inpaint");
  const auto masked = std::count(condition.mask.begin(), condition.mask.end(), 1);
  const json echo = {{"command", "inpaint"}, {"checkpoint", a.ckpt}, {"checkpoint_digest", model.digest},
                     {"image", a.image}, {"mask", a.mask}, {"masked_elements", masked},
                     {"seed", std::to_string(seed)}, {"schedule", schedule_json(spec)}};
  write_json(dir / "run.json", echo);
  report(common, out, {{"run", echo}, {"files", files}},
         "inpainted " + std::to_string(masked) + " elements into " + dir.string() + "\n");
  return 0;
}

struct ValidateArgs {
  std::string suite = "all";
};

constexpr std::uint64_t kValidationSeed = 20251015;

int run_validate(const ValidateArgs& a, const Common& common, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(common, kValidationSeed);
  const auto results = run_validation_suite(a.suite, seed);
  bool ok = true;
  json list = json::array();
  for (const auto& r : results) {
    ok = ok && r.pass;
    list.push_back(r.to_json());
  }
  if (common.json_output) {
    out << json{{"suite", a.suite}, {"seed", std::to_string(seed)}, {"pass", ok}, {"checks", list}}.dump() << "\n";
  } else {
    for (const auto& r : results) {
      out << (r.pass ? "PASS " : "FAIL ") << r.check << "  statistic=" << r.statistic
          << " threshold=" << r.threshold;
      if (!r.detail.empty()) out << "  (" << r.detail << ")";
      out << "\n";
    }
    out << (ok ? "all checks passed" : "some checks failed") << "\n";
  }
  return ok ? 0 : 1;
}

struct ServeArgs {
  std::string ckpt;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state = "nkca-state";
  std::string cors_origin = "*";
  std::size_t async_after_ms = 2000;
};

int run_serve(const ServeArgs& a, const Common& common) {
  ServiceOptions options;
  options.state_dir = a.state;
  options.cors_origin = a.cors_origin;
  options.async_after = std::chrono::milliseconds(a.async_after_ms);
  options.seed = resolve_seed(common, 0);
  run_service(a.ckpt, a.host, a.port, std::move(options));
  return 0;
}

void add_schedule_options(CLI::App* cmd, ScheduleArgs& s) {
  cmd->add_option("-T,--steps", s.steps, "Number of transitions (default from the checkpoint config)");
  cmd->add_option("--beta-start", s.beta_start, "First noise level");
  cmd->add_option("--beta-end", s.beta_end, "Last noise level");
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noise-kernel contrastive adjustment: train, sample, validate and serve."};
  app.name("nkca");
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_flag("--json", common.json_output, "Machine-readable reports");
  app.add_option("--seed", common.seed, "Seed (overrides NKCA_SEED and the config)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser by contrastive adjustment");
  train_cmd->add_option("--config", train_args.config, "TOML or JSON run config")->required();
  train_cmd->add_option("-o,--output", train_args.output, "Output directory (default from the config)");
  train_cmd->add_option("--steps", train_args.steps, "Override train.steps");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Annealed synthesis from noise");
  sample_cmd->add_option("--ckpt", sample_args.ckpt, "Checkpoint")->required();
  sample_cmd->add_option("-n", sample_args.n, "Number of samples")->capture_default_str();
  add_schedule_options(sample_cmd, sample_args.schedule);
  sample_cmd->add_option("-o,--output", sample_args.output, "Output directory")->capture_default_str();

  VariantArgs variant_args;
  auto* variants_cmd = app.add_subcommand("variants", "Constant-level variants of a seed example");
  variants_cmd->add_option("--ckpt", variant_args.ckpt, "Checkpoint")->required();
  variants_cmd->add_option("--seed-image", variant_args.seed_image, "PNG or npy example")->required();
  variants_cmd->add_option("--beta", variant_args.beta, "Noise level (default 0.2)");
  variants_cmd->add_option("-T,--steps", variant_args.steps, "Transitions per candidate (default 100)");
  variants_cmd->add_option("-n", variant_args.n, "Candidates (default 8)");
  variants_cmd->add_option("-o,--output", variant_args.output, "Output directory")->capture_default_str();

  InpaintArgs inpaint_args;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "Regenerate the masked part of an example");
  inpaint_cmd->add_option("--ckpt", inpaint_args.ckpt, "Checkpoint")->required();
  inpaint_cmd->add_option("--image", inpaint_args.image, "PNG or npy example")->required();
  inpaint_cmd->add_option("--mask", inpaint_args.mask, "PNG (nonzero = regenerate) or npy mask")->required();
  add_schedule_options(inpaint_cmd, inpaint_args.schedule);
  inpaint_cmd->add_option("-o,--output", inpaint_args.output, "Output directory")->capture_default_str();

  ValidateArgs validate_args;
  auto* validate_cmd = app.add_subcommand("validate", "Run the numerical verification suite");
  validate_cmd->add_option("--suite", validate_args.suite, "Suite")
      ->check(CLI::IsMember(validation_suites()))
      ->capture_default_str();

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the variant API over HTTP");
  serve_cmd->add_option("--ckpt", serve_args.ckpt, "Checkpoint")->required();
  serve_cmd->add_option("--port", serve_args.port, "Port")->capture_default_str();
  serve_cmd->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--state", serve_args.state, "Journal and blob directory")->capture_default_str();
  serve_cmd->add_option("--cors-origin", serve_args.cors_origin, "Allowed browser origin")->capture_default_str();
  serve_cmd->add_option("--async-after-ms", serve_args.async_after_ms, "Answer 202 after this long")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train_cmd) return run_train(train_args, common, out, err);
    if (*sample_cmd) return run_sample(sample_args, common, out);
    if (*variants_cmd) return run_variants(variant_args, common, out);
    if (*inpaint_cmd) return run_inpaint(inpaint_args, common, out);
    if (*validate_cmd) return run_validate(validate_args, common, out);
    if (*serve_cmd) return run_serve(serve_args, common);
  } catch (const ScheduleError& e) {
    err << "schedule error: " << e.what();
    if (e.step() >= 0 && std::string(e.what()).find("t=") == std::string::npos) err << " (t=" << e.step() << ")";
    err << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace nkca
