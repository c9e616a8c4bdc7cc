#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nkca/checkpoint.hpp"
#include "nkca/config.hpp"
#include "nkca/kernel_categorical.hpp"
#include "nkca/kernel_continuous.hpp"
#include "nkca/oracle.hpp"
#include "nkca/sampler.hpp"
#include "nkca/validation.hpp"

namespace py = pybind11;
using namespace nkca;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

/// Rows of `batch` reshaped to (n, *example_shape).
py::array_t<float> to_numpy(const Batch<float>& batch, const Shape& example_shape) {
  std::vector<py::ssize_t> shape{batch.rows()};
  for (auto s : example_shape) shape.push_back(static_cast<py::ssize_t>(s));
  py::array_t<float> out(shape);
  std::copy(batch.data(), batch.data() + batch.size(), out.mutable_data());
  return out;
}

std::vector<float> flat(const FloatArray& a, std::size_t dim) {
  if (static_cast<std::size_t>(a.size()) != dim) {
    throw ShapeError("expected " + std::to_string(dim) + " values, got " + std::to_string(a.size()));
  }
  return {a.data(), a.data() + a.size()};
}

NoiseSchedule schedule_or_default(const ScheduleSpec& fallback, KernelKind kind, std::optional<std::size_t> steps,
                                  std::optional<double> beta_start, std::optional<double> beta_end) {
  ScheduleSpec s = fallback;
  if (steps) s.steps = *steps;
  if (beta_start) s.beta_start = *beta_start;
  if (beta_end) s.beta_end = *beta_end;
  return s.build(kind);
}

py::dict check_dict(const CheckResult& c) {
  py::dict d;
  d["check"] = c.check;
  d["statistic"] = c.statistic;
  d["threshold"] = c.threshold;
  d["pass"] = c.pass;
  d["detail"] = c.detail;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Noise-kernel contrastive adjustment: training, sampling and checks";

  py::register_exception<Error>(m, "NkcaError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ScheduleError>(m, "ScheduleError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<KernelCoeffs>(m, "KernelCoeffs")
      .def_readonly("a", &KernelCoeffs::a)
      .def_readonly("b", &KernelCoeffs::b)
      .def("__repr__", [](const KernelCoeffs& c) {
        return "KernelCoeffs(a=" + std::to_string(c.a) + ", b=" + std::to_string(c.b) + ")";
      });

  m.def("annealed_coeffs", &annealed_coeffs, py::arg("beta_t"), py::arg("beta_next"), py::arg("alpha_t"),
        py::arg("alpha_next"), py::arg("w"));
  m.def("equilibrium_coeffs", &equilibrium_coeffs, py::arg("beta"), py::arg("alpha"), py::arg("w"));
  m.def("annealed_b", &annealed_b, py::arg("beta_t"), py::arg("beta_next"), py::arg("w"));
  m.def("equilibrium_b", &equilibrium_b, py::arg("beta"), py::arg("w"));
  m.def("sub_seed", &sub_seed, py::arg("seed"), py::arg("index"));

  m.def(
      "marginal_of_linear_gaussian",
      [](double mu, double sigma2, double a, double b, double c2) {
        const auto r = marginal_of_linear_gaussian(mu, sigma2, a, b, c2);
        return py::make_tuple(r.mean, r.variance);
      },
      py::arg("mu"), py::arg("sigma2"), py::arg("a"), py::arg("b"), py::arg("c2"));

  m.def("validation_suites", &validation_suites);
  m.def(
      "validate",
      [](const std::string& suite, std::uint64_t seed) {
        std::vector<CheckResult> checks;
        {
          py::gil_scoped_release release;
          checks = run_validation_suite(suite, seed);
        }
        py::list out;
        for (const auto& c : checks) out.append(check_dict(c));
        return out;
      },
      py::arg("suite") = "props", py::arg("seed") = 20251015);

  m.def(
      "train",
      [](const std::string& config_text, const std::filesystem::path& checkpoint, std::optional<std::uint64_t> seed,
         std::optional<std::size_t> steps) {
        RunConfig cfg = parse_run_config(config_text);
        if (seed) cfg.seed = cfg.train.seed = *seed;
        if (steps) cfg.train.total_steps = *steps;
        cfg.validate();
        Checkpoint ckpt = [&] {
          py::gil_scoped_release release;
          const Dataset data = load_dataset(cfg);
          DenoiserSpec spec = cfg.denoiser;
          spec.dim = data.dim();
          TrainOptions options;
          options.run_config = checkpoint_config(cfg, data.example_shape());
          return train(cfg.train, data, spec, cfg.kernel, options);
        }();
        save_checkpoint(ckpt, checkpoint);
        return checkpoint_digest(ckpt);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("seed") = py::none(), py::arg("steps") = py::none(),
      "Trains from TOML or JSON config text, writes the checkpoint and returns its digest.");

  py::class_<LoadedModel>(m, "Model")
      .def(py::init(&load_model), py::arg("checkpoint"))
      .def_readonly("digest", &LoadedModel::digest)
      .def_readonly("example_shape", &LoadedModel::example_shape)
      .def_property_readonly("kind", [](const LoadedModel& lm) { return std::string(to_string(lm.kernel().kind)); })
      .def_property_readonly("w", [](const LoadedModel& lm) { return lm.kernel().w; })
      .def(
          "sample",
          [](const LoadedModel& lm, std::size_t n, std::uint64_t seed, std::optional<std::size_t> steps,
             std::optional<double> beta_start, std::optional<double> beta_end) {
            const auto sched = schedule_or_default(lm.config.schedule, lm.kernel().kind, steps, beta_start, beta_end);
            Batch<float> out;
            {
              py::gil_scoped_release release;
              out = synthesize(*lm.denoiser, lm.kernel(), sched, n, seed);
            }
            return to_numpy(out, lm.example_shape);
          },
          py::arg("n"), py::arg("seed"), py::arg("steps") = py::none(), py::arg("beta_start") = py::none(),
          py::arg("beta_end") = py::none())
      .def(
          "variants",
          [](const LoadedModel& lm, const FloatArray& z0, std::uint64_t seed, std::optional<double> beta,
             std::optional<std::size_t> steps, std::optional<std::size_t> n) {
            const auto values = flat(z0, lm.denoiser->dim());
            Batch<float> out;
            {
              py::gil_scoped_release release;
              out = variants(values, beta.value_or(lm.config.variants.beta), steps.value_or(lm.config.variants.steps),
                             n.value_or(lm.config.variants.n), *lm.denoiser, lm.kernel(), seed);
            }
            return to_numpy(out, lm.example_shape);
          },
          py::arg("z0"), py::arg("seed"), py::arg("beta") = py::none(), py::arg("steps") = py::none(),
          py::arg("n") = py::none())
      .def(
          "inpaint",
          [](const LoadedModel& lm, const FloatArray& observed, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask, std::uint64_t seed,
             std::optional<std::size_t> steps) {
            const std::size_t d = lm.denoiser->dim();
            InpaintCondition c{flat(observed, d), {}};
            if (static_cast<std::size_t>(mask.size()) != d) throw ShapeError("mask must match the example size");
            c.mask.assign(mask.data(), mask.data() + mask.size());
            const auto sched =
                schedule_or_default(lm.config.inpaint.schedule, lm.kernel().kind, steps, std::nullopt, std::nullopt);
            std::vector<float> out;
            {
              py::gil_scoped_release release;
              out = inpaint(c, *lm.denoiser, lm.kernel(), sched, seed);
            }
            std::vector<py::ssize_t> shape(lm.example_shape.begin(), lm.example_shape.end());
            py::array_t<float> result(shape);
            std::copy(out.begin(), out.end(), result.mutable_data());
            return result;
          },
          py::arg("observed"), py::arg("mask"), py::arg("seed"), py::arg("steps") = py::none());
}
