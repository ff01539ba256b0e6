// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phantomdiff/config.hpp"
#include "phantomdiff/dataset.hpp"
#include "phantomdiff/denoiser.hpp"
#include "phantomdiff/diffusion.hpp"
#include "phantomdiff/errors.hpp"
#include "phantomdiff/guidance.hpp"
#include "phantomdiff/io_formats.hpp"
#include "phantomdiff/metrics.hpp"
#include "phantomdiff/net.hpp"
#include "phantomdiff/phantom.hpp"
#include "phantomdiff/schedule.hpp"
#include "phantomdiff/train.hpp"

namespace py = pybind11;
using namespace phantomdiff;

namespace {

ImageGrid grid_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                          ValueRange range) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  std::copy(a.data(), a.data() + values.size(), values.begin());
  return ImageGrid(w, h, range, std::move(values));
}

py::array_t<double> array_from_grid(const ImageGrid& g) {
  py::array_t<double> a({g.height(), g.width()});
  std::copy(g.values().begin(), g.values().end(), a.mutable_data());
  return a;
}

ValueRange range_from_string(const std::string& s) {
  if (s == "normalized") return ValueRange::Normalized;
  if (s == "hu") return ValueRange::Hu;
  if (s == "binary") return ValueRange::Binary;
  if (s == "labels") return ValueRange::Labels;
  throw std::invalid_argument("unknown value range: " + s);
}

GuidanceSet set_from_list(const std::vector<std::tuple<py::array_t<double>, int, int>>& specs,
                          bool allow_many) {
  GuidanceSet set;
  set.allow_many = allow_many;
  for (const auto& [y, n, a] : specs) {
    GuidanceSpec spec;
    spec.y = grid_from_array(y, ValueRange::Normalized);
    spec.n = n;
    spec.a = a;
    set.specs.push_back(std::move(spec));
  }
  return set;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DDPM training/sampling with multi-condition low-pass guidance";

  py::register_exception<NumericError>(m, "NumericFailure");
  py::register_exception<IoError>(m, "IoFailure");
  py::register_exception<ConfigError>(m, "ConfigFailure");

  py::class_<VarianceSchedule>(m, "Schedule")
      .def_static(
          "build",
          [](const std::string& kind, int T) {
            return VarianceSchedule::build(schedule_kind_from_string(kind), T);
          },
          py::arg("kind"), py::arg("T"))
      .def_static(
          "from_betas",
          [](const std::string& kind, const std::vector<double>& betas) {
            return VarianceSchedule::from_betas(schedule_kind_from_string(kind), betas);
          },
          py::arg("kind"), py::arg("betas"))
      .def_property_readonly("T", &VarianceSchedule::steps)
      .def_property_readonly("kind", [](const VarianceSchedule& s) { return to_string(s.kind()); })
      .def_property_readonly("betas", [](const VarianceSchedule& s) { return s.betas(); })
      .def_property_readonly("alphas", [](const VarianceSchedule& s) { return s.alphas(); })
      .def_property_readonly("alpha_bars",
                             [](const VarianceSchedule& s) { return s.alpha_bars(); })
      .def_property_readonly("sigmas", [](const VarianceSchedule& s) { return s.sigmas(); })
      .def("beta", &VarianceSchedule::beta, py::arg("t"))
      .def("alpha_bar", &VarianceSchedule::alpha_bar, py::arg("t"))
      .def("save", [](const VarianceSchedule& s, const std::string& path) { write_vsch(path, s); })
      .def_static("load", [](const std::string& path) { return read_vsch(path); });

  py::class_<DenoiserModel, std::shared_ptr<DenoiserModel>>(m, "Denoiser")
      .def("predict",
           [](const DenoiserModel& d, const py::array_t<double>& x, int t) {
             return array_from_grid(d.predict(grid_from_array(x, ValueRange::Normalized), t));
           })
      .def_property_readonly("width", &DenoiserModel::input_width)
      .def_property_readonly("height", &DenoiserModel::input_height)
      .def_property_readonly("parameter_count", &DenoiserModel::parameter_count);

  m.def(
      "analytic_gaussian_denoiser",
      [](int width, int height, const std::vector<std::tuple<std::vector<double>, double, double>>& components,
         const VarianceSchedule& sched) -> std::shared_ptr<DenoiserModel> {
        std::vector<GaussianComponent> comps;
        for (const auto& [mean, var, weight] : components) {
          comps.push_back(GaussianComponent{mean, var, weight});
        }
        return std::make_shared<AnalyticGaussianDenoiser>(width, height, std::move(comps), sched);
      },
      py::arg("width"), py::arg("height"), py::arg("components"), py::arg("schedule"),
      "Exact posterior-mean denoiser for pixelwise Gaussian-mixture data; components are "
      "(mean_vector, variance, weight) tuples");

  m.def(
      "load_checkpoint",
      [](const std::string& path) -> std::shared_ptr<DenoiserModel> {
        return std::make_shared<SmallDenoiserNet>(read_dnsr(path));
      },
      py::arg("path"));

  m.def(
      "q_sample",
      [](const py::array_t<double>& x0, int t, const py::array_t<double>& eps,
         const VarianceSchedule& sched) {
        return array_from_grid(q_sample(grid_from_array(x0, ValueRange::Normalized), t,
                                        grid_from_array(eps, ValueRange::Normalized), sched));
      },
      py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

  m.def(
      "reverse_mean",
      [](const py::array_t<double>& x_t, int t, const py::array_t<double>& eps_pred,
         const VarianceSchedule& sched) {
        return array_from_grid(reverse_mean(grid_from_array(x_t, ValueRange::Normalized), t,
                                            grid_from_array(eps_pred, ValueRange::Normalized),
                                            sched));
      },
      py::arg("x_t"), py::arg("t"), py::arg("eps_pred"), py::arg("schedule"));

  m.def(
      "sample_unconditional",
      [](const DenoiserModel& model, const VarianceSchedule& sched, std::uint64_t seed) {
        return array_from_grid(
            sample_unconditional(model, sched, model.input_width(), model.input_height(), seed));
      },
      py::arg("model"), py::arg("schedule"), py::arg("seed"));

  m.def(
      "sample_guided",
      [](const DenoiserModel& model, const VarianceSchedule& sched,
         const std::vector<std::tuple<py::array_t<double>, int, int>>& conditions,
         std::uint64_t seed, bool allow_many) {
        GuidanceSet set = set_from_list(conditions, allow_many);
        GuidedSampleResult r = sample_guided(model, sched, set, model.input_width(),
                                             model.input_height(), seed);
        return py::make_tuple(array_from_grid(r.x0), r.refine_applications);
      },
      py::arg("model"), py::arg("schedule"), py::arg("conditions"), py::arg("seed"),
      py::arg("allow_many") = false,
      "conditions: list of (reference_image, n, a); returns (x0, refine_applications)");

  m.def(
      "lowpass",
      [](const py::array_t<double>& img, int factor) {
        return array_from_grid(lowpass(grid_from_array(img, ValueRange::Normalized), factor));
      },
      py::arg("image"), py::arg("factor"));

  m.def(
      "box_downsample",
      [](const py::array_t<double>& img, int factor) {
        return array_from_grid(
            box_downsample(grid_from_array(img, ValueRange::Normalized), factor));
      },
      py::arg("image"), py::arg("factor"));

  m.def(
      "refine",
      [](const py::array_t<double>& x_prev, const std::vector<py::array_t<double>>& y_noisy,
         const std::vector<std::tuple<py::array_t<double>, int, int>>& conditions, int t,
         bool allow_many) {
        GuidanceSet set = set_from_list(conditions, allow_many);
        std::vector<ImageGrid> ys;
        for (const auto& y : y_noisy) ys.push_back(grid_from_array(y, ValueRange::Normalized));
        return array_from_grid(refine(grid_from_array(x_prev, ValueRange::Normalized), ys, set, t));
      },
      py::arg("x_prev"), py::arg("y_noisy"), py::arg("conditions"), py::arg("t"),
      py::arg("allow_many") = false);

  m.def(
      "gen_anatomy",
      [](std::uint64_t seed, int width, int height) {
        return array_from_grid(gen_anatomy(seed, width, height).map);
      },
      py::arg("seed"), py::arg("width"), py::arg("height"));

  m.def(
      "render_phantom",
      [](const py::array_t<double>& map, std::uint64_t texture_seed, double texture_amplitude,
         double bias_amplitude) {
        return array_from_grid(render_phantom(grid_from_array(map, ValueRange::Labels),
                                              texture_seed,
                                              RenderOptions{texture_amplitude, bias_amplitude}));
      },
      py::arg("anatomy_map"), py::arg("texture_seed"), py::arg("texture_amplitude") = 1.0,
      py::arg("bias_amplitude") = 1.0);

  m.def(
      "to_window",
      [](const py::array_t<double>& hu, const std::string& preset) {
        return array_from_grid(
            to_window(grid_from_array(hu, ValueRange::Hu), window_preset(preset)));
      },
      py::arg("hu_image"), py::arg("preset"));

  m.def(
      "normalize_for_model",
      [](const py::array_t<double>& hu) {
        NormalizeResult r = normalize_for_model(grid_from_array(hu, ValueRange::Hu));
        return py::make_tuple(array_from_grid(r.image), r.clamped);
      },
      py::arg("hu_image"), "Returns (normalized_image, clamped_count)");

  m.def(
      "denormalize_from_model",
      [](const py::array_t<double>& norm) {
        return array_from_grid(
            denormalize_from_model(grid_from_array(norm, ValueRange::Normalized)));
      },
      py::arg("image"));

  m.def(
      "ssim",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return ssim(grid_from_array(a, ValueRange::Normalized),
                    grid_from_array(b, ValueRange::Normalized));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "set_ssim",
      [](const std::vector<py::array_t<double>>& gen, const std::vector<py::array_t<double>>& ref) {
        std::vector<ImageGrid> g, r;
        for (const auto& a : gen) g.push_back(grid_from_array(a, ValueRange::Normalized));
        for (const auto& a : ref) r.push_back(grid_from_array(a, ValueRange::Normalized));
        return set_ssim(g, r);
      },
      py::arg("generated"), py::arg("reference"));

  m.def(
      "frechet",
      [](const std::vector<py::array_t<double>>& gen, const std::vector<py::array_t<double>>& ref,
         std::uint64_t extractor_seed, const std::string& range) {
        ValueRange vr = range_from_string(range);
        std::vector<ImageGrid> g, r;
        for (const auto& a : gen) g.push_back(grid_from_array(a, vr));
        for (const auto& a : ref) r.push_back(grid_from_array(a, vr));
        FeatureExtractor ex(extractor_seed);
        return frechet_distance(extract_stats(g, ex), extract_stats(r, ex));
      },
      py::arg("generated"), py::arg("reference"), py::arg("extractor_seed") = 17,
      py::arg("range") = "normalized");

  m.def(
      "read_imgf",
      [](const std::string& path) {
        ImageGrid g = read_imgf(std::filesystem::path(path));
        return py::make_tuple(array_from_grid(g), to_string(g.range()));
      },
      py::arg("path"), "Returns (array, value_range)");

  m.def(
      "write_imgf",
      [](const std::string& path, const py::array_t<double>& img, const std::string& range) {
        write_imgf(std::filesystem::path(path), grid_from_array(img, range_from_string(range)));
      },
      py::arg("path"), py::arg("image"), py::arg("range") = "normalized");
}
