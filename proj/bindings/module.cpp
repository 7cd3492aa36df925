// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "ip3d/api.hpp"
#include "ip3d/evalkit.hpp"
#include "ip3d/guidance.hpp"
#include "ip3d/image_io.hpp"
#include "ip3d/renderer.hpp"
#include "ip3d/synthetic.hpp"
#include "ip3d/trainer.hpp"

namespace py = pybind11;
using namespace ip3d;

namespace {

py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> arr({img.height(), img.width(), img.channels()});
  std::copy(img.data(), img.data() + img.size(), arr.mutable_data());
  return arr;
}

}  // namespace

PYBIND11_MODULE(ip3d_core, m) {
  m.doc() = "Single-image-to-3D generation core";

  m.def(
      "generate",
      [](const std::string& config, long long seed, const std::string& output,
         const std::string& backend) {
        return api::generate(config, seed, output, backend).dump();
      },
      py::arg("config"), py::arg("seed") = -1, py::arg("output") = "",
      py::arg("backend") = "",
      "Run two-stage training from a config file; returns a JSON summary.");

  m.def(
      "render_turntable",
      [](const std::string& run_dir, int frames, double elevation) {
        return api::render_turntable(run_dir, frames, elevation).dump();
      },
      py::arg("run_dir"), py::arg("frames") = 8, py::arg("elevation") = 15.0,
      "Render turntable frames from the newest checkpoint.");

  m.def(
      "evaluate",
      [](const std::string& config, const std::string& output, int frames,
         double elevation) {
        return api::evaluate(config, output, frames, elevation).dump();
      },
      py::arg("config"), py::arg("output") = "", py::arg("frames") = 8,
      py::arg("elevation") = 15.0,
      "Compute turntable metrics; returns the metrics.json content.");

  m.def(
      "export_mesh",
      [](const std::string& run_dir) {
        return api::export_mesh(run_dir).dump();
      },
      py::arg("run_dir"), "Extract the surface and write an OBJ.");

  m.def(
      "render_view",
      [](const std::string& run_dir, double azimuth, double elevation,
         int height, int width) {
        const RestoredModel model = restore_model(run_dir);
        CameraPose pose;
        pose.azimuth_deg = azimuth;
        pose.elevation_deg = elevation;
        pose.radius = 0.5 * (model.plan.radius_min + model.plan.radius_max);
        pose.fov_y_deg = model.plan.fov_y_deg;
        return image_to_array(model.render(pose, height, width));
      },
      py::arg("run_dir"), py::arg("azimuth") = 0.0,
      py::arg("elevation") = 15.0, py::arg("height") = 64,
      py::arg("width") = 64, "Render one view of a restored model.");

  m.def(
      "sphere_preview",
      [](double azimuth, double elevation, int height, int width,
         int samples) {
        const auto field = make_textured_sphere_field();
        CameraPose pose;
        pose.azimuth_deg = azimuth;
        pose.elevation_deg = elevation;
        RenderSettings rs;
        rs.samples_per_ray = samples;
        const RayBatch rays = generate_rays(pose, height, width);
        return image_to_array(render_volume(*field, rays, rs).image);
      },
      py::arg("azimuth") = 0.0, py::arg("elevation") = 15.0,
      py::arg("height") = 32, py::arg("width") = 32, py::arg("samples") = 64,
      "Volume-render the bundled analytic test scene.");

  m.def("read_png", [](const std::string& path) {
    return image_to_array(io::read_png(path));
  });

  m.def("registered_backends",
        [] { return BackendRegistry::instance().names(); });
  m.def("registered_extractors",
        [] { return ExtractorRegistry::instance().names(); });

  m.attr("__version__") = "0.1.0";
}
