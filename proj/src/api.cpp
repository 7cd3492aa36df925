// SPDX-License-Identifier: Apache-2.0
#include "ip3d/api.hpp"

#include <fstream>
#include <memory>

#include "ip3d/config.hpp"
#include "ip3d/evalkit.hpp"
#include "ip3d/guidance.hpp"
#include "ip3d/trainer.hpp"

namespace ip3d::api {
namespace {

std::shared_ptr<GuidanceBackend> make_backend(
    const std::string& name, const std::map<std::string, double>& options,
    bool wrap_2d) {
  if (name.empty() || name == "none") return nullptr;
  const NoiseSchedule schedule = NoiseSchedule::linear();
  auto inner = BackendRegistry::instance().create(name, schedule, options);
  if (wrap_2d) return std::make_shared<Ip2dBackend>(inner);
  return std::make_shared<Pose3dBackend>(inner);
}

TurntableSet make_turntable(const RestoredModel& model, int frames,
                            double elevation_deg) {
  TurntableOptions topt;
  topt.frames = frames;
  topt.elevation_deg = elevation_deg;
  topt.radius = 0.5 * (model.plan.radius_min + model.plan.radius_max);
  topt.fov_y_deg = model.plan.fov_y_deg;
  return ip3d::render_turntable(
      [&](const CameraPose& pose) {
        return model.render(pose, model.plan.render_height,
                            model.plan.render_width);
      },
      topt);
}

}  // namespace

nlohmann::json generate(const std::string& config_path,
                        long long seed_override,
                        const std::string& output_override,
                        const std::string& backend_override) {
  RunConfig cfg = load_config(config_path);
  if (seed_override >= 0) cfg.plan.seed = static_cast<uint64_t>(seed_override);
  if (!output_override.empty()) cfg.output_dir = output_override;
  if (!backend_override.empty()) {
    cfg.backend_2d = backend_override;
    cfg.backend_3d = backend_override;
  }
  cfg.validate();

  auto b2d = make_backend(cfg.backend_2d, cfg.backend_2d_options, true);
  auto b3d = make_backend(cfg.backend_3d, cfg.backend_3d_options, false);

  Trainer trainer(cfg.plan, load_reference(cfg), b2d, b3d, cfg.output_dir);
  const TrainResult result = trainer.run();

  save_config(cfg, cfg.output_dir + "/run_config.json");
  nlohmann::json out;
  out["stage"] = result.stage;
  out["checkpoint"] = result.checkpoint;
  out["mesh"] = result.mesh_path;
  out["iterations"] = result.diags.size();
  out["output_dir"] = cfg.output_dir;
  return out;
}

nlohmann::json render_turntable(const std::string& run_dir, int frames,
                                double elevation_deg) {
  const RestoredModel model = restore_model(run_dir);
  const TurntableSet set = make_turntable(model, frames, elevation_deg);
  write_turntable(set, run_dir + "/turntable");
  nlohmann::json out;
  out["frames"] = set.frames.size();
  out["directory"] = run_dir + "/turntable";
  out["checkpoint"] = model.checkpoint_id;
  return out;
}

nlohmann::json evaluate(const std::string& config_path,
                        const std::string& output_override, int frames,
                        double elevation_deg) {
  RunConfig cfg = load_config(config_path);
  const std::string run_dir =
      output_override.empty() ? cfg.output_dir : output_override;
  const RestoredModel model = restore_model(run_dir);
  const ReferenceBundle ref = load_reference(cfg);
  const TurntableSet set = make_turntable(model, frames, elevation_deg);

  const nlohmann::json metrics =
      evaluate_turntable(set, ref.image, {"randproj"}, model.checkpoint_id);
  std::ofstream out(run_dir + "/metrics.json");
  out << metrics.dump(2) << "\n";
  return metrics;
}

nlohmann::json export_mesh(const std::string& run_dir) {
  const RestoredModel model = restore_model(run_dir);

  TriangleMesh mesh;
  if (model.stage == 2) {
    mesh = model.surface();
  } else {
    TetMesh tet = init_from_field(*model.field, model.plan.tet_resolution,
                                  model.plan.iso_density);
    mesh = marching_tetrahedra(tet);
    if (!mesh.empty()) sample_mesh_colors(mesh, *model.field);
  }
  const std::string path = run_dir + "/export/mesh.obj";
  export_obj(path, mesh);
  nlohmann::json out;
  out["mesh"] = path;
  out["vertices"] = mesh.positions.size();
  out["triangles"] = mesh.triangles.size();
  return out;
}

}  // namespace ip3d::api
