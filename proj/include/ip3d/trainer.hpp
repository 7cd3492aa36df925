// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ip3d/adam.hpp"
#include "ip3d/camera.hpp"
#include "ip3d/checkpoint.hpp"
#include "ip3d/guidance.hpp"
#include "ip3d/losses.hpp"
#include "ip3d/rasterizer.hpp"
#include "ip3d/renderer.hpp"
#include "ip3d/rng.hpp"
#include "ip3d/tet_mesh.hpp"
#include "ip3d/volume_field.hpp"

namespace ip3d {

/// Two-stage schedule and hyperparameters. An epoch is iters_per_epoch
/// optimizer steps.
struct TrainPlan {
  int stage1_epochs = 20;
  int stage2_epochs = 10;
  int iters_per_epoch = 100;
  int warmup_epochs = 15;  // 3D-prior-only epochs at the start of stage 1

  LossWeights weights;

  // Camera distribution; azimuth always covers the full circle.
  double elevation_min_deg = -10.0;
  double elevation_max_deg = 45.0;
  double radius_min = 1.8;
  double radius_max = 2.2;
  double fov_y_deg = 50.0;
  /// Every k-th iteration trains at the reference pose; 0 disables.
  int reference_view_every = 2;

  double learning_rate = 1e-3;
  double mesh_lr_scale = 5.0;  // extra factor on mesh.sdf / mesh.deform

  int render_height = 64;
  int render_width = 64;
  int samples_per_ray = 64;
  std::string background = "random";  // random | white | black

  // Stage-1 center density prior, decayed linearly to zero.
  double prior_weight = 1.0;
  int prior_decay_iters = 500;

  // Stage-2 geometry.
  int tet_resolution = 32;
  double iso_density = 25.0;

  HashGridConfig grid;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainPlan from_json(const nlohmann::json& j);
};

struct GuidanceSelection {
  bool use_2d = false;
  bool use_3d = false;
};

/// Warmup gate: epochs in [0, n) run the 3D prior alone, afterwards both
/// backends are active. Never reverts.
GuidanceSelection warmup_active(int epoch, int n);

/// Random orbit pose: azimuth ~ U[0,360), elevation and radius uniform over
/// the plan ranges. Reference iterations (iteration % reference_view_every
/// == 0 when enabled) return the reference pose exactly and consume no rng
/// draws.
CameraPose sample_camera(const TrainPlan& plan, const CameraPose& reference,
                         int iteration, RngStream& rng);

/// Stage-agnostic differentiable view of the scene model.
class Representation {
 public:
  virtual ~Representation() = default;
  virtual std::string kind() const = 0;
  /// Schedule hook called before each render (temperature annealing).
  virtual void on_iteration(int stage_iter, int stage_total_iters) {}
  virtual RenderOutput render(const CameraPose& pose, int height, int width,
                              const RenderSettings& settings) = 0;
  virtual void backward(const PixelGrads& grads) = 0;
  virtual std::vector<ParamGroup> param_groups() = 0;
  virtual void zero_grad() = 0;
  /// Post-optimizer hook (deformation clamping).
  virtual void after_step() {}
  virtual void save_sections(
      std::map<std::string, std::vector<double>>& sections) const = 0;
  virtual void load_sections(
      const std::map<std::string, std::vector<double>>& sections) = 0;
};

class VolumeFieldRep : public Representation {
 public:
  explicit VolumeFieldRep(std::shared_ptr<VolumeField> field)
      : field_(std::move(field)) {}
  std::string kind() const override { return "volume"; }
  RenderOutput render(const CameraPose& pose, int height, int width,
                      const RenderSettings& settings) override;
  void backward(const PixelGrads& grads) override;
  std::vector<ParamGroup> param_groups() override;
  void zero_grad() override { field_->zero_grad(); }
  void save_sections(
      std::map<std::string, std::vector<double>>& sections) const override;
  void load_sections(
      const std::map<std::string, std::vector<double>>& sections) override;
  VolumeField& field() { return *field_; }

 private:
  std::shared_ptr<VolumeField> field_;
  RenderCache cache_;
};

/// Mesh stage: marching tetrahedra -> field-sampled vertex colors -> soft
/// rasterization. Color gradients flow into the field, position gradients
/// into the SDF and deformation grids through the vertex sources.
class MeshRep : public Representation {
 public:
  MeshRep(std::shared_ptr<TetMesh> tet, std::shared_ptr<VolumeField> field,
          double mesh_lr_scale)
      : tet_(std::move(tet)), field_(std::move(field)),
        mesh_lr_scale_(mesh_lr_scale) {}
  std::string kind() const override { return "mesh"; }
  void on_iteration(int stage_iter, int stage_total_iters) override;
  RenderOutput render(const CameraPose& pose, int height, int width,
                      const RenderSettings& settings) override;
  void backward(const PixelGrads& grads) override;
  std::vector<ParamGroup> param_groups() override;
  void zero_grad() override;
  void after_step() override;
  void save_sections(
      std::map<std::string, std::vector<double>>& sections) const override;
  void load_sections(
      const std::map<std::string, std::vector<double>>& sections) override;
  TetMesh& tet() { return *tet_; }
  double raster_temperature() const { return raster_temperature_; }

 private:
  std::shared_ptr<TetMesh> tet_;
  std::shared_ptr<VolumeField> field_;
  double mesh_lr_scale_;
  double raster_temperature_ = 1e-4;
  TriangleMesh mesh_;
  RasterCache cache_;
};

/// Per-iteration diagnostics, one JSON-lines row each.
struct IterationDiag {
  int stage = 1;
  int epoch = 0;
  int iter = 0;
  int global_iter = 0;
  bool reference_view = false;
  GuidanceSelection selection;
  LossTerms losses;
  double total = 0.0;
  bool depth_skipped = false;
  CameraPose pose;

  nlohmann::json to_json() const;
};

struct TrainResult {
  int stage = 0;             // last completed stage
  std::string checkpoint;    // stem of the final checkpoint
  std::string mesh_path;     // empty unless stage 2 ran
  std::vector<IterationDiag> diags;
};

/// Orchestrates the coarse-to-fine run: stage 1 on the volume field, a
/// marching-tetrahedra handoff, stage 2 on the deformable mesh. Backends
/// may be null (that SDS term is skipped). Checkpoints land in
/// out_dir/checkpoints, diagnostics in out_dir/train_log.jsonl.
class Trainer {
 public:
  Trainer(TrainPlan plan, ReferenceBundle reference,
          std::shared_ptr<GuidanceBackend> backend_2d,
          std::shared_ptr<GuidanceBackend> backend_3d, std::string out_dir);

  TrainResult run();

  /// One optimizer step at the given pose; exposed for tests.
  IterationDiag train_step(Representation& rep, Adam& adam,
                           const CameraPose& pose, bool is_reference,
                           GuidanceSelection selection, int stage, int epoch,
                           int iter, int stage_total_iters);

  const TrainPlan& plan() const { return plan_; }
  VolumeField& field() { return *field_; }

 private:
  Vec3 draw_background();
  ConditionSet make_conditions(const RenderOutput& out,
                               const CameraPose& pose) const;
  void save_state(Representation& rep, const Adam& adam, int stage,
                  int next_epoch, const std::string& stem) const;

  TrainPlan plan_;
  ReferenceBundle reference_;
  std::shared_ptr<GuidanceBackend> backend_2d_;
  std::shared_ptr<GuidanceBackend> backend_3d_;
  std::string out_dir_;

  std::shared_ptr<VolumeField> field_;
  std::shared_ptr<TetMesh> tet_;

  RngStream camera_rng_;
  RngStream sds_rng_;
  RngStream background_rng_;
  RngStream render_rng_;
  int global_iter_ = 0;
};

/// A trained model reloaded from a checkpoint, renderable at any pose.
struct RestoredModel {
  TrainPlan plan;
  int stage = 1;
  std::string checkpoint_id;
  std::shared_ptr<VolumeField> field;
  std::shared_ptr<TetMesh> tet;  // stage 2 only

  Image render(const CameraPose& pose, int height, int width,
               const Vec3& background = Vec3::Ones()) const;
  TriangleMesh surface() const;  // stage 2 only
};

/// Loads the checkpoint stem (or the newest one under dir/checkpoints when
/// given a run directory). Throws "checkpoint not found" when absent.
RestoredModel restore_model(const std::string& stem_or_dir);

}  // namespace ip3d
