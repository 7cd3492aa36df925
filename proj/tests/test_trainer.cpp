// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ip3d/trainer.hpp"

using namespace ip3d;

namespace {

TrainPlan tiny_plan() {
  TrainPlan plan;
  plan.stage1_epochs = 2;
  plan.stage2_epochs = 0;
  plan.iters_per_epoch = 3;
  plan.warmup_epochs = 1;
  plan.render_height = 12;
  plan.render_width = 12;
  plan.samples_per_ray = 8;
  plan.reference_view_every = 2;
  plan.tet_resolution = 8;
  plan.iso_density = 1.0;
  plan.prior_weight = 3.0;
  plan.prior_decay_iters = 1000000;  // effectively constant over tiny runs
  plan.grid.levels = 2;
  plan.grid.features_per_level = 2;
  plan.grid.coarsest_resolution = 2;
  plan.grid.finest_resolution = 4;
  plan.grid.table_size_log2 = 10;
  plan.seed = 42;
  return plan;
}

ReferenceBundle tiny_reference(int h, int w) {
  ReferenceBundle ref;
  ref.image = Image(h, w, 3);
  ref.mask = Image(h, w, 1);
  ref.pseudo_depth = Image(h, w, 1);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = std::hypot(y - cy, x - cx) / std::min(h, w);
      ref.mask.at(y, x) = r < 0.35 ? 1.0 : 0.0;
      ref.image.at(y, x, 0) = 0.2 + 0.6 * (y / double(h));
      ref.image.at(y, x, 1) = 0.8 - 0.5 * (x / double(w));
      ref.image.at(y, x, 2) = 0.5;
      ref.pseudo_depth.at(y, x) = 1.0 + r;
    }
  }
  ref.pose = CameraPose{};
  return ref;
}

std::shared_ptr<GuidanceBackend> stub_backend() {
  return std::make_shared<EpsIsEpsStub>(NoiseSchedule::linear(100));
}

class CountingBackend : public GuidanceBackend {
 public:
  CountingBackend(std::shared_ptr<GuidanceBackend> inner, int* calls)
      : GuidanceBackend(inner->schedule()), inner_(std::move(inner)),
        calls_(calls) {}
  const std::string& name() const override { return inner_->name(); }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override {
    ++*calls_;
    return inner_->predict_noise(noisy, t, cond);
  }
  void on_sds_sample(const Image& clean, const Image& eps) override {
    inner_->on_sds_sample(clean, eps);
  }

 private:
  std::shared_ptr<GuidanceBackend> inner_;
  int* calls_;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("warmup gates the 2d backend for exactly n epochs") {
  CHECK(warmup_active(0, 0).use_2d);
  CHECK(warmup_active(0, 0).use_3d);
  for (int epoch = 0; epoch < 15; ++epoch) {
    const GuidanceSelection sel = warmup_active(epoch, 15);
    CHECK(!sel.use_2d);
    CHECK(sel.use_3d);
  }
  CHECK(warmup_active(15, 15).use_2d);
  CHECK(warmup_active(16, 15).use_2d);
  CHECK(warmup_active(15, 15).use_3d);
  CHECK_THROWS_AS(warmup_active(-1, 5), std::invalid_argument);
  CHECK_THROWS_AS(warmup_active(0, -2), std::invalid_argument);
}

TEST_CASE("reference iterations return the reference pose without rng draws") {
  TrainPlan plan = tiny_plan();
  plan.reference_view_every = 2;
  CameraPose reference;
  reference.azimuth_deg = 123.0;
  reference.elevation_deg = -4.0;
  reference.look_at = Vec3(0.01, 0.02, 0.03);

  RngStream rng(9, "cam");
  const std::string before = rng.serialize();
  const CameraPose pose = sample_camera(plan, reference, 4, rng);
  CHECK(pose == reference);
  CHECK(rng.serialize() == before);  // untouched stream

  const CameraPose random_pose = sample_camera(plan, reference, 5, rng);
  CHECK(rng.serialize() != before);
  CHECK(random_pose.look_at == reference.look_at);
  CHECK(random_pose.fov_y_deg == plan.fov_y_deg);

  plan.reference_view_every = 0;  // disabled: every iteration samples
  RngStream rng2(9, "cam");
  const CameraPose p0 = sample_camera(plan, reference, 0, rng2);
  CHECK(p0.azimuth_deg != reference.azimuth_deg);
}

TEST_CASE("sampled cameras cover their ranges uniformly") {
  TrainPlan plan = tiny_plan();
  plan.reference_view_every = 0;
  plan.elevation_min_deg = -10.0;
  plan.elevation_max_deg = 45.0;
  plan.radius_min = 1.8;
  plan.radius_max = 2.2;
  const CameraPose reference;

  RngStream rng(1234, "cam-ks");
  const int n = 10000;
  std::vector<double> azimuths(n);
  for (int i = 0; i < n; ++i) {
    const CameraPose pose = sample_camera(plan, reference, i, rng);
    CHECK(pose.azimuth_deg >= 0.0);
    CHECK(pose.azimuth_deg < 360.0);
    CHECK(pose.elevation_deg >= plan.elevation_min_deg);
    CHECK(pose.elevation_deg <= plan.elevation_max_deg);
    CHECK(pose.radius >= plan.radius_min);
    CHECK(pose.radius <= plan.radius_max);
    azimuths[i] = pose.azimuth_deg;
  }
  // Kolmogorov-Smirnov distance against U[0, 360)
  std::sort(azimuths.begin(), azimuths.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = azimuths[i] / 360.0;
    d = std::max(d, std::abs(cdf - double(i) / n));
    d = std::max(d, std::abs(double(i + 1) / n - cdf));
  }
  CHECK(d < 0.02);
}

TEST_CASE("collapsed camera ranges pin the sampled values") {
  TrainPlan plan = tiny_plan();
  plan.reference_view_every = 0;
  plan.elevation_min_deg = plan.elevation_max_deg = 7.5;
  plan.radius_min = plan.radius_max = 2.0;
  RngStream rng(5, "cam-fixed");
  for (int i = 0; i < 32; ++i) {
    const CameraPose pose = sample_camera(plan, CameraPose{}, i, rng);
    CHECK(pose.elevation_deg == 7.5);
    CHECK(pose.radius == 2.0);
  }

  plan.elevation_min_deg = 10.0;
  plan.elevation_max_deg = -10.0;
  CHECK_THROWS_AS(sample_camera(plan, CameraPose{}, 0, rng),
                  std::invalid_argument);
}

TEST_CASE("identical seeds produce byte-identical training logs") {
  const TrainPlan plan = tiny_plan();
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir_a = fresh_dir("ip3d_train_det_a");
  const auto dir_b = fresh_dir("ip3d_train_det_b");

  Trainer(plan, ref, stub_backend(), stub_backend(), dir_a.string()).run();
  Trainer(plan, ref, stub_backend(), stub_backend(), dir_b.string()).run();

  const std::string log_a = slurp(dir_a / "train_log.jsonl");
  const std::string log_b = slurp(dir_b / "train_log.jsonl");
  REQUIRE(!log_a.empty());
  CHECK(log_a == log_b);

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("a backend that echoes the noise leaves the field untouched") {
  TrainPlan plan = tiny_plan();
  plan.reference_view_every = 0;  // no reconstruction pull
  plan.weights.lambda_n = 0.0;    // no smoothness pull
  plan.warmup_epochs = 0;
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir = fresh_dir("ip3d_train_frozen");

  Trainer trainer(plan, ref, stub_backend(), stub_backend(), dir.string());
  const TrainResult result = trainer.run();
  CHECK(result.stage == 1);
  for (const IterationDiag& diag : result.diags) {
    CHECK(diag.losses.sds_ip2d == 0.0);
    CHECK(diag.losses.sds_3d == 0.0);
    CHECK(diag.total == 0.0);
  }
  // zero gradient everywhere means Adam never moves a parameter
  const VolumeField pristine(plan.grid, plan.seed);
  CHECK(trainer.field().state() == pristine.state());
  std::filesystem::remove_all(dir);
}

TEST_CASE("warmup suppresses 2d guidance calls, never 3d") {
  TrainPlan plan = tiny_plan();
  plan.stage1_epochs = 2;
  plan.warmup_epochs = 1;
  plan.reference_view_every = 0;
  plan.weights.lambda_n = 0.0;
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir = fresh_dir("ip3d_train_warmup");

  int calls_2d = 0, calls_3d = 0;
  auto b2 = std::make_shared<CountingBackend>(stub_backend(), &calls_2d);
  auto b3 = std::make_shared<CountingBackend>(stub_backend(), &calls_3d);
  const TrainResult result = Trainer(plan, ref, b2, b3, dir.string()).run();

  // epoch 0 is 3d-only, epoch 1 runs both; one predict per sds draw
  CHECK(calls_2d == plan.iters_per_epoch);
  CHECK(calls_3d == 2 * plan.iters_per_epoch);
  for (const IterationDiag& diag : result.diags) {
    CHECK(diag.selection.use_3d);
    CHECK(diag.selection.use_2d == (diag.epoch >= plan.warmup_epochs));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("reconstruction terms appear only on reference iterations") {
  TrainPlan plan = tiny_plan();
  plan.reference_view_every = 2;
  plan.stage1_epochs = 1;
  plan.iters_per_epoch = 6;
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir = fresh_dir("ip3d_train_refs");

  const TrainResult result =
      Trainer(plan, ref, stub_backend(), stub_backend(), dir.string()).run();
  REQUIRE(result.diags.size() == 6);
  for (const IterationDiag& diag : result.diags) {
    CHECK(diag.reference_view == (diag.iter % 2 == 0));
    if (diag.reference_view) {
      CHECK(diag.losses.rec > 0.0);
      CHECK(diag.pose.azimuth_deg == ref.pose.azimuth_deg);
    } else {
      CHECK(diag.losses.rec == 0.0);
      CHECK(diag.losses.depth == 0.0);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("a zero depth weight disables the depth term entirely") {
  TrainPlan plan = tiny_plan();
  plan.weights.lambda_d = 0.0;
  plan.stage1_epochs = 1;
  const ReferenceBundle ref = tiny_reference(12, 12);  // pseudo depth present
  const auto dir = fresh_dir("ip3d_train_nodepth");

  const TrainResult result =
      Trainer(plan, ref, stub_backend(), stub_backend(), dir.string()).run();
  for (const IterationDiag& diag : result.diags) {
    CHECK(diag.losses.depth == 0.0);
    CHECK(!diag.depth_skipped);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
  TrainPlan two_epochs = tiny_plan();
  two_epochs.stage1_epochs = 2;
  TrainPlan one_epoch = two_epochs;
  one_epoch.stage1_epochs = 1;
  const ReferenceBundle ref = tiny_reference(12, 12);

  const auto dir_full = fresh_dir("ip3d_train_full");
  Trainer full(two_epochs, ref, stub_backend(), stub_backend(), dir_full.string());
  full.run();

  const auto dir_resume = fresh_dir("ip3d_train_resume");
  Trainer first(one_epoch, ref, stub_backend(), stub_backend(), dir_resume.string());
  first.run();
  Trainer second(two_epochs, ref, stub_backend(), stub_backend(), dir_resume.string());
  const TrainResult tail = second.run();

  // the resumed trainer only re-ran epoch 1
  REQUIRE(tail.diags.size() == size_t(two_epochs.iters_per_epoch));
  CHECK(tail.diags.front().epoch == 1);

  CHECK(slurp(dir_resume / "train_log.jsonl") == slurp(dir_full / "train_log.jsonl"));
  CHECK(second.field().state() == full.field().state());

  std::filesystem::remove_all(dir_full);
  std::filesystem::remove_all(dir_resume);
}

TEST_CASE("a full two-stage run leaves checkpoints, logs, and a mesh") {
  TrainPlan plan = tiny_plan();
  plan.stage2_epochs = 1;
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir = fresh_dir("ip3d_train_full2");

  Trainer trainer(plan, ref, stub_backend(), stub_backend(), dir.string());
  const TrainResult result = trainer.run();
  CHECK(result.stage == 2);
  CHECK(!result.mesh_path.empty());
  CHECK(std::filesystem::exists(result.mesh_path));
  CHECK(result.diags.size() ==
        size_t((plan.stage1_epochs + plan.stage2_epochs) * plan.iters_per_epoch));

  // stage-1 epochs save ckpt_0001..; the stage-2 epoch continues the index
  for (int i = 1; i <= plan.stage1_epochs + plan.stage2_epochs; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "ckpt_%04d", i);
    CHECK(std::filesystem::exists(dir / "checkpoints" / (std::string(stem) + ".json")));
    CHECK(std::filesystem::exists(dir / "checkpoints" / (std::string(stem) + ".bin")));
  }

  // stage-2 rows carry the mesh representation's losses
  int stage2_rows = 0;
  for (const IterationDiag& diag : result.diags) {
    if (diag.stage == 2) ++stage2_rows;
  }
  CHECK(stage2_rows == plan.stage2_epochs * plan.iters_per_epoch);

  SUBCASE("the run restores to a renderable stage-2 model") {
    const RestoredModel model = restore_model(dir.string());
    CHECK(model.stage == 2);
    CHECK(model.checkpoint_id ==
          std::filesystem::path(result.checkpoint).filename().string());
    REQUIRE(model.tet != nullptr);
    const Image view = model.render(ref.pose, 16, 16);
    CHECK(view.height() == 16);
    CHECK(view.width() == 16);
    for (size_t i = 0; i < view.size(); ++i) {
      CHECK(view[i] >= 0.0);
      CHECK(view[i] <= 1.0);
    }
    CHECK(!model.surface().empty());
  }

  SUBCASE("restoring an empty directory reports the missing checkpoint") {
    const auto empty_dir = fresh_dir("ip3d_train_empty");
    std::filesystem::create_directories(empty_dir);
    try {
      restore_model(empty_dir.string());
      FAIL("expected checkpoint-not-found error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("checkpoint not found") != std::string::npos);
    }
    std::filesystem::remove_all(empty_dir);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("stage-1-only runs restore as a volume model") {
  TrainPlan plan = tiny_plan();
  plan.stage2_epochs = 0;
  const ReferenceBundle ref = tiny_reference(12, 12);
  const auto dir = fresh_dir("ip3d_train_vol");
  Trainer(plan, ref, stub_backend(), stub_backend(), dir.string()).run();

  const RestoredModel model = restore_model(dir.string());
  CHECK(model.stage == 1);
  CHECK(model.tet == nullptr);
  const Image view = model.render(ref.pose, 8, 8, Vec3::Zero());
  CHECK(view.height() == 8);
  CHECK_THROWS_AS(model.surface(), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the mesh stage anneals its raster temperature halfway through") {
  auto tet = std::make_shared<TetMesh>(8, 1.0);
  auto field = std::make_shared<VolumeField>(tiny_plan().grid, 3);
  MeshRep rep(tet, field, 5.0);
  CHECK(rep.raster_temperature() == 1e-4);
  rep.on_iteration(0, 100);
  CHECK(rep.raster_temperature() == 1e-4);
  rep.on_iteration(49, 100);
  CHECK(rep.raster_temperature() == 1e-4);
  rep.on_iteration(50, 100);  // (total + 1) / 2 with total = 100
  CHECK(rep.raster_temperature() == 0.5e-4);
  rep.on_iteration(99, 100);
  CHECK(rep.raster_temperature() == 0.5e-4);
  // derived from the iteration index alone, so resume reproduces it
  rep.on_iteration(10, 100);
  CHECK(rep.raster_temperature() == 1e-4);
}

TEST_CASE("mesh-stage backward tolerates vertices deformed past the cube") {
  auto tet = std::make_shared<TetMesh>(8, 1.0);
  auto field = std::make_shared<VolumeField>(tiny_plan().grid, 3);
  // Surface near the +x face, every vertex pushed outward by the full cap:
  // iso vertices on the outermost edges land outside the field's domain.
  for (size_t i = 0; i < tet->vertex_count(); ++i) {
    tet->sdf()[i] = tet->rest_vertices()[i].x() - 0.95;
    tet->deform()[3 * i] = tet->max_deform();
  }
  tet->clamp_deform();

  MeshRep rep(tet, field, 5.0);
  CameraPose pose;
  RenderSettings settings;
  const RenderOutput out = rep.render(pose, 8, 8, settings);

  double outside = 0.0;
  const TriangleMesh surface = marching_tetrahedra(*tet);
  for (const Vec3& p : surface.positions) {
    outside = std::max(outside, p.cwiseAbs().maxCoeff());
  }
  REQUIRE(outside > 1.0);  // the scenario actually leaves the cube

  PixelGrads grads;
  grads.d_image = Image(8, 8, 3, 0.25);
  CHECK_NOTHROW(rep.backward(grads));
  (void)out;
}

TEST_CASE("the trainer validates its reference inputs") {
  const TrainPlan plan = tiny_plan();
  ReferenceBundle ref = tiny_reference(12, 12);
  ref.image = Image();
  CHECK_THROWS_AS(
      Trainer(plan, ref, stub_backend(), stub_backend(), "/tmp/ip3d_bad"),
      std::invalid_argument);

  ReferenceBundle wrong = tiny_reference(10, 10);  // plan renders at 12x12
  CHECK_THROWS_AS(
      Trainer(plan, wrong, stub_backend(), stub_backend(), "/tmp/ip3d_bad"),
      std::invalid_argument);
}

TEST_CASE("train plans survive a json round trip") {
  TrainPlan plan = tiny_plan();
  plan.weights.lambda_3d = 17.0;
  plan.background = "white";
  const TrainPlan back = TrainPlan::from_json(plan.to_json());
  CHECK(back.to_json() == plan.to_json());
  CHECK(back.stage1_epochs == plan.stage1_epochs);
  CHECK(back.weights.lambda_3d == 17.0);
  CHECK(back.grid.table_size_log2 == plan.grid.table_size_log2);
  CHECK(back.seed == plan.seed);

  TrainPlan bad = plan;
  bad.stage1_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = plan;
  bad.background = "plaid";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
