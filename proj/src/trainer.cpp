// SPDX-License-Identifier: Apache-2.0
#include "ip3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ip3d {
namespace {

constexpr double kBaseTemperature = 1e-4;

std::string ckpt_stem(const std::string& out_dir, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%04d", index);
  return out_dir + "/checkpoints/" + buf;
}

double wrap_delta_deg(double d) {
  double w = std::fmod(d + 180.0, 360.0);
  if (w < 0) w += 360.0;
  return w - 180.0;
}

}  // namespace

void TrainPlan::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0 || warmup_epochs < 0) {
    throw std::invalid_argument("TrainPlan: epoch counts must be >= 0");
  }
  if (iters_per_epoch < 1) {
    throw std::invalid_argument("TrainPlan: iters_per_epoch must be >= 1");
  }
  if (warmup_epochs > stage1_epochs) {
    throw std::invalid_argument("TrainPlan: warmup_epochs exceeds stage1_epochs");
  }
  if (elevation_min_deg > elevation_max_deg) {
    throw std::invalid_argument("TrainPlan: empty elevation range");
  }
  if (radius_min <= 0 || radius_min > radius_max) {
    throw std::invalid_argument("TrainPlan: empty radius range");
  }
  if (fov_y_deg <= 0 || fov_y_deg >= 180) {
    throw std::invalid_argument("TrainPlan: fov_y_deg outside (0, 180)");
  }
  if (reference_view_every < 0) {
    throw std::invalid_argument("TrainPlan: reference_view_every must be >= 0");
  }
  if (learning_rate <= 0 || mesh_lr_scale <= 0) {
    throw std::invalid_argument("TrainPlan: learning rates must be positive");
  }
  if (render_height < 1 || render_width < 1) {
    throw std::invalid_argument("TrainPlan: bad render resolution");
  }
  if (samples_per_ray < 2) {
    throw std::invalid_argument("TrainPlan: samples_per_ray must be >= 2");
  }
  if (background != "random" && background != "white" && background != "black") {
    throw std::invalid_argument("TrainPlan: background must be random|white|black");
  }
  if (prior_weight < 0 || prior_decay_iters < 1) {
    throw std::invalid_argument("TrainPlan: bad prior schedule");
  }
  if (stage2_epochs > 0 && tet_resolution < 8) {
    throw std::invalid_argument("TrainPlan: tet_resolution must be >= 8");
  }
  if (iso_density <= 0) {
    throw std::invalid_argument("TrainPlan: iso_density must be positive");
  }
  grid.validate();
}

nlohmann::json TrainPlan::to_json() const {
  nlohmann::json j;
  j["stage1_epochs"] = stage1_epochs;
  j["stage2_epochs"] = stage2_epochs;
  j["iters_per_epoch"] = iters_per_epoch;
  j["warmup_epochs"] = warmup_epochs;
  j["weights"] = {{"lambda_ip2d", weights.lambda_ip2d},
                  {"lambda_3d", weights.lambda_3d},
                  {"lambda_d", weights.lambda_d},
                  {"lambda_n", weights.lambda_n}};
  j["elevation_min_deg"] = elevation_min_deg;
  j["elevation_max_deg"] = elevation_max_deg;
  j["radius_min"] = radius_min;
  j["radius_max"] = radius_max;
  j["fov_y_deg"] = fov_y_deg;
  j["reference_view_every"] = reference_view_every;
  j["learning_rate"] = learning_rate;
  j["mesh_lr_scale"] = mesh_lr_scale;
  j["render_height"] = render_height;
  j["render_width"] = render_width;
  j["samples_per_ray"] = samples_per_ray;
  j["background"] = background;
  j["prior_weight"] = prior_weight;
  j["prior_decay_iters"] = prior_decay_iters;
  j["tet_resolution"] = tet_resolution;
  j["iso_density"] = iso_density;
  j["grid"] = {{"levels", grid.levels},
               {"features_per_level", grid.features_per_level},
               {"coarsest_resolution", grid.coarsest_resolution},
               {"finest_resolution", grid.finest_resolution},
               {"table_size_log2", grid.table_size_log2},
               {"bound", grid.bound}};
  j["seed"] = seed;
  return j;
}

TrainPlan TrainPlan::from_json(const nlohmann::json& j) {
  TrainPlan p;
  p.stage1_epochs = j.value("stage1_epochs", p.stage1_epochs);
  p.stage2_epochs = j.value("stage2_epochs", p.stage2_epochs);
  p.iters_per_epoch = j.value("iters_per_epoch", p.iters_per_epoch);
  p.warmup_epochs = j.value("warmup_epochs", p.warmup_epochs);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    p.weights.lambda_ip2d = w.value("lambda_ip2d", p.weights.lambda_ip2d);
    p.weights.lambda_3d = w.value("lambda_3d", p.weights.lambda_3d);
    p.weights.lambda_d = w.value("lambda_d", p.weights.lambda_d);
    p.weights.lambda_n = w.value("lambda_n", p.weights.lambda_n);
  }
  p.elevation_min_deg = j.value("elevation_min_deg", p.elevation_min_deg);
  p.elevation_max_deg = j.value("elevation_max_deg", p.elevation_max_deg);
  p.radius_min = j.value("radius_min", p.radius_min);
  p.radius_max = j.value("radius_max", p.radius_max);
  p.fov_y_deg = j.value("fov_y_deg", p.fov_y_deg);
  p.reference_view_every = j.value("reference_view_every", p.reference_view_every);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.mesh_lr_scale = j.value("mesh_lr_scale", p.mesh_lr_scale);
  p.render_height = j.value("render_height", p.render_height);
  p.render_width = j.value("render_width", p.render_width);
  p.samples_per_ray = j.value("samples_per_ray", p.samples_per_ray);
  p.background = j.value("background", p.background);
  p.prior_weight = j.value("prior_weight", p.prior_weight);
  p.prior_decay_iters = j.value("prior_decay_iters", p.prior_decay_iters);
  p.tet_resolution = j.value("tet_resolution", p.tet_resolution);
  p.iso_density = j.value("iso_density", p.iso_density);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    p.grid.levels = g.value("levels", p.grid.levels);
    p.grid.features_per_level =
        g.value("features_per_level", p.grid.features_per_level);
    p.grid.coarsest_resolution =
        g.value("coarsest_resolution", p.grid.coarsest_resolution);
    p.grid.finest_resolution =
        g.value("finest_resolution", p.grid.finest_resolution);
    p.grid.table_size_log2 = g.value("table_size_log2", p.grid.table_size_log2);
    p.grid.bound = g.value("bound", p.grid.bound);
  }
  p.seed = j.value("seed", p.seed);
  return p;
}

GuidanceSelection warmup_active(int epoch, int n) {
  if (epoch < 0 || n < 0) {
    throw std::invalid_argument("warmup_active: negative epoch or n");
  }
  if (epoch < n) return {false, true};
  return {true, true};
}

CameraPose sample_camera(const TrainPlan& plan, const CameraPose& reference,
                         int iteration, RngStream& rng) {
  if (plan.reference_view_every > 0 &&
      iteration % plan.reference_view_every == 0) {
    return reference;
  }
  if (plan.elevation_min_deg > plan.elevation_max_deg ||
      plan.radius_min > plan.radius_max) {
    throw std::invalid_argument("sample_camera: empty range");
  }
  CameraPose pose;
  pose.azimuth_deg = rng.uniform(0.0, 360.0);
  pose.elevation_deg = plan.elevation_min_deg +
                       rng.uniform() * (plan.elevation_max_deg -
                                        plan.elevation_min_deg);
  pose.radius = plan.radius_min +
                rng.uniform() * (plan.radius_max - plan.radius_min);
  pose.fov_y_deg = plan.fov_y_deg;
  pose.look_at = reference.look_at;
  return pose;
}

RenderOutput VolumeFieldRep::render(const CameraPose& pose, int height,
                                    int width, const RenderSettings& settings) {
  const RayBatch rays = generate_rays(pose, height, width);
  return render_volume(*field_, rays, settings, &cache_);
}

void VolumeFieldRep::backward(const PixelGrads& grads) {
  render_volume_backward(*field_, cache_, grads);
}

std::vector<ParamGroup> VolumeFieldRep::param_groups() {
  return field_->param_groups();
}

void VolumeFieldRep::save_sections(
    std::map<std::string, std::vector<double>>& sections) const {
  sections["field"] = field_->state();
}

void VolumeFieldRep::load_sections(
    const std::map<std::string, std::vector<double>>& sections) {
  auto it = sections.find("field");
  if (it == sections.end()) {
    throw std::runtime_error("checkpoint missing section 'field'");
  }
  field_->load_state(it->second);
}

void MeshRep::on_iteration(int stage_iter, int stage_total_iters) {
  const bool second_half =
      stage_total_iters > 0 && stage_iter >= (stage_total_iters + 1) / 2;
  raster_temperature_ = kBaseTemperature * (second_half ? 0.5 : 1.0);
}

RenderOutput MeshRep::render(const CameraPose& pose, int height, int width,
                             const RenderSettings& settings) {
  mesh_ = marching_tetrahedra(*tet_);
  if (!mesh_.empty()) sample_mesh_colors(mesh_, *field_);

  RasterSettings rs;
  rs.height = height;
  rs.width = width;
  rs.temperature = raster_temperature_;
  rs.background = settings.background;
  rs.compute_normals = settings.compute_normals;
  rs.opacity_threshold = settings.opacity_threshold;
  return rasterize_mesh(mesh_, pose, rs, &cache_);
}

void MeshRep::backward(const PixelGrads& grads) {
  if (mesh_.empty()) return;
  MeshGrads mg;
  rasterize_backward(mesh_, cache_, grads, mg);

  std::vector<double> drgb(3 * mesh_.positions.size(), 0.0);
  for (size_t v = 0; v < mesh_.positions.size(); ++v) {
    drgb[3 * v] = mg.d_colors[v].x();
    drgb[3 * v + 1] = mg.d_colors[v].y();
    drgb[3 * v + 2] = mg.d_colors[v].z();
  }
  // Deformed boundary vertices can sit slightly outside the field's cube;
  // colors were sampled at clamped positions, so deposit gradients there too.
  std::vector<Vec3> query_positions = mesh_.positions;
  const double bound = field_->bound();
  for (Vec3& p : query_positions) {
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k], -bound, bound);
  }
  field_->query_backward(query_positions, {}, drgb);

  auto& dsdf = tet_->sdf_grads();
  auto& ddef = tet_->deform_grads();
  for (size_t v = 0; v < mesh_.positions.size(); ++v) {
    const auto& src = mesh_.sources[v];
    const Vec3& dv = mg.d_positions[v];
    const Vec3 pa = tet_->deformed_vertex(src.a);
    const Vec3 pb = tet_->deformed_vertex(src.b);
    for (int k = 0; k < 3; ++k) {
      ddef[3 * src.a + k] += (1.0 - src.t) * dv[k];
      ddef[3 * src.b + k] += src.t * dv[k];
    }
    const double dt = dv.dot(pb - pa);
    const double denom = src.s_a - src.s_b;
    dsdf[src.a] += dt * (-src.s_b) / (denom * denom);
    dsdf[src.b] += dt * src.s_a / (denom * denom);
  }
}

std::vector<ParamGroup> MeshRep::param_groups() {
  std::vector<ParamGroup> groups =
      tet_->param_groups(mesh_lr_scale_, mesh_lr_scale_);
  for (auto& g : field_->param_groups()) groups.push_back(g);
  return groups;
}

void MeshRep::zero_grad() {
  tet_->zero_grad();
  field_->zero_grad();
}

void MeshRep::after_step() { tet_->clamp_deform(); }

void MeshRep::save_sections(
    std::map<std::string, std::vector<double>>& sections) const {
  sections["field"] = field_->state();
  sections["mesh.sdf"] = tet_->sdf();
  sections["mesh.deform"] = tet_->deform();
}

void MeshRep::load_sections(
    const std::map<std::string, std::vector<double>>& sections) {
  for (const char* name : {"field", "mesh.sdf", "mesh.deform"}) {
    if (!sections.count(name)) {
      throw std::runtime_error(std::string("checkpoint missing section '") +
                               name + "'");
    }
  }
  field_->load_state(sections.at("field"));
  const auto& sdf = sections.at("mesh.sdf");
  const auto& deform = sections.at("mesh.deform");
  if (sdf.size() != tet_->sdf().size() ||
      deform.size() != tet_->deform().size()) {
    throw std::runtime_error("checkpoint mesh sections do not match grid");
  }
  tet_->sdf() = sdf;
  tet_->deform() = deform;
}

nlohmann::json IterationDiag::to_json() const {
  nlohmann::json j;
  j["stage"] = stage;
  j["epoch"] = epoch;
  j["iter"] = iter;
  j["global_iter"] = global_iter;
  j["reference_view"] = reference_view;
  j["use_2d"] = selection.use_2d;
  j["use_3d"] = selection.use_3d;
  j["rec"] = losses.rec;
  j["depth"] = losses.depth;
  j["normal"] = losses.normal;
  j["sds_ip2d"] = losses.sds_ip2d;
  j["sds_3d"] = losses.sds_3d;
  j["total"] = total;
  j["depth_skipped"] = depth_skipped;
  j["pose"] = {{"azimuth_deg", pose.azimuth_deg},
               {"elevation_deg", pose.elevation_deg},
               {"radius", pose.radius}};
  return j;
}

Trainer::Trainer(TrainPlan plan, ReferenceBundle reference,
                 std::shared_ptr<GuidanceBackend> backend_2d,
                 std::shared_ptr<GuidanceBackend> backend_3d,
                 std::string out_dir)
    : plan_(std::move(plan)), reference_(std::move(reference)),
      backend_2d_(std::move(backend_2d)), backend_3d_(std::move(backend_3d)),
      out_dir_(std::move(out_dir)),
      camera_rng_(plan_.seed, "trainer-camera"),
      sds_rng_(plan_.seed, "trainer-sds"),
      background_rng_(plan_.seed, "trainer-background"),
      render_rng_(plan_.seed, "trainer-render") {
  plan_.validate();
  if (reference_.image.empty() || reference_.mask.empty()) {
    throw std::invalid_argument("Trainer: reference image and mask required");
  }
  if (reference_.image.height() != plan_.render_height ||
      reference_.image.width() != plan_.render_width) {
    throw std::invalid_argument(
        "Trainer: reference not at the render resolution");
  }
  field_ = std::make_shared<VolumeField>(plan_.grid, plan_.seed);
}

Vec3 Trainer::draw_background() {
  if (plan_.background == "white") return Vec3::Ones();
  if (plan_.background == "black") return Vec3::Zero();
  const double r = background_rng_.uniform();
  const double g = background_rng_.uniform();
  const double b = background_rng_.uniform();
  return Vec3(r, g, b);
}

ConditionSet Trainer::make_conditions(const RenderOutput& out,
                                      const CameraPose& pose) const {
  ConditionSet cond;
  cond.image_prompt = reference_.image;

  // Depth condition: min-max normalized over covered pixels, background 0.
  Image depth(out.depth.height(), out.depth.width(), 1);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < out.depth.size(); ++i) {
    if (out.opacity[i] > 1e-4) {
      lo = std::min(lo, out.depth[i]);
      hi = std::max(hi, out.depth[i]);
    }
  }
  if (hi - lo > 1e-12) {
    for (size_t i = 0; i < out.depth.size(); ++i) {
      depth[i] = out.opacity[i] > 1e-4 ? (out.depth[i] - lo) / (hi - lo) : 0.0;
    }
  }
  cond.depth_map = std::move(depth);

  cond.camera_delta = CameraDelta{
      wrap_delta_deg(pose.azimuth_deg - reference_.pose.azimuth_deg),
      pose.elevation_deg - reference_.pose.elevation_deg,
      pose.radius - reference_.pose.radius};
  return cond;
}

IterationDiag Trainer::train_step(Representation& rep, Adam& adam,
                                  const CameraPose& pose, bool is_reference,
                                  GuidanceSelection selection, int stage,
                                  int epoch, int iter, int stage_total_iters) {
  rep.on_iteration(epoch * plan_.iters_per_epoch + iter, stage_total_iters);

  if (stage == 1) {
    const double decay =
        std::max(0.0, 1.0 - double(global_iter_) / plan_.prior_decay_iters);
    field_->prior().weight = plan_.prior_weight * decay;
  } else {
    field_->prior().weight = 0.0;
  }

  rep.zero_grad();

  RenderSettings rs;
  rs.samples_per_ray = plan_.samples_per_ray;
  rs.background = draw_background();
  rs.stratified = stage == 1;
  rs.rng = &render_rng_;
  rs.compute_normals = plan_.weights.lambda_n > 0;
  RenderOutput out = rep.render(pose, plan_.render_height, plan_.render_width, rs);

  PixelGrads grads;
  LossTerms terms;
  bool depth_skipped = false;

  if (is_reference) {
    terms.rec = loss_rec_backward(reference_, out, grads, 1.0);
    if (plan_.weights.lambda_d > 0 && !reference_.pseudo_depth.empty()) {
      try {
        terms.depth =
            loss_depth_backward(reference_, out, grads, plan_.weights.lambda_d);
      } catch (const std::runtime_error& err) {
        if (std::string(err.what()).find("degenerate") == std::string::npos) {
          throw;
        }
        depth_skipped = true;
      }
    }
  }
  if (plan_.weights.lambda_n > 0) {
    terms.normal =
        loss_normal_backward(out.normal_map, grads, 9, plan_.weights.lambda_n);
  }

  const bool do_2d = selection.use_2d && backend_2d_ != nullptr;
  const bool do_3d = selection.use_3d && backend_3d_ != nullptr;
  if (do_2d || do_3d) {
    const ConditionSet cond = make_conditions(out, pose);
    if (grads.d_image.empty()) {
      grads.d_image = Image(out.image.height(), out.image.width(), 3);
    }
    auto inject = [&](GuidanceBackend& backend, double lambda, double& term) {
      const SdsResult r = sds_gradient(out.image, backend, cond, sds_rng_);
      for (size_t i = 0; i < r.pixel_gradient.size(); ++i) {
        if (!std::isfinite(r.pixel_gradient[i])) {
          term = std::numeric_limits<double>::quiet_NaN();
          return;
        }
      }
      grads.d_image.add_scaled(r.pixel_gradient, lambda);
    };
    if (do_2d) inject(*backend_2d_, plan_.weights.lambda_ip2d, terms.sds_ip2d);
    if (do_3d) inject(*backend_3d_, plan_.weights.lambda_3d, terms.sds_3d);
  }

  IterationDiag diag;
  diag.stage = stage;
  diag.epoch = epoch;
  diag.iter = iter;
  diag.global_iter = global_iter_;
  diag.reference_view = is_reference;
  diag.selection = selection;
  diag.losses = terms;
  diag.depth_skipped = depth_skipped;
  diag.pose = pose;

  try {
    diag.total = total_loss(terms, plan_.weights);
  } catch (const std::runtime_error&) {
    std::filesystem::create_directories(out_dir_);
    std::ofstream dump(out_dir_ + "/abort_diagnostics.json");
    nlohmann::json j = diag.to_json();
    j["total"] = "non-finite";
    dump << j.dump(2) << "\n";
    throw;
  }

  rep.backward(grads);
  adam.step();
  rep.after_step();
  ++global_iter_;
  return diag;
}

void Trainer::save_state(Representation& rep, const Adam& adam, int stage,
                         int next_epoch, const std::string& stem) const {
  Checkpoint ck;
  rep.save_sections(ck.sections);
  ck.sections["adam.moments"] = adam.moments_blob();
  ck.meta["format"] = 1;
  ck.meta["stage"] = stage;
  ck.meta["next_epoch"] = next_epoch;
  ck.meta["global_iter"] = global_iter_;
  ck.meta["adam_step"] = adam.step_count();
  ck.meta["rng"] = {{"camera", camera_rng_.serialize()},
                    {"sds", sds_rng_.serialize()},
                    {"background", background_rng_.serialize()},
                    {"render", render_rng_.serialize()}};
  ck.meta["plan"] = plan_.to_json();
  save_checkpoint(stem, ck);
}

TrainResult Trainer::run() {
  TrainResult result;
  std::filesystem::create_directories(out_dir_ + "/checkpoints");
  std::ofstream log(out_dir_ + "/train_log.jsonl", std::ios::app);
  if (!log) throw std::runtime_error("cannot open train_log.jsonl");

  int start_stage = 1;
  int start_epoch = 0;
  Checkpoint resume;
  const auto latest = latest_checkpoint(out_dir_ + "/checkpoints");
  if (latest) {
    resume = load_checkpoint(*latest);
    start_stage = resume.meta.at("stage").get<int>();
    start_epoch = resume.meta.at("next_epoch").get<int>();
    global_iter_ = resume.meta.at("global_iter").get<int>();
    camera_rng_.deserialize(resume.meta.at("rng").at("camera"));
    sds_rng_.deserialize(resume.meta.at("rng").at("sds"));
    background_rng_.deserialize(resume.meta.at("rng").at("background"));
    render_rng_.deserialize(resume.meta.at("rng").at("render"));
    result.checkpoint = *latest;
  }

  const int stage1_total = plan_.stage1_epochs * plan_.iters_per_epoch;
  const int stage2_total = plan_.stage2_epochs * plan_.iters_per_epoch;

  if (start_stage == 1) {
    VolumeFieldRep rep(field_);
    Adam adam({plan_.learning_rate});
    adam.attach(rep.param_groups());
    if (latest) {
      rep.load_sections(resume.sections);
      adam.load_moments_blob(resume.sections.at("adam.moments"),
                             resume.meta.at("adam_step").get<int>());
    }
    for (int epoch = start_epoch; epoch < plan_.stage1_epochs; ++epoch) {
      const GuidanceSelection sel = warmup_active(epoch, plan_.warmup_epochs);
      for (int iter = 0; iter < plan_.iters_per_epoch; ++iter) {
        const bool is_ref = plan_.reference_view_every > 0 &&
                            iter % plan_.reference_view_every == 0;
        const CameraPose pose =
            sample_camera(plan_, reference_.pose, iter, camera_rng_);
        IterationDiag diag = train_step(rep, adam, pose, is_ref, sel, 1, epoch,
                                        iter, stage1_total);
        log << diag.to_json().dump() << "\n";
        result.diags.push_back(std::move(diag));
      }
      const std::string stem = ckpt_stem(out_dir_, epoch + 1);
      save_state(rep, adam, 1, epoch + 1, stem);
      result.checkpoint = stem;
      log.flush();
    }
    result.stage = 1;
    start_epoch = 0;
  }

  if (plan_.stage2_epochs > 0) {
    if (start_stage == 1) {
      tet_ = std::make_shared<TetMesh>(
          init_from_field(*field_, plan_.tet_resolution, plan_.iso_density));
    } else {
      tet_ = std::make_shared<TetMesh>(plan_.tet_resolution, plan_.grid.bound);
    }
    MeshRep rep(tet_, field_, plan_.mesh_lr_scale);
    Adam adam({plan_.learning_rate});
    adam.attach(rep.param_groups());
    if (start_stage == 2) {
      rep.load_sections(resume.sections);
      adam.load_moments_blob(resume.sections.at("adam.moments"),
                             resume.meta.at("adam_step").get<int>());
    }
    const GuidanceSelection both{true, true};
    for (int epoch = start_epoch; epoch < plan_.stage2_epochs; ++epoch) {
      for (int iter = 0; iter < plan_.iters_per_epoch; ++iter) {
        const bool is_ref = plan_.reference_view_every > 0 &&
                            iter % plan_.reference_view_every == 0;
        const CameraPose pose =
            sample_camera(plan_, reference_.pose, iter, camera_rng_);
        IterationDiag diag = train_step(rep, adam, pose, is_ref, both, 2, epoch,
                                        iter, stage2_total);
        log << diag.to_json().dump() << "\n";
        result.diags.push_back(std::move(diag));
      }
      const std::string stem =
          ckpt_stem(out_dir_, plan_.stage1_epochs + epoch + 1);
      save_state(rep, adam, 2, epoch + 1, stem);
      result.checkpoint = stem;
      log.flush();
    }
    result.stage = 2;

    TriangleMesh mesh = marching_tetrahedra(*tet_);
    if (!mesh.empty()) {
      sample_mesh_colors(mesh, *field_);
      export_obj(out_dir_ + "/mesh.obj", mesh);
      result.mesh_path = out_dir_ + "/mesh.obj";
    }
  }
  return result;
}

Image RestoredModel::render(const CameraPose& pose, int height, int width,
                            const Vec3& background) const {
  if (stage == 2) {
    TriangleMesh mesh = surface();
    RasterSettings rs;
    rs.height = height;
    rs.width = width;
    rs.background = background;
    return rasterize_mesh(mesh, pose, rs).image;
  }
  RenderSettings rs;
  rs.samples_per_ray = plan.samples_per_ray;
  rs.background = background;
  const RayBatch rays = generate_rays(pose, height, width);
  return render_volume(*field, rays, rs).image;
}

TriangleMesh RestoredModel::surface() const {
  if (!tet) throw std::runtime_error("restored model has no mesh stage");
  TriangleMesh mesh = marching_tetrahedra(*tet);
  if (!mesh.empty()) sample_mesh_colors(mesh, *field);
  return mesh;
}

RestoredModel restore_model(const std::string& stem_or_dir) {
  std::string stem = stem_or_dir;
  if (std::filesystem::is_directory(stem_or_dir)) {
    auto found = latest_checkpoint(stem_or_dir + "/checkpoints");
    if (!found) found = latest_checkpoint(stem_or_dir);
    if (!found) {
      throw std::runtime_error("checkpoint not found under " + stem_or_dir);
    }
    stem = *found;
  }

  const Checkpoint ck = load_checkpoint(stem);
  RestoredModel m;
  m.plan = TrainPlan::from_json(ck.meta.at("plan"));
  m.stage = ck.meta.at("stage").get<int>();
  m.checkpoint_id = std::filesystem::path(stem).filename().string();
  m.field = std::make_shared<VolumeField>(m.plan.grid, m.plan.seed);
  m.field->load_state(ck.sections.at("field"));
  if (m.stage == 2) {
    m.tet = std::make_shared<TetMesh>(m.plan.tet_resolution, m.plan.grid.bound);
    m.tet->sdf() = ck.sections.at("mesh.sdf");
    m.tet->deform() = ck.sections.at("mesh.deform");
  }
  return m;
}

}  // namespace ip3d
