// SPDX-License-Identifier: Apache-2.0
#include "ip3d/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace ip3d {
namespace {

double wrap_azimuth(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0.0) a += 360.0;
  return a;
}

}  // namespace

std::shared_ptr<AnalyticField> make_textured_sphere_field(double radius,
                                                          double density,
                                                          double bound) {
  auto sigma = [radius, density](const Vec3& p) {
    const double d = p.norm() - radius;
    return density / (1.0 + std::exp(d / 0.02));
  };
  auto color = [](const Vec3& p) {
    return Vec3(0.5 + 0.45 * std::sin(3.0 * p.x()) * std::cos(2.0 * p.z()),
                0.5 + 0.45 * std::sin(3.0 * p.y() + 2.0),
                0.5 + 0.45 * std::cos(3.0 * p.z() + 1.0));
  };
  return std::make_shared<AnalyticField>(sigma, color, bound);
}

SyntheticViewOracle::SyntheticViewOracle(NoiseSchedule schedule,
                                         std::shared_ptr<const Field> scene,
                                         CameraPose reference_pose,
                                         RenderSettings render_settings,
                                         double data_stddev)
    : GuidanceBackend(std::move(schedule)), scene_(std::move(scene)),
      reference_pose_(reference_pose), render_settings_(render_settings),
      s_(data_stddev) {
  if (!scene_) throw std::invalid_argument("SyntheticViewOracle: null scene");
  if (s_ < 0.0) {
    throw std::invalid_argument("SyntheticViewOracle: data_stddev must be >= 0");
  }
  render_settings_.stratified = false;
  render_settings_.rng = nullptr;
  render_settings_.compute_normals = false;
}

Image SyntheticViewOracle::ground_truth_render(const CameraPose& pose,
                                               int height, int width) const {
  const RayBatch rays = generate_rays(pose, height, width);
  return render_volume(*scene_, rays, render_settings_).image;
}

Image SyntheticViewOracle::predict_noise(const Image& noisy, int t,
                                         const ConditionSet& cond) {
  Image mu;
  if (cond.camera_delta) {
    CameraPose pose = reference_pose_;
    pose.azimuth_deg =
        wrap_azimuth(pose.azimuth_deg + cond.camera_delta->d_azimuth_deg);
    pose.elevation_deg += cond.camera_delta->d_elevation_deg;
    pose.radius += cond.camera_delta->d_radius;
    mu = ground_truth_render(pose, noisy.height(), noisy.width());
  } else if (!cond.image_prompt.empty()) {
    mu = cond.image_prompt;
    if (!mu.same_shape(noisy)) {
      mu = resize_bilinear(mu, noisy.height(), noisy.width());
    }
  } else {
    throw std::runtime_error(
        "oracle-view: missing required condition 'camera_delta'");
  }
  const double ab = schedule().alpha_bar(t);
  const double denom = ab * s_ * s_ + (1.0 - ab);
  const double scale = std::sqrt(1.0 - ab) / denom;
  Image eps_hat = noisy;
  eps_hat.add_scaled(mu, -std::sqrt(ab));
  eps_hat *= scale;
  return eps_hat;
}

std::shared_ptr<GuidanceBackend> make_synthetic_view_oracle(
    const NoiseSchedule& schedule,
    const std::map<std::string, double>& options) {
  auto opt = [&options](const char* key, double fallback) {
    const auto it = options.find(key);
    return it == options.end() ? fallback : it->second;
  };
  CameraPose reference;
  reference.azimuth_deg = opt("azimuth_deg", 0.0);
  reference.elevation_deg = opt("elevation_deg", 0.0);
  reference.radius = opt("radius", 2.2);
  reference.fov_y_deg = opt("fov_y_deg", 50.0);
  RenderSettings settings;
  settings.samples_per_ray = static_cast<int>(opt("samples_per_ray", 64));
  auto scene = make_textured_sphere_field();
  return std::make_shared<SyntheticViewOracle>(
      schedule, scene, reference, settings, opt("data_stddev", 0.0));
}

}  // namespace ip3d
