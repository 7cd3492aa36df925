// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>

#include "ip3d/field.hpp"
#include "ip3d/guidance.hpp"
#include "ip3d/renderer.hpp"

namespace ip3d {

/// Smoothly textured solid sphere used as the desk-scale ground-truth scene.
std::shared_ptr<AnalyticField> make_textured_sphere_field(double radius = 0.55,
                                                          double density = 40.0,
                                                          double bound = 1.0);

/// Guidance oracle that pulls renders toward the ground-truth view: the
/// delta/Gaussian posterior epsilon around the scene rendered at the queried
/// camera (reference pose composed with the condition's camera_delta). With
/// no camera_delta it falls back to the image prompt as the target.
class SyntheticViewOracle : public GuidanceBackend {
 public:
  SyntheticViewOracle(NoiseSchedule schedule, std::shared_ptr<const Field> scene,
                      CameraPose reference_pose, RenderSettings render_settings,
                      double data_stddev = 0.0);

  const std::string& name() const override { return name_; }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override;

  Image ground_truth_render(const CameraPose& pose, int height,
                            int width) const;
  const CameraPose& reference_pose() const { return reference_pose_; }

 private:
  std::string name_ = "oracle-view";
  std::shared_ptr<const Field> scene_;
  CameraPose reference_pose_;
  RenderSettings render_settings_;
  double s_;
};

/// Registry factory: options may carry elevation_deg, radius, fov_y_deg,
/// samples_per_ray, data_stddev.
std::shared_ptr<GuidanceBackend> make_synthetic_view_oracle(
    const NoiseSchedule& schedule,
    const std::map<std::string, double>& options);

}  // namespace ip3d
