// SPDX-License-Identifier: Apache-2.0
#include "ip3d/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace ip3d {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

CameraFrame camera_frame(const CameraPose& pose) {
  if (pose.radius <= 0.0) {
    throw std::invalid_argument("camera_frame: radius must be > 0");
  }
  const double az = pose.azimuth_deg * kDegToRad;
  const double el = pose.elevation_deg * kDegToRad;

  CameraFrame frame;
  frame.origin = pose.look_at + pose.radius * Vec3(std::cos(el) * std::cos(az),
                                                   std::cos(el) * std::sin(az),
                                                   std::sin(el));
  frame.forward = (pose.look_at - frame.origin).normalized();

  Vec3 world_up(0.0, 0.0, 1.0);
  if (std::abs(frame.forward.dot(world_up)) > 1.0 - 1e-9) {
    world_up = Vec3(0.0, 1.0, 0.0);  // looking straight up or down
  }
  frame.right = frame.forward.cross(world_up).normalized();
  frame.up = frame.right.cross(frame.forward);
  return frame;
}

RayBatch generate_rays(const CameraPose& pose, int height, int width) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("generate_rays: height and width must be >= 1");
  }
  if (!(pose.fov_y_deg > 0.0 && pose.fov_y_deg < 180.0)) {
    throw std::invalid_argument("generate_rays: fov_y must be in (0, 180) degrees");
  }
  const CameraFrame frame = camera_frame(pose);

  const double tan_half_y = std::tan(0.5 * pose.fov_y_deg * kDegToRad);
  const double tan_half_x = tan_half_y * static_cast<double>(width) / height;

  RayBatch rays;
  rays.height = height;
  rays.width = width;
  rays.origins.reserve(static_cast<size_t>(height) * width);
  rays.directions.reserve(static_cast<size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    // +v is up in camera space, pixel rows grow downward
    const double v = (1.0 - 2.0 * (y + 0.5) / height) * tan_half_y;
    for (int x = 0; x < width; ++x) {
      const double u = (2.0 * (x + 0.5) / width - 1.0) * tan_half_x;
      Vec3 dir = frame.forward + u * frame.right + v * frame.up;
      rays.origins.push_back(frame.origin);
      rays.directions.push_back(dir.normalized());
    }
  }
  return rays;
}

}  // namespace ip3d
