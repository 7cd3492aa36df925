// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

namespace ip3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Orbit camera around a look-at point. World is z-up; azimuth sweeps the
/// horizontal plane counter-clockwise from +x, elevation is measured from
/// that plane.
struct CameraPose {
  double azimuth_deg = 0.0;    // [0, 360)
  double elevation_deg = 0.0;
  double radius = 2.2;         // > 0
  double fov_y_deg = 50.0;     // (0, 180)
  Vec3 look_at = Vec3::Zero();

  bool operator==(const CameraPose& o) const {
    return azimuth_deg == o.azimuth_deg && elevation_deg == o.elevation_deg &&
           radius == o.radius && fov_y_deg == o.fov_y_deg &&
           look_at == o.look_at;
  }
};

/// Rigid camera-to-world frame: columns of `rotation` are the camera's
/// right/up/forward axes in world coordinates.
struct CameraFrame {
  Vec3 origin;
  Vec3 right;
  Vec3 up;
  Vec3 forward;

  Mat3 rotation() const {
    Mat3 r;
    r.col(0) = right;
    r.col(1) = up;
    r.col(2) = forward;
    return r;
  }
};

CameraFrame camera_frame(const CameraPose& pose);

struct RayBatch {
  int height = 0;
  int width = 0;
  std::vector<Vec3> origins;     // height*width, row-major
  std::vector<Vec3> directions;  // unit norm
  size_t count() const { return directions.size(); }
};

/// Pinhole rays through pixel centers. Throws if fov_y is outside (0, 180)
/// or radius <= 0.
RayBatch generate_rays(const CameraPose& pose, int height, int width);

}  // namespace ip3d
