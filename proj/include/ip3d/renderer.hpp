// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "ip3d/camera.hpp"
#include "ip3d/field.hpp"
#include "ip3d/image.hpp"
#include "ip3d/rng.hpp"

namespace ip3d {

/// Per-view outputs of either renderer (volume or mesh). Image channels are
/// in [0,1], depth is in world units (weight expectation, 0 where the ray is
/// empty), opacity is the per-ray weight sum, normals are unit vectors where
/// opacity exceeds the threshold and zero elsewhere.
struct RenderOutput {
  Image image;       // H x W x 3
  Image depth;       // H x W x 1
  Image opacity;     // H x W x 1
  Image normal_map;  // H x W x 3 (empty when normals were not requested)
};

/// Upstream pixel gradients fed into a renderer backward pass. Empty images
/// are treated as zero gradients.
struct PixelGrads {
  Image d_image;
  Image d_depth;
  Image d_opacity;
  Image d_normal;
};

struct RenderSettings {
  int samples_per_ray = 64;
  double near = 0.05;
  double far = 6.0;
  Vec3 background = Vec3::Ones();
  bool stratified = false;     // jitter sample positions inside segments
  RngStream* rng = nullptr;    // required when stratified
  bool compute_normals = false;
  int normal_topk = 8;         // stencil applied to the top-k weight samples
  double normal_fd_step = 1e-3;  // relative to the scene bound
  double opacity_threshold = 1e-4;
};

/// Everything the backward pass needs to replay the forward quadrature:
/// the rays, per-ray clip interval, and the exact sample positions drawn.
/// Field queries are recomputed chunk by chunk instead of stored.
struct RenderCache {
  RayBatch rays;
  RenderSettings settings;
  std::vector<double> t_enter;  // per ray; exit = enter + samples * delta
  std::vector<double> delta;    // per ray segment width, 0 where the ray misses
  std::vector<double> ts;       // per sample, ray-major
};

/// Clip a ray against the axis-aligned cube [-bound, bound]^3 intersected
/// with [near, far]. Returns nullopt when the ray misses.
std::optional<std::pair<double, double>> clip_ray_to_cube(const Vec3& origin,
                                                          const Vec3& dir,
                                                          double bound,
                                                          double near,
                                                          double far);

/// Volume-render the field along the given rays. Throws invalid_argument on
/// bad settings and runtime_error (naming the sample position) when the field
/// produces a non-finite density. Pass a cache to enable a backward pass.
RenderOutput render_volume(const Field& field, const RayBatch& rays,
                           const RenderSettings& settings,
                           RenderCache* cache = nullptr);

/// Accumulate d(loss)/d(field parameters) for the recorded forward pass.
/// Parameters must not have changed since the forward call.
void render_volume_backward(TrainableField& field, const RenderCache& cache,
                            const PixelGrads& grads);

}  // namespace ip3d
