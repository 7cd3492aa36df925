// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <vector>

#include "ip3d/camera.hpp"
#include "ip3d/renderer.hpp"
#include "ip3d/tet_mesh.hpp"

namespace ip3d {

struct RasterSettings {
  int height = 64;
  int width = 64;
  /// Sigmoid temperature of the soft coverage, in squared NDC units
  /// (screen extent is 2). The trainer anneals this by 0.5 mid stage.
  double temperature = 1e-4;
  Vec3 background = Vec3::Ones();
  bool compute_normals = false;
  double opacity_threshold = 1e-4;
  /// Fragments with d^2 > cutoff * temperature outside a triangle are dropped.
  double coverage_cutoff = 10.0;
  double near_clip = 0.05;
};

struct RasterFragment {
  int pixel = 0;
  int tri = 0;
  double coverage = 0.0;
  double z = 0.0;        // camera-space depth
  double bary[3] = {0, 0, 0};
  Eigen::Vector2d dd2_duv[3];  // d(d^2)/d(vertex NDC), envelope form
};

struct RasterCache {
  RasterSettings settings;
  CameraFrame frame;
  double tan_x = 1.0, tan_y = 1.0;
  std::vector<Vec3> cam;              // per-vertex camera coords
  std::vector<Vec3> face_normals;     // world space, unit or zero
  std::vector<RasterFragment> fragments;  // sorted per pixel, front to back
  std::vector<int> pixel_begin;           // H*W + 1 offsets into fragments
};

struct MeshGrads {
  std::vector<Vec3> d_positions;
  std::vector<Vec3> d_colors;
};

/// Soft rasterization with front-to-back alpha compositing; fills the same
/// RenderOutput contract as the volume renderer. Mesh colors must be
/// populated. An empty mesh renders to pure background.
RenderOutput rasterize_mesh(const TriangleMesh& mesh, const CameraPose& pose,
                            const RasterSettings& settings,
                            RasterCache* cache = nullptr);

/// Accumulate pixel gradients into per-vertex position and color gradients.
/// Position gradients flow through the soft coverage and the depth term;
/// face normals and barycentric weights are treated as locally constant.
void rasterize_backward(const TriangleMesh& mesh, const RasterCache& cache,
                        const PixelGrads& grads, MeshGrads& out);

}  // namespace ip3d
