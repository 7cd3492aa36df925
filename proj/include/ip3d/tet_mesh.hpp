// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "ip3d/field.hpp"

namespace ip3d {

/// Triangle surface extracted by marching tetrahedra. `sources` records how
/// each vertex was produced (the crossing edge and its interpolation state)
/// so the rasterizer backward can route position gradients into the grid.
struct TriangleMesh {
  struct VertexSource {
    int a = -1, b = -1;  // tet-grid vertex ids of the crossing edge
    double t = 0.0;      // v = pa + t * (pb - pa)
    double s_a = 0.0, s_b = 0.0;
  };

  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> colors;  // per-vertex rgb, may be empty
  std::vector<VertexSource> sources;

  bool empty() const { return triangles.empty(); }
};

/// Deformable tetrahedral grid with per-vertex SDF and offsets. Built as a
/// body-centered-cubic tetrahedralization of a resolution^3 lattice spanning
/// the scene bound cube.
class TetMesh {
 public:
  TetMesh(int resolution, double bound);

  int resolution() const { return resolution_; }
  double bound() const { return bound_; }
  double grid_spacing() const { return 2.0 * bound_ / resolution_; }
  /// Per-vertex deformation cap: half the grid spacing per component.
  double max_deform() const { return 0.5 * grid_spacing(); }

  size_t vertex_count() const { return rest_vertices_.size(); }
  size_t tet_count() const { return tets_.size(); }
  const std::vector<Vec3>& rest_vertices() const { return rest_vertices_; }
  const std::vector<std::array<int, 4>>& tets() const { return tets_; }

  std::vector<double>& sdf() { return sdf_; }
  const std::vector<double>& sdf() const { return sdf_; }
  std::vector<double>& deform() { return deform_; }  // 3 per vertex
  const std::vector<double>& deform() const { return deform_; }

  Vec3 deformed_vertex(int i) const {
    return rest_vertices_[i] +
           Vec3(deform_[3 * i], deform_[3 * i + 1], deform_[3 * i + 2]);
  }

  std::vector<ParamGroup> param_groups(double sdf_lr_scale = 1.0,
                                       double deform_lr_scale = 1.0);
  void zero_grad();
  std::vector<double>& sdf_grads() { return sdf_grads_; }
  std::vector<double>& deform_grads() { return deform_grads_; }

  /// Project deformations back into the per-component box after an
  /// optimizer step (prevents tet inversion).
  void clamp_deform();

 private:
  int resolution_;
  double bound_;
  std::vector<Vec3> rest_vertices_;
  std::vector<std::array<int, 4>> tets_;
  std::vector<double> sdf_;
  std::vector<double> deform_;
  std::vector<double> sdf_grads_;
  std::vector<double> deform_grads_;
};

/// Build the grid and set s from the field's density: s is a logistic-signed
/// transform of (sigma - iso_density), negative inside, scaled to grid units;
/// deformations start at zero. Throws "empty initialization" when the field
/// never reaches iso_density at a grid vertex.
TetMesh init_from_field(const Field& field, int grid_resolution,
                        double iso_density);

/// Extract the s = 0 surface over deformed vertices. Iso-vertices on shared
/// edges are deduplicated; triangle winding makes normals point toward s > 0.
/// Exact zeros of s are perturbed by +1e-8.
TriangleMesh marching_tetrahedra(const TetMesh& mesh);

/// Sample per-vertex colors from the field (positions clamped to its bound).
void sample_mesh_colors(TriangleMesh& mesh, const Field& field);

/// OBJ with vertex-color extension: "v x y z r g b" plus "f" lines.
void export_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

}  // namespace ip3d
