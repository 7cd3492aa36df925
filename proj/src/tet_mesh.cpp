// SPDX-License-Identifier: Apache-2.0
#include "ip3d/tet_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace ip3d {
namespace {

constexpr size_t kQueryChunk = 8192;

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c,
                     const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

}  // namespace

TetMesh::TetMesh(int resolution, double bound)
    : resolution_(resolution), bound_(bound) {
  if (resolution < 2) {
    throw std::invalid_argument("TetMesh: resolution must be >= 2");
  }
  if (bound <= 0.0) throw std::invalid_argument("TetMesh: bound must be > 0");

  const int n = resolution;
  const double spacing = grid_spacing();
  const int corners_per_axis = n + 1;
  const size_t n_corners = static_cast<size_t>(corners_per_axis) *
                           corners_per_axis * corners_per_axis;
  const size_t n_centers = static_cast<size_t>(n) * n * n;
  rest_vertices_.reserve(n_corners + n_centers);

  auto corner_id = [&](int ix, int iy, int iz) {
    return (static_cast<size_t>(ix) * corners_per_axis + iy) *
               corners_per_axis + iz;
  };
  auto center_id = [&](int cx, int cy, int cz) {
    return n_corners + (static_cast<size_t>(cx) * n + cy) * n + cz;
  };

  for (int ix = 0; ix <= n; ++ix) {
    for (int iy = 0; iy <= n; ++iy) {
      for (int iz = 0; iz <= n; ++iz) {
        rest_vertices_.emplace_back(-bound + ix * spacing,
                                    -bound + iy * spacing,
                                    -bound + iz * spacing);
      }
    }
  }
  for (int cx = 0; cx < n; ++cx) {
    for (int cy = 0; cy < n; ++cy) {
      for (int cz = 0; cz < n; ++cz) {
        rest_vertices_.emplace_back(-bound + (cx + 0.5) * spacing,
                                    -bound + (cy + 0.5) * spacing,
                                    -bound + (cz + 0.5) * spacing);
      }
    }
  }

  // Cyclic corner quad of a cell face with one lattice coordinate fixed.
  auto face_quad = [&](int axis, int fixed, int u, int v) {
    std::array<size_t, 4> q;
    if (axis == 0) {
      q = {corner_id(fixed, u, v), corner_id(fixed, u + 1, v),
           corner_id(fixed, u + 1, v + 1), corner_id(fixed, u, v + 1)};
    } else if (axis == 1) {
      q = {corner_id(u, fixed, v), corner_id(u + 1, fixed, v),
           corner_id(u + 1, fixed, v + 1), corner_id(u, fixed, v + 1)};
    } else {
      q = {corner_id(u, v, fixed), corner_id(u + 1, v, fixed),
           corner_id(u + 1, v + 1, fixed), corner_id(u, v + 1, fixed)};
    }
    return q;
  };
  auto cell_center = [&](int axis, int a, int u, int v) {
    if (axis == 0) return center_id(a, u, v);
    if (axis == 1) return center_id(u, a, v);
    return center_id(u, v, a);
  };

  auto push_tet = [&](size_t a, size_t b, size_t c, size_t d) {
    std::array<int, 4> t = {static_cast<int>(a), static_cast<int>(b),
                            static_cast<int>(c), static_cast<int>(d)};
    if (signed_volume(rest_vertices_[t[0]], rest_vertices_[t[1]],
                      rest_vertices_[t[2]], rest_vertices_[t[3]]) < 0.0) {
      std::swap(t[2], t[3]);
    }
    tets_.push_back(t);
  };

  const size_t interior = 3ull * (n - 1) * n * n * 4 + 6ull * n * n * 2;
  tets_.reserve(interior);
  for (int axis = 0; axis < 3; ++axis) {
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        for (int plane = 0; plane <= n; ++plane) {
          const auto q = face_quad(axis, plane, u, v);
          if (plane > 0 && plane < n) {
            const size_t ca = cell_center(axis, plane - 1, u, v);
            const size_t cb = cell_center(axis, plane, u, v);
            for (int e = 0; e < 4; ++e) {
              push_tet(ca, cb, q[e], q[(e + 1) % 4]);
            }
          } else {
            const size_t c =
                cell_center(axis, plane == 0 ? 0 : n - 1, u, v);
            push_tet(c, q[0], q[1], q[2]);
            push_tet(c, q[0], q[2], q[3]);
          }
        }
      }
    }
  }

  sdf_.assign(vertex_count(), 0.0);
  deform_.assign(vertex_count() * 3, 0.0);
  sdf_grads_.assign(vertex_count(), 0.0);
  deform_grads_.assign(vertex_count() * 3, 0.0);
}

std::vector<ParamGroup> TetMesh::param_groups(double sdf_lr_scale,
                                              double deform_lr_scale) {
  return {
      {"mesh.sdf", std::span<double>(sdf_), std::span<double>(sdf_grads_),
       sdf_lr_scale},
      {"mesh.deform", std::span<double>(deform_),
       std::span<double>(deform_grads_), deform_lr_scale},
  };
}

void TetMesh::zero_grad() {
  sdf_grads_.assign(sdf_grads_.size(), 0.0);
  deform_grads_.assign(deform_grads_.size(), 0.0);
}

void TetMesh::clamp_deform() {
  const double cap = max_deform();
  for (double& d : deform_) d = std::clamp(d, -cap, cap);
}

TetMesh init_from_field(const Field& field, int grid_resolution,
                        double iso_density) {
  if (grid_resolution < 8) {
    throw std::invalid_argument("init_from_field: grid_resolution must be >= 8");
  }
  if (iso_density <= 0.0) {
    throw std::invalid_argument("init_from_field: iso_density must be > 0");
  }
  TetMesh mesh(grid_resolution, field.bound());
  const auto& verts = mesh.rest_vertices();
  std::vector<double> sigma(verts.size());
  std::vector<Vec3> chunk;
  for (size_t begin = 0; begin < verts.size(); begin += kQueryChunk) {
    const size_t end = std::min(verts.size(), begin + kQueryChunk);
    chunk.assign(verts.begin() + begin, verts.begin() + end);
    field.query_density(chunk,
                        std::span<double>(sigma.data() + begin, end - begin));
  }
  const double max_sigma = *std::max_element(sigma.begin(), sigma.end());
  if (max_sigma < iso_density) {
    throw std::runtime_error("init_from_field: empty initialization");
  }
  const double k = 2.0 / iso_density;
  const double scale = mesh.grid_spacing();
  for (size_t i = 0; i < sigma.size(); ++i) {
    const double logistic = 1.0 / (1.0 + std::exp(-k * (sigma[i] - iso_density)));
    mesh.sdf()[i] = (0.5 - logistic) * scale;
  }
  return mesh;
}

TriangleMesh marching_tetrahedra(const TetMesh& mesh) {
  TriangleMesh out;
  const auto& tets = mesh.tets();
  const std::vector<double>& sdf_raw = mesh.sdf();
  const size_t nv = mesh.vertex_count();

  std::unordered_map<uint64_t, int> edge_vertices;
  auto iso_vertex = [&](int a, int b) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    const uint64_t key = static_cast<uint64_t>(lo) * nv + hi;
    const auto it = edge_vertices.find(key);
    if (it != edge_vertices.end()) return it->second;
    double s_lo = sdf_raw[lo], s_hi = sdf_raw[hi];
    if (s_lo == 0.0) s_lo = 1e-8;
    if (s_hi == 0.0) s_hi = 1e-8;
    const double t = s_lo / (s_lo - s_hi);
    const Vec3 p_lo = mesh.deformed_vertex(lo);
    const Vec3 p_hi = mesh.deformed_vertex(hi);
    const int id = static_cast<int>(out.positions.size());
    out.positions.push_back(p_lo + t * (p_hi - p_lo));
    out.sources.push_back({lo, hi, t, s_lo, s_hi});
    edge_vertices.emplace(key, id);
    return id;
  };

  auto emit = [&](int v0, int v1, int v2, const Vec3& toward_outside) {
    const Vec3 n = (out.positions[v1] - out.positions[v0])
                       .cross(out.positions[v2] - out.positions[v0]);
    if (n.dot(toward_outside) < 0.0) {
      out.triangles.push_back({v0, v2, v1});
    } else {
      out.triangles.push_back({v0, v1, v2});
    }
  };

  for (const auto& tet : tets) {
    double s[4];
    int inside[4], outside[4];
    int ni = 0, no = 0;
    for (int j = 0; j < 4; ++j) {
      s[j] = sdf_raw[tet[j]];
      if (s[j] == 0.0) s[j] = 1e-8;
      if (s[j] < 0.0) {
        inside[ni++] = j;
      } else {
        outside[no++] = j;
      }
    }
    if (ni == 0 || ni == 4) continue;

    Vec3 in_centroid = Vec3::Zero(), out_centroid = Vec3::Zero();
    for (int j = 0; j < ni; ++j) in_centroid += mesh.deformed_vertex(tet[inside[j]]);
    for (int j = 0; j < no; ++j) out_centroid += mesh.deformed_vertex(tet[outside[j]]);
    const Vec3 toward_outside = out_centroid / no - in_centroid / ni;

    if (ni == 1) {
      const int a = tet[inside[0]];
      emit(iso_vertex(a, tet[outside[0]]), iso_vertex(a, tet[outside[1]]),
           iso_vertex(a, tet[outside[2]]), toward_outside);
    } else if (ni == 3) {
      const int b = tet[outside[0]];
      emit(iso_vertex(tet[inside[0]], b), iso_vertex(tet[inside[1]], b),
           iso_vertex(tet[inside[2]], b), toward_outside);
    } else {
      const int a = tet[inside[0]], b = tet[inside[1]];
      const int c = tet[outside[0]], d = tet[outside[1]];
      const int vac = iso_vertex(a, c), vad = iso_vertex(a, d);
      const int vbc = iso_vertex(b, c), vbd = iso_vertex(b, d);
      emit(vac, vad, vbd, toward_outside);
      emit(vac, vbd, vbc, toward_outside);
    }
  }
  return out;
}

void sample_mesh_colors(TriangleMesh& mesh, const Field& field) {
  mesh.colors.resize(mesh.positions.size());
  const double bound = field.bound();
  std::vector<Vec3> positions;
  std::vector<double> sigma, rgb;
  for (size_t begin = 0; begin < mesh.positions.size(); begin += kQueryChunk) {
    const size_t end = std::min(mesh.positions.size(), begin + kQueryChunk);
    positions.assign(mesh.positions.begin() + begin,
                     mesh.positions.begin() + end);
    for (Vec3& p : positions) {
      for (int j = 0; j < 3; ++j) p[j] = std::clamp(p[j], -bound, bound);
    }
    sigma.resize(positions.size());
    rgb.resize(positions.size() * 3);
    field.query(positions, sigma, rgb);
    for (size_t i = 0; i < positions.size(); ++i) {
      mesh.colors[begin + i] = Vec3(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    }
  }
}

void export_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("export_obj: cannot open " + path.string());
  }
  os.precision(9);
  const bool with_colors = mesh.colors.size() == mesh.positions.size();
  for (size_t i = 0; i < mesh.positions.size(); ++i) {
    const Vec3& p = mesh.positions[i];
    os << "v " << p.x() << " " << p.y() << " " << p.z();
    if (with_colors) {
      const Vec3& c = mesh.colors[i];
      os << " " << c.x() << " " << c.y() << " " << c.z();
    }
    os << "\n";
  }
  for (const auto& t : mesh.triangles) {
    os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  if (!os) throw std::runtime_error("export_obj: write failed");
}

}  // namespace ip3d
