// SPDX-License-Identifier: Apache-2.0
#include "ip3d/hash_grid.hpp"

#include <cmath>
#include <stdexcept>

namespace ip3d {

void HashGridConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("hash grid: levels must be >= 1");
  if (features_per_level < 1) {
    throw std::invalid_argument("hash grid: features_per_level must be >= 1");
  }
  if (coarsest_resolution < 1 || finest_resolution < coarsest_resolution) {
    throw std::invalid_argument(
        "hash grid: need finest_resolution >= coarsest_resolution >= 1");
  }
  if (table_size_log2 < 1 || table_size_log2 > 30) {
    throw std::invalid_argument("hash grid: table_size_log2 out of range");
  }
  if (!(bound > 0.0)) throw std::invalid_argument("hash grid: bound must be > 0");
}

double HashGridConfig::growth_factor() const {
  if (levels == 1) return 1.0;
  return std::exp(std::log(static_cast<double>(finest_resolution) /
                           coarsest_resolution) /
                  (levels - 1));
}

int HashGridConfig::level_resolution(int level) const {
  const double b = growth_factor();
  const int res = static_cast<int>(
      std::floor(coarsest_resolution * std::pow(b, level) + 1e-9));
  return std::max(1, res);
}

namespace {

// Spatial hash over integer lattice coordinates (Teschner-style primes).
inline uint32_t lattice_hash(uint32_t x, uint32_t y, uint32_t z) {
  return x ^ (y * 2654435761u) ^ (z * 805459861u);
}

}  // namespace

HashGridEncoding::HashGridEncoding(const HashGridConfig& config,
                                   RngStream init_rng)
    : config_(config) {
  config_.validate();
  size_t offset = 0;
  for (int l = 0; l < config_.levels; ++l) {
    const int res = config_.level_resolution(l);
    const size_t verts_per_axis = static_cast<size_t>(res) + 1;
    const size_t lattice = verts_per_axis * verts_per_axis * verts_per_axis;
    const bool hashed = lattice > config_.max_table_entries();
    const size_t entries = hashed ? config_.max_table_entries() : lattice;
    resolutions_.push_back(res);
    level_offsets_.push_back(offset);
    level_entries_.push_back(entries);
    level_hashed_.push_back(hashed ? 1 : 0);
    offset += entries;
  }
  table_.resize(offset * config_.features_per_level);
  for (double& v : table_) v = init_rng.uniform(-1e-4, 1e-4);
  grads_.assign(table_.size(), 0.0);
}

// Calls fn(level, corner_entry_index, weight, dweight) for the 8 corners of
// the enclosing cell at every level. dweight is d(weight)/d(position).
template <typename CornerFn>
void HashGridEncoding::visit_corners(const Vec3& position,
                                     CornerFn&& fn) const {
  const double bound = config_.bound;
  for (int a = 0; a < 3; ++a) {
    const double v = position[a];
    if (!std::isfinite(v)) {
      throw std::invalid_argument("hash grid: non-finite position coordinate");
    }
    if (std::abs(v) > bound * (1.0 + 1e-12) + 1e-12) {
      throw std::domain_error("hash grid: position outside the bound cube");
    }
  }
  for (int l = 0; l < config_.levels; ++l) {
    const int res = resolutions_[l];
    const double cell_scale = res / (2.0 * bound);  // d(grid coord)/d(world)
    int cell[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double u = (position[a] + bound) * cell_scale;  // in [0, res]
      int c = static_cast<int>(std::floor(u));
      c = std::min(std::max(c, 0), res - 1);
      cell[a] = c;
      frac[a] = u - c;
    }
    const size_t verts_per_axis = static_cast<size_t>(res) + 1;
    for (int corner = 0; corner < 8; ++corner) {
      const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
      const double wx = bx ? frac[0] : 1.0 - frac[0];
      const double wy = by ? frac[1] : 1.0 - frac[1];
      const double wz = bz ? frac[2] : 1.0 - frac[2];
      const double weight = wx * wy * wz;
      const Vec3 dweight(cell_scale * (bx ? 1.0 : -1.0) * wy * wz,
                         cell_scale * (by ? 1.0 : -1.0) * wx * wz,
                         cell_scale * (bz ? 1.0 : -1.0) * wx * wy);
      const size_t vx = static_cast<size_t>(cell[0] + bx);
      const size_t vy = static_cast<size_t>(cell[1] + by);
      const size_t vz = static_cast<size_t>(cell[2] + bz);
      size_t entry;
      if (level_hashed_[l]) {
        entry = lattice_hash(static_cast<uint32_t>(vx),
                             static_cast<uint32_t>(vy),
                             static_cast<uint32_t>(vz)) &
                (config_.max_table_entries() - 1);
      } else {
        entry = vx + verts_per_axis * (vy + verts_per_axis * vz);
      }
      fn(l, level_offsets_[l] + entry, weight, dweight);
    }
  }
}

void HashGridEncoding::encode(std::span<const Vec3> positions,
                              double* features) const {
  const int F = config_.features_per_level;
  const int D = config_.feature_dim();
  for (size_t i = 0; i < positions.size(); ++i) {
    double* out = features + i * D;
    std::fill(out, out + D, 0.0);
    visit_corners(positions[i],
                  [&](int level, size_t entry, double w, const Vec3&) {
                    const double* e = table_.data() + entry * F;
                    double* dst = out + level * F;
                    for (int f = 0; f < F; ++f) dst[f] += w * e[f];
                  });
  }
}

void HashGridEncoding::encode_with_jacobian(std::span<const Vec3> positions,
                                            double* features,
                                            double* jacobian) const {
  const int F = config_.features_per_level;
  const int D = config_.feature_dim();
  for (size_t i = 0; i < positions.size(); ++i) {
    double* out = features + i * D;
    double* jac = jacobian + i * D * 3;
    std::fill(out, out + D, 0.0);
    std::fill(jac, jac + D * 3, 0.0);
    visit_corners(positions[i],
                  [&](int level, size_t entry, double w, const Vec3& dw) {
                    const double* e = table_.data() + entry * F;
                    double* dst = out + level * F;
                    double* jdst = jac + level * F * 3;
                    for (int f = 0; f < F; ++f) {
                      dst[f] += w * e[f];
                      jdst[f * 3 + 0] += dw.x() * e[f];
                      jdst[f * 3 + 1] += dw.y() * e[f];
                      jdst[f * 3 + 2] += dw.z() * e[f];
                    }
                  });
  }
}

void HashGridEncoding::backward(std::span<const Vec3> positions,
                                const double* dfeatures) {
  const int F = config_.features_per_level;
  const int D = config_.feature_dim();
  for (size_t i = 0; i < positions.size(); ++i) {
    const double* dout = dfeatures + i * D;
    visit_corners(positions[i],
                  [&](int level, size_t entry, double w, const Vec3&) {
                    double* g = grads_.data() + entry * F;
                    const double* src = dout + level * F;
                    for (int f = 0; f < F; ++f) g[f] += w * src[f];
                  });
  }
}

}  // namespace ip3d
