// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ip3d/camera.hpp"  // Vec3
#include "ip3d/rng.hpp"

namespace ip3d {

/// Multi-resolution hash-grid layout. Per-level resolutions grow
/// geometrically from coarsest to finest.
struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  int coarsest_resolution = 16;
  int finest_resolution = 2048;
  int table_size_log2 = 19;
  double bound = 1.0;  // scene half-extent

  void validate() const;
  double growth_factor() const;
  int level_resolution(int level) const;
  int feature_dim() const { return levels * features_per_level; }
  size_t max_table_entries() const { return size_t(1) << table_size_log2; }
};

/// Trilinearly interpolated feature table. Levels whose full vertex lattice
/// fits in the table are indexed densely, larger ones through a spatial hash.
class HashGridEncoding {
 public:
  HashGridEncoding(const HashGridConfig& config, RngStream init_rng);

  const HashGridConfig& config() const { return config_; }
  size_t param_count() const { return table_.size(); }

  /// features: row-major n x feature_dim. Positions must lie inside the
  /// bound cube (out-of-domain or non-finite input throws).
  void encode(std::span<const Vec3> positions, double* features) const;

  /// Additionally fills jacobian: row-major n x feature_dim x 3 with
  /// d(feature)/d(position) of the trilinear interpolation.
  void encode_with_jacobian(std::span<const Vec3> positions, double* features,
                            double* jacobian) const;

  /// Accumulate d(loss)/d(table) for upstream feature gradients
  /// (row-major n x feature_dim).
  void backward(std::span<const Vec3> positions, const double* dfeatures);

  std::vector<double>& table() { return table_; }
  const std::vector<double>& table() const { return table_; }
  std::vector<double>& grads() { return grads_; }
  void zero_grad() { grads_.assign(grads_.size(), 0.0); }

  /// Table offset (in entries) and entry count of one level.
  size_t level_offset(int level) const { return level_offsets_[level]; }
  size_t level_entries(int level) const { return level_entries_[level]; }

 private:
  template <typename CornerFn>
  void visit_corners(const Vec3& position, CornerFn&& fn) const;

  HashGridConfig config_;
  std::vector<int> resolutions_;
  std::vector<size_t> level_offsets_;  // entry offset per level
  std::vector<size_t> level_entries_;
  std::vector<uint8_t> level_hashed_;
  std::vector<double> table_;  // entries * features_per_level
  std::vector<double> grads_;
};

}  // namespace ip3d
