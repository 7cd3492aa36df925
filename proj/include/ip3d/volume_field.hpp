// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ip3d/field.hpp"
#include "ip3d/hash_grid.hpp"
#include "ip3d/mlp.hpp"

namespace ip3d {

/// Analytic Gaussian density prior added on top of the learned field while
/// the field bootstraps; the trainer decays `weight` to zero.
struct DensityPrior {
  double amplitude = 10.0;
  double radius = 0.3;
  double weight = 0.0;

  double density(const Vec3& p) const;
  Vec3 density_gradient(const Vec3& p) const;
};

struct NormalBatch {
  std::vector<Vec3> normals;        // unit vectors
  std::vector<uint8_t> degenerate;  // 1 where the gradient vanished
};

/// Normalize density gradients into surface normals n = -g/|g|. Gradients
/// shorter than eps are flagged degenerate and replaced by the up vector.
NormalBatch normals_from_density_gradients(std::span<const Vec3> gradients,
                                           double eps = 1e-8);

/// Learnable density + color field: hash-grid encoding into a small MLP.
/// Density goes through softplus (plus the optional analytic prior), color
/// through a sigmoid.
class VolumeField : public TrainableField {
 public:
  VolumeField(const HashGridConfig& grid_config, uint64_t seed,
              int hidden_dim = 64, int hidden_layers = 3);

  double bound() const override { return encoding_.config().bound; }
  const HashGridConfig& grid_config() const { return encoding_.config(); }

  void query(std::span<const Vec3> positions, std::span<double> sigma,
             std::span<double> rgb) const override;
  void query_density(std::span<const Vec3> positions,
                     std::span<double> sigma) const override;

  void query_backward(std::span<const Vec3> positions,
                      std::span<const double> dsigma,
                      std::span<const double> drgb) override;

  std::vector<ParamGroup> param_groups() override;
  void zero_grad() override;

  /// Exact reverse-mode gradient of the density w.r.t. position.
  void density_gradient(std::span<const Vec3> positions,
                        std::span<Vec3> gradients) const;

  /// Unit surface normals -grad(sigma)/|grad(sigma)| by automatic
  /// differentiation of the density; degenerate samples get the up vector.
  NormalBatch normals_at(std::span<const Vec3> positions) const;

  DensityPrior& prior() { return prior_; }
  const DensityPrior& prior() const { return prior_; }

  double density_bias() const { return density_bias_; }
  void set_density_bias(double b) { density_bias_ = b; }

  /// Flat parameter serialization (tables + MLP + bias), used by checkpoints.
  std::vector<double> state() const;
  void load_state(std::span<const double> state);

  int mlp_hidden_dim() const { return mlp_.config().hidden_dim; }
  int mlp_hidden_layers() const { return mlp_.config().hidden_layers; }

 private:
  static constexpr int kChunk = 8192;

  HashGridEncoding encoding_;
  Mlp mlp_;
  double density_bias_ = -3.0;
  DensityPrior prior_;
};

}  // namespace ip3d
