// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <vector>

#include "ip3d/rng.hpp"

namespace ip3d {

struct MlpConfig {
  int input_dim = 32;
  int hidden_dim = 64;
  int hidden_layers = 3;
  int output_dim = 4;
};

/// Fully connected net with SiLU hidden activations and a linear head.
/// Parameters live in one flat vector so the optimizer can treat the whole
/// net as a single group.
class Mlp {
 public:
  Mlp(const MlpConfig& config, RngStream init_rng);

  const MlpConfig& config() const { return config_; }
  size_t param_count() const { return params_.size(); }

  struct Cache {
    Eigen::MatrixXd input;                 // n x in
    std::vector<Eigen::MatrixXd> pre_act;  // n x hidden per hidden layer
  };

  /// x: row-major n x input_dim, y: row-major n x output_dim.
  void forward(const double* x, int n, double* y, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients for upstream dy (row-major n x out).
  /// When dx is non-null it receives d(loss)/d(input), row-major n x in.
  void backward(const Cache& cache, const double* dy, double* dx = nullptr);

  /// d(output row `which`)/d(input) for each sample, without touching
  /// parameter gradients. dx: row-major n x input_dim.
  void input_gradient(const Cache& cache, int which_output, double* dx) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& grads() { return grads_; }
  void zero_grad() { grads_.assign(grads_.size(), 0.0); }

 private:
  struct LayerView {
    Eigen::Map<Eigen::MatrixXd> weight;  // in x out
    Eigen::Map<Eigen::RowVectorXd> bias;
  };
  LayerView layer(std::vector<double>& store, int index) const;
  LayerView layer_const(const std::vector<double>& store, int index) const;
  void backward_impl(const Cache& cache, const Eigen::MatrixXd& dy, double* dx,
                     bool accumulate_param_grads);

  MlpConfig config_;
  std::vector<int> in_dims_, out_dims_;
  std::vector<size_t> offsets_;
  std::vector<double> params_;
  std::vector<double> grads_;
};

}  // namespace ip3d
