// SPDX-License-Identifier: Apache-2.0
#include "ip3d/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace ip3d {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// SiLU and its derivative, applied elementwise to Eigen expressions.
inline Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}
inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

}  // namespace

Mlp::Mlp(const MlpConfig& config, RngStream init_rng) : config_(config) {
  if (config.input_dim < 1 || config.hidden_dim < 1 || config.output_dim < 1 ||
      config.hidden_layers < 1) {
    throw std::invalid_argument("mlp: all dimensions must be >= 1");
  }
  int in = config.input_dim;
  for (int l = 0; l < config.hidden_layers + 1; ++l) {
    const int out = (l == config.hidden_layers) ? config.output_dim
                                                : config.hidden_dim;
    in_dims_.push_back(in);
    out_dims_.push_back(out);
    offsets_.push_back(params_.size());
    params_.resize(params_.size() + static_cast<size_t>(in) * out + out);
    in = out;
  }
  // Xavier-uniform weights, zero biases.
  for (size_t l = 0; l < in_dims_.size(); ++l) {
    const double limit = std::sqrt(6.0 / (in_dims_[l] + out_dims_[l]));
    double* w = params_.data() + offsets_[l];
    for (size_t i = 0; i < static_cast<size_t>(in_dims_[l]) * out_dims_[l]; ++i) {
      w[i] = init_rng.uniform(-limit, limit);
    }
  }
  grads_.assign(params_.size(), 0.0);
}

Mlp::LayerView Mlp::layer(std::vector<double>& store, int index) const {
  double* base = store.data() + offsets_[index];
  const size_t wsize = static_cast<size_t>(in_dims_[index]) * out_dims_[index];
  return {Eigen::Map<Eigen::MatrixXd>(base, in_dims_[index], out_dims_[index]),
          Eigen::Map<Eigen::RowVectorXd>(base + wsize, out_dims_[index])};
}

Mlp::LayerView Mlp::layer_const(const std::vector<double>& store,
                                int index) const {
  double* base = const_cast<double*>(store.data()) + offsets_[index];
  const size_t wsize = static_cast<size_t>(in_dims_[index]) * out_dims_[index];
  return {Eigen::Map<Eigen::MatrixXd>(base, in_dims_[index], out_dims_[index]),
          Eigen::Map<Eigen::RowVectorXd>(base + wsize, out_dims_[index])};
}

void Mlp::forward(const double* x, int n, double* y, Cache* cache) const {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd act =
      Eigen::Map<const RowMajor>(x, n, config_.input_dim);
  if (cache) {
    cache->input = act;
    cache->pre_act.clear();
  }
  for (int l = 0; l < config_.hidden_layers; ++l) {
    const LayerView lv = layer_const(params_, l);
    Eigen::MatrixXd z = (act * lv.weight).rowwise() + lv.bias;
    if (cache) cache->pre_act.push_back(z);
    act = silu(z);
  }
  const LayerView head = layer_const(params_, config_.hidden_layers);
  Eigen::MatrixXd out = (act * head.weight).rowwise() + head.bias;
  Eigen::Map<RowMajor>(y, n, config_.output_dim) = out;
}

void Mlp::backward_impl(const Cache& cache, const Eigen::MatrixXd& dy,
                        double* dx, bool accumulate_param_grads) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int n = static_cast<int>(cache.input.rows());
  Eigen::MatrixXd delta = dy;  // gradient w.r.t. current layer output
  for (int l = config_.hidden_layers; l >= 0; --l) {
    const Eigen::MatrixXd& below =
        (l == 0) ? cache.input : silu(cache.pre_act[l - 1]);
    if (accumulate_param_grads) {
      LayerView gv = layer(grads_, l);
      gv.weight.noalias() += below.transpose() * delta;
      gv.bias += delta.colwise().sum();
    }
    if (l == 0 && dx == nullptr) break;
    const LayerView lv = layer_const(params_, l);
    Eigen::MatrixXd dbelow = delta * lv.weight.transpose();
    if (l == 0) {
      Eigen::Map<RowMajor>(dx, n, config_.input_dim) = dbelow;
      break;
    }
    delta = dbelow.cwiseProduct(silu_grad(cache.pre_act[l - 1]));
  }
}

void Mlp::backward(const Cache& cache, const double* dy, double* dx) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int n = static_cast<int>(cache.input.rows());
  Eigen::MatrixXd dy_mat =
      Eigen::Map<const RowMajor>(dy, n, config_.output_dim);
  backward_impl(cache, dy_mat, dx, /*accumulate_param_grads=*/true);
}

void Mlp::input_gradient(const Cache& cache, int which_output,
                         double* dx) const {
  const int n = static_cast<int>(cache.input.rows());
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(n, config_.output_dim);
  dy.col(which_output).setOnes();
  // const_cast is safe: accumulate_param_grads is off.
  const_cast<Mlp*>(this)->backward_impl(cache, dy, dx,
                                        /*accumulate_param_grads=*/false);
}

}  // namespace ip3d
