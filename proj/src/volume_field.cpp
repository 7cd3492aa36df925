// SPDX-License-Identifier: Apache-2.0
#include "ip3d/volume_field.hpp"

#include <cmath>
#include <stdexcept>

namespace ip3d {

namespace {

inline double softplus(double x) {
  return x > 20.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double DensityPrior::density(const Vec3& p) const {
  if (weight == 0.0) return 0.0;
  const double r2 = p.squaredNorm();
  return weight * amplitude * std::exp(-r2 / (2.0 * radius * radius));
}

Vec3 DensityPrior::density_gradient(const Vec3& p) const {
  if (weight == 0.0) return Vec3::Zero();
  return -density(p) / (radius * radius) * p;
}

NormalBatch normals_from_density_gradients(std::span<const Vec3> gradients,
                                           double eps) {
  NormalBatch out;
  out.normals.resize(gradients.size());
  out.degenerate.resize(gradients.size());
  for (size_t i = 0; i < gradients.size(); ++i) {
    const double norm = gradients[i].norm();
    if (norm < eps) {
      out.normals[i] = Vec3(0.0, 0.0, 1.0);
      out.degenerate[i] = 1;
    } else {
      out.normals[i] = -gradients[i] / norm;
      out.degenerate[i] = 0;
    }
  }
  return out;
}

VolumeField::VolumeField(const HashGridConfig& grid_config, uint64_t seed,
                         int hidden_dim, int hidden_layers)
    : encoding_(grid_config, RngStream(seed, "field-encoding")),
      mlp_(MlpConfig{grid_config.feature_dim(), hidden_dim, hidden_layers, 4},
           RngStream(seed, "field-mlp")) {}

void VolumeField::query(std::span<const Vec3> positions,
                        std::span<double> sigma,
                        std::span<double> rgb) const {
  const int D = encoding_.config().feature_dim();
  std::vector<double> features;
  std::vector<double> raw;
  for (size_t start = 0; start < positions.size(); start += kChunk) {
    const size_t n = std::min<size_t>(kChunk, positions.size() - start);
    features.resize(n * D);
    raw.resize(n * 4);
    encoding_.encode(positions.subspan(start, n), features.data());
    mlp_.forward(features.data(), static_cast<int>(n), raw.data());
    for (size_t i = 0; i < n; ++i) {
      const size_t g = start + i;
      sigma[g] = softplus(raw[i * 4] + density_bias_) +
                 prior_.density(positions[g]);
      for (int c = 0; c < 3; ++c) rgb[g * 3 + c] = sigmoid(raw[i * 4 + 1 + c]);
    }
  }
}

void VolumeField::query_density(std::span<const Vec3> positions,
                                std::span<double> sigma) const {
  // Shares the query path; the head is tiny so a dedicated density pass is
  // not worth a second code path.
  std::vector<double> rgb(positions.size() * 3);
  query(positions, sigma, rgb);
}

void VolumeField::query_backward(std::span<const Vec3> positions,
                                 std::span<const double> dsigma,
                                 std::span<const double> drgb) {
  const int D = encoding_.config().feature_dim();
  const bool has_sigma = !dsigma.empty();
  const bool has_rgb = !drgb.empty();
  if (has_sigma && dsigma.size() != positions.size()) {
    throw std::invalid_argument("query_backward: dsigma size mismatch");
  }
  if (has_rgb && drgb.size() != 3 * positions.size()) {
    throw std::invalid_argument("query_backward: drgb size mismatch");
  }
  std::vector<double> features, raw, dy, dfeatures;
  Mlp::Cache cache;
  for (size_t start = 0; start < positions.size(); start += kChunk) {
    const size_t n = std::min<size_t>(kChunk, positions.size() - start);
    const auto chunk = positions.subspan(start, n);
    features.resize(n * D);
    raw.resize(n * 4);
    dy.assign(n * 4, 0.0);
    dfeatures.resize(n * D);
    encoding_.encode(chunk, features.data());
    mlp_.forward(features.data(), static_cast<int>(n), raw.data(), &cache);
    for (size_t i = 0; i < n; ++i) {
      const size_t g = start + i;
      if (has_sigma) {
        dy[i * 4] = dsigma[g] * softplus_grad(raw[i * 4] + density_bias_);
      }
      if (has_rgb) {
        for (int c = 0; c < 3; ++c) {
          const double s = sigmoid(raw[i * 4 + 1 + c]);
          dy[i * 4 + 1 + c] = drgb[g * 3 + c] * s * (1.0 - s);
        }
      }
    }
    mlp_.backward(cache, dy.data(), dfeatures.data());
    encoding_.backward(chunk, dfeatures.data());
  }
}

std::vector<ParamGroup> VolumeField::param_groups() {
  return {
      {"field.encoding", encoding_.table(), encoding_.grads(), 1.0},
      {"field.mlp", mlp_.params(), mlp_.grads(), 1.0},
  };
}

void VolumeField::zero_grad() {
  encoding_.zero_grad();
  mlp_.zero_grad();
}

void VolumeField::density_gradient(std::span<const Vec3> positions,
                                   std::span<Vec3> gradients) const {
  const int D = encoding_.config().feature_dim();
  std::vector<double> features, jacobian, raw, dfeatures;
  Mlp::Cache cache;
  for (size_t start = 0; start < positions.size(); start += kChunk) {
    const size_t n = std::min<size_t>(kChunk, positions.size() - start);
    const auto chunk = positions.subspan(start, n);
    features.resize(n * D);
    jacobian.resize(n * D * 3);
    raw.resize(n * 4);
    dfeatures.resize(n * D);
    encoding_.encode_with_jacobian(chunk, features.data(), jacobian.data());
    mlp_.forward(features.data(), static_cast<int>(n), raw.data(), &cache);
    mlp_.input_gradient(cache, /*which_output=*/0, dfeatures.data());
    for (size_t i = 0; i < n; ++i) {
      const size_t g = start + i;
      const double chain = softplus_grad(raw[i * 4] + density_bias_);
      Vec3 grad = Vec3::Zero();
      const double* jac = jacobian.data() + i * D * 3;
      const double* df = dfeatures.data() + i * D;
      for (int d = 0; d < D; ++d) {
        grad.x() += df[d] * jac[d * 3 + 0];
        grad.y() += df[d] * jac[d * 3 + 1];
        grad.z() += df[d] * jac[d * 3 + 2];
      }
      gradients[g] = chain * grad + prior_.density_gradient(chunk[i]);
    }
  }
}

NormalBatch VolumeField::normals_at(std::span<const Vec3> positions) const {
  std::vector<Vec3> gradients(positions.size());
  density_gradient(positions, gradients);
  return normals_from_density_gradients(gradients);
}

std::vector<double> VolumeField::state() const {
  std::vector<double> out;
  out.reserve(encoding_.table().size() + mlp_.params().size() + 1);
  out.push_back(density_bias_);
  out.insert(out.end(), encoding_.table().begin(), encoding_.table().end());
  out.insert(out.end(), mlp_.params().begin(), mlp_.params().end());
  return out;
}

void VolumeField::load_state(std::span<const double> state) {
  const size_t expected =
      1 + encoding_.table().size() + mlp_.params().size();
  if (state.size() != expected) {
    throw std::runtime_error("VolumeField::load_state: size mismatch");
  }
  density_bias_ = state[0];
  std::copy(state.begin() + 1,
            state.begin() + 1 + encoding_.table().size(),
            encoding_.table().begin());
  std::copy(state.begin() + 1 + encoding_.table().size(), state.end(),
            mlp_.params().begin());
}

}  // namespace ip3d
