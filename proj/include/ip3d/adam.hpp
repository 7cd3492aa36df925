// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ip3d/field.hpp"

namespace ip3d {

/// Adaptive moment estimation over named parameter groups. Groups keep
/// views into the model's storage; per-group lr_scale multiplies the base
/// learning rate.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options options) : opts_(options) {}

  void attach(std::vector<ParamGroup> groups) {
    groups_ = std::move(groups);
    m_.resize(groups_.size());
    v_.resize(groups_.size());
    for (size_t g = 0; g < groups_.size(); ++g) {
      if (groups_[g].values.size() != groups_[g].grads.size()) {
        throw std::invalid_argument("Adam: group value/grad size mismatch");
      }
      m_[g].assign(groups_[g].values.size(), 0.0);
      v_[g].assign(groups_[g].values.size(), 0.0);
    }
    t_ = 0;
  }

  void step() {
    if (groups_.empty()) throw std::runtime_error("Adam: no groups attached");
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opts_.beta2, t_);
    for (size_t g = 0; g < groups_.size(); ++g) {
      const double lr = opts_.lr * groups_[g].lr_scale;
      auto values = groups_[g].values;
      auto grads = groups_[g].grads;
      auto& m = m_[g];
      auto& v = v_[g];
      for (size_t i = 0; i < values.size(); ++i) {
        const double grad = grads[i];
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * grad;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * grad * grad;
        values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
      }
    }
  }

  int step_count() const { return t_; }
  const Options& options() const { return opts_; }

  /// Flat [m..., v...] blob in group order, used by checkpoints.
  std::vector<double> moments_blob() const {
    std::vector<double> blob;
    for (const auto& m : m_) blob.insert(blob.end(), m.begin(), m.end());
    for (const auto& v : v_) blob.insert(blob.end(), v.begin(), v.end());
    return blob;
  }

  void load_moments_blob(std::span<const double> blob, int step_count) {
    size_t total = 0;
    for (const auto& m : m_) total += m.size();
    if (blob.size() != 2 * total) {
      throw std::invalid_argument("Adam: moments blob size mismatch");
    }
    size_t at = 0;
    for (auto& m : m_) {
      std::copy(blob.begin() + at, blob.begin() + at + m.size(), m.begin());
      at += m.size();
    }
    for (auto& v : v_) {
      std::copy(blob.begin() + at, blob.begin() + at + v.size(), v.begin());
      at += v.size();
    }
    t_ = step_count;
  }

 private:
  Options opts_{};
  int t_ = 0;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ip3d
