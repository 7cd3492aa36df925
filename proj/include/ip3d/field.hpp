// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ip3d/camera.hpp"  // Vec3

namespace ip3d {

/// A contiguous slice of trainable parameters with its gradient accumulator.
/// The optimizer treats groups independently (per-group learning-rate scale).
struct ParamGroup {
  std::string name;
  std::span<double> values;
  std::span<double> grads;
  double lr_scale = 1.0;
};

/// Queryable density + color field over the bounded scene cube.
class Field {
 public:
  virtual ~Field() = default;

  /// Scene half-extent; queries are valid inside [-bound, bound]^3.
  virtual double bound() const = 0;

  /// Batched query. sigma and rgb must hold n and 3n doubles. Density is
  /// nonnegative, color components lie in [0, 1]. Throws on non-finite input.
  virtual void query(std::span<const Vec3> positions, std::span<double> sigma,
                     std::span<double> rgb) const = 0;

  /// Density only (rgb untouched). Default evaluates the full query.
  virtual void query_density(std::span<const Vec3> positions,
                             std::span<double> sigma) const {
    std::vector<double> rgb(positions.size() * 3);
    query(positions, sigma, rgb);
  }
};

/// Field whose query is differentiable w.r.t. its parameters.
class TrainableField : public Field {
 public:
  /// Accumulate d(loss)/d(theta) for the given upstream gradients. rgb
  /// gradients may be empty when only density was used.
  virtual void query_backward(std::span<const Vec3> positions,
                              std::span<const double> dsigma,
                              std::span<const double> drgb) = 0;

  virtual std::vector<ParamGroup> param_groups() = 0;
  virtual void zero_grad() = 0;
};

/// Closed-form field for tests and synthetic scenes.
class AnalyticField : public Field {
 public:
  using DensityFn = std::function<double(const Vec3&)>;
  using ColorFn = std::function<Vec3(const Vec3&)>;

  AnalyticField(DensityFn density, ColorFn color, double bound = 1.0)
      : density_(std::move(density)), color_(std::move(color)), bound_(bound) {}

  double bound() const override { return bound_; }

  void query(std::span<const Vec3> positions, std::span<double> sigma,
             std::span<double> rgb) const override {
    for (size_t i = 0; i < positions.size(); ++i) {
      sigma[i] = density_(positions[i]);
      const Vec3 c = color_(positions[i]);
      rgb[3 * i + 0] = c.x();
      rgb[3 * i + 1] = c.y();
      rgb[3 * i + 2] = c.z();
    }
  }

 private:
  DensityFn density_;
  ColorFn color_;
  double bound_;
};

}  // namespace ip3d
