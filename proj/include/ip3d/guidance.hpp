// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ip3d/camera.hpp"
#include "ip3d/image.hpp"
#include "ip3d/rng.hpp"

namespace ip3d {

/// Discrete forward-diffusion schedule. t indexes 1..steps; alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4,
                              double beta_end = 2e-2);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;       // t in [1, steps]
  double alpha_bar(int t) const;  // t in [0, steps]

 private:
  NoiseSchedule(std::vector<double> betas);
  std::vector<double> betas_;
  std::vector<double> alphas_bar_;  // index 0..steps
};

/// noisy = sqrt(alpha_bar_t) * clean + sqrt(1 - alpha_bar_t) * eps.
Image add_noise(const NoiseSchedule& schedule, const Image& clean, int t,
                const Image& eps);

/// Relative orbit pose against the reference camera.
struct CameraDelta {
  double d_azimuth_deg = 0.0;
  double d_elevation_deg = 0.0;
  double d_radius = 0.0;
};

/// Conditions available to a guidance backend. Backends pick what they need
/// and reject calls missing their required entries.
struct ConditionSet {
  Image image_prompt;  // reference image, empty when absent
  std::optional<Image> depth_map;  // values in [0,1]
  std::optional<CameraDelta> camera_delta;
  std::optional<std::string> text;
  std::map<std::string, Image> control_maps;

  bool any() const;
  /// Throws unless at least one condition is present and depth lies in [0,1].
  void validate() const;
};

/// Mapping between render space and the backend's guidance space. The
/// default is the identity; latent-diffusion adapters supply their own.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Image encode(const Image& rgb) const { return rgb; }
  /// Pull a guidance-space gradient back to render space.
  virtual Image decode_gradient(const Image& dlatent) const { return dlatent; }
};

/// Epsilon-prediction interface over a shared noise schedule.
class GuidanceBackend {
 public:
  explicit GuidanceBackend(NoiseSchedule schedule)
      : schedule_(std::move(schedule)) {}
  virtual ~GuidanceBackend() = default;

  virtual const std::string& name() const = 0;
  const NoiseSchedule& schedule() const { return schedule_; }
  virtual const LatentCodec& codec() const;

  /// Deterministic epsilon estimate, same shape as `noisy`. Throws a
  /// missing-condition error naming the backend when `cond` is incomplete.
  virtual Image predict_noise(const Image& noisy, int t,
                              const ConditionSet& cond) = 0;

  /// Test-double hook: sds_gradient reports the clean latent and the drawn
  /// noise before calling predict_noise. Real backends ignore it.
  virtual void on_sds_sample(const Image& clean_latent, const Image& eps) {
    (void)clean_latent;
    (void)eps;
  }

 private:
  NoiseSchedule schedule_;
};

/// Analytic oracle for data ~ N(mu, s^2 I): the exact posterior epsilon
/// sqrt(1-abar) * (z - sqrt(abar) mu) / (abar s^2 + 1 - abar). s = 0 is the
/// delta-distribution oracle. mu is resized to the query shape on demand.
class GaussianOracleBackend : public GuidanceBackend {
 public:
  GaussianOracleBackend(NoiseSchedule schedule, Image mu, double s,
                        std::string name = "oracle-gaussian");

  const std::string& name() const override { return name_; }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override;

  void set_mu(Image mu) { mu_ = std::move(mu); }
  double data_stddev() const { return s_; }

 private:
  std::string name_;
  Image mu_;
  double s_;
};

/// Always answers with the exact noise injected by the current sds_gradient
/// call; the SDS residual is then identically zero.
class EpsIsEpsStub : public GuidanceBackend {
 public:
  explicit EpsIsEpsStub(NoiseSchedule schedule)
      : GuidanceBackend(std::move(schedule)) {}

  const std::string& name() const override { return name_; }
  void on_sds_sample(const Image& clean_latent, const Image& eps) override {
    (void)clean_latent;
    last_eps_ = eps;
  }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override;

 private:
  std::string name_ = "eps-stub";
  Image last_eps_;
};

/// Condition-validating wrapper for the image-prompt + depth 2D predictor.
/// Requires image_prompt and depth_map, then delegates to the inner model.
class Ip2dBackend : public GuidanceBackend {
 public:
  Ip2dBackend(std::shared_ptr<GuidanceBackend> inner, double cfg_scale = 100.0);

  const std::string& name() const override { return name_; }
  const LatentCodec& codec() const override { return inner_->codec(); }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override;
  void on_sds_sample(const Image& clean_latent, const Image& eps) override {
    inner_->on_sds_sample(clean_latent, eps);
  }
  double cfg_scale() const { return cfg_scale_; }

 private:
  std::string name_ = "ip2d";
  std::shared_ptr<GuidanceBackend> inner_;
  double cfg_scale_;
};

/// Condition-validating wrapper for the pose-conditioned 3D predictor.
/// Requires image_prompt and camera_delta.
class Pose3dBackend : public GuidanceBackend {
 public:
  Pose3dBackend(std::shared_ptr<GuidanceBackend> inner, double cfg_scale = 5.0);

  const std::string& name() const override { return name_; }
  const LatentCodec& codec() const override { return inner_->codec(); }
  Image predict_noise(const Image& noisy, int t,
                      const ConditionSet& cond) override;
  void on_sds_sample(const Image& clean_latent, const Image& eps) override {
    inner_->on_sds_sample(clean_latent, eps);
  }
  double cfg_scale() const { return cfg_scale_; }

 private:
  std::string name_ = "pose3d";
  std::shared_ptr<GuidanceBackend> inner_;
  double cfg_scale_;
};

struct SdsOptions {
  double t_min_frac = 0.02;
  double t_max_frac = 0.98;
  /// w(t); the default is 1 - alpha_bar(t).
  std::function<double(int, const NoiseSchedule&)> weight_fn;
};

struct SdsResult {
  Image pixel_gradient;  // d(loss)/d(rendered image), render space
  int t = 0;
  double weight = 0.0;
};

/// One score-distillation draw: sample t and eps, noise the encoded render,
/// query the backend, and return w(t) * (eps_hat - eps) decoded back to
/// render space. The rng drives exactly one t draw plus one eps per entry.
SdsResult sds_gradient(const Image& rendered, GuidanceBackend& backend,
                       const ConditionSet& cond, RngStream& rng,
                       const SdsOptions& opts = {});

/// Name -> factory registry used by the CLI and config loading. Factories
/// receive the schedule plus free-form options (data stddev, elevation, ...).
class BackendRegistry {
 public:
  using Factory = std::function<std::shared_ptr<GuidanceBackend>(
      const NoiseSchedule&, const std::map<std::string, double>&)>;

  static BackendRegistry& instance();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  /// Throws listing the registered names when `name` is unknown.
  std::shared_ptr<GuidanceBackend> create(
      const std::string& name, const NoiseSchedule& schedule,
      const std::map<std::string, double>& options = {}) const;

 private:
  std::map<std::string, Factory> factories_;
};

}  // namespace ip3d
