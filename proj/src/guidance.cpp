// SPDX-License-Identifier: Apache-2.0
#include "ip3d/guidance.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ip3d/synthetic.hpp"

namespace ip3d {
namespace {

const LatentCodec& identity_codec() {
  static const LatentCodec codec;
  return codec;
}

[[noreturn]] void throw_missing(const std::string& backend,
                                const char* condition) {
  throw std::runtime_error(backend + ": missing required condition '" +
                           condition + "'");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> betas)
    : betas_(std::move(betas)) {
  if (betas_.empty()) {
    throw std::invalid_argument("NoiseSchedule: empty schedule");
  }
  alphas_bar_.resize(betas_.size() + 1);
  alphas_bar_[0] = 1.0;
  for (size_t t = 1; t <= betas_.size(); ++t) {
    const double beta = betas_[t - 1];
    if (!(beta > 0.0 && beta < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: betas must lie in (0,1)");
    }
    alphas_bar_[t] = alphas_bar_[t - 1] * (1.0 - beta);
    if (!(alphas_bar_[t] > 0.0 && alphas_bar_[t] < alphas_bar_[t - 1])) {
      throw std::invalid_argument(
          "NoiseSchedule: alpha_bar must be strictly decreasing in (0,1]");
    }
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start,
                                    double beta_end) {
  if (steps < 1) throw std::invalid_argument("NoiseSchedule: steps must be >= 1");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_start + f * (beta_end - beta_start);
  }
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: t out of range");
  }
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: t out of range");
  }
  return alphas_bar_[t];
}

Image add_noise(const NoiseSchedule& schedule, const Image& clean, int t,
                const Image& eps) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("add_noise: t out of range");
  }
  clean.require_same_shape(eps, "add_noise");
  const double ab = schedule.alpha_bar(t);
  const double sa = std::sqrt(ab);
  const double se = std::sqrt(1.0 - ab);
  Image noisy = clean;
  noisy *= sa;
  noisy.add_scaled(eps, se);
  return noisy;
}

bool ConditionSet::any() const {
  return !image_prompt.empty() || depth_map.has_value() ||
         camera_delta.has_value() || text.has_value() || !control_maps.empty();
}

void ConditionSet::validate() const {
  if (!any()) {
    throw std::invalid_argument("ConditionSet: at least one condition required");
  }
  if (depth_map) {
    for (size_t i = 0; i < depth_map->size(); ++i) {
      const double v = (*depth_map)[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("ConditionSet: depth_map outside [0,1]");
      }
    }
  }
}

const LatentCodec& GuidanceBackend::codec() const { return identity_codec(); }

GaussianOracleBackend::GaussianOracleBackend(NoiseSchedule schedule, Image mu,
                                             double s, std::string name)
    : GuidanceBackend(std::move(schedule)), name_(std::move(name)),
      mu_(std::move(mu)), s_(s) {
  if (s_ < 0.0) {
    throw std::invalid_argument("GaussianOracleBackend: s must be >= 0");
  }
}

Image GaussianOracleBackend::predict_noise(const Image& noisy, int t,
                                           const ConditionSet& cond) {
  (void)cond;
  const double ab = schedule().alpha_bar(t);
  if (t < 1 || t > schedule().steps()) {
    throw std::out_of_range("predict_noise: t out of range");
  }
  Image mu = mu_;
  if (!mu.same_shape(noisy)) {
    if (mu.channels() != noisy.channels()) {
      throw std::invalid_argument("GaussianOracleBackend: channel mismatch");
    }
    mu = resize_bilinear(mu, noisy.height(), noisy.width());
  }
  const double denom = ab * s_ * s_ + (1.0 - ab);
  const double scale = std::sqrt(1.0 - ab) / denom;
  Image eps_hat = noisy;
  eps_hat.add_scaled(mu, -std::sqrt(ab));
  eps_hat *= scale;
  return eps_hat;
}

Image EpsIsEpsStub::predict_noise(const Image& noisy, int t,
                                  const ConditionSet& cond) {
  (void)t;
  (void)cond;
  if (!last_eps_.same_shape(noisy)) {
    throw std::runtime_error("eps-stub: no recorded noise for this shape");
  }
  return last_eps_;
}

Ip2dBackend::Ip2dBackend(std::shared_ptr<GuidanceBackend> inner,
                         double cfg_scale)
    : GuidanceBackend(inner->schedule()), inner_(std::move(inner)),
      cfg_scale_(cfg_scale) {}

Image Ip2dBackend::predict_noise(const Image& noisy, int t,
                                 const ConditionSet& cond) {
  if (cond.image_prompt.empty()) throw_missing(name_, "image_prompt");
  if (!cond.depth_map) throw_missing(name_, "depth_map");
  cond.validate();
  return inner_->predict_noise(noisy, t, cond);
}

Pose3dBackend::Pose3dBackend(std::shared_ptr<GuidanceBackend> inner,
                             double cfg_scale)
    : GuidanceBackend(inner->schedule()), inner_(std::move(inner)),
      cfg_scale_(cfg_scale) {}

Image Pose3dBackend::predict_noise(const Image& noisy, int t,
                                   const ConditionSet& cond) {
  if (cond.image_prompt.empty()) throw_missing(name_, "image_prompt");
  if (!cond.camera_delta) throw_missing(name_, "camera_delta");
  cond.validate();
  return inner_->predict_noise(noisy, t, cond);
}

SdsResult sds_gradient(const Image& rendered, GuidanceBackend& backend,
                       const ConditionSet& cond, RngStream& rng,
                       const SdsOptions& opts) {
  if (rendered.empty()) {
    throw std::invalid_argument("sds_gradient: empty render");
  }
  const NoiseSchedule& schedule = backend.schedule();
  const int t_lo =
      std::max(1, static_cast<int>(std::ceil(opts.t_min_frac * schedule.steps())));
  const int t_hi = std::min(
      schedule.steps(),
      static_cast<int>(std::floor(opts.t_max_frac * schedule.steps())));
  if (t_lo > t_hi) {
    throw std::invalid_argument("sds_gradient: empty timestep range");
  }
  const int t = rng.uniform_int(t_lo, t_hi);

  const Image clean = backend.codec().encode(rendered);
  Image eps(clean.height(), clean.width(), clean.channels());
  for (size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();

  const Image noisy = add_noise(schedule, clean, t, eps);
  backend.on_sds_sample(clean, eps);
  const Image eps_hat = backend.predict_noise(noisy, t, cond);
  if (!eps_hat.same_shape(noisy)) {
    throw std::runtime_error(backend.name() +
                             ": predict_noise changed the tensor shape");
  }
  const double w = opts.weight_fn ? opts.weight_fn(t, schedule)
                                  : 1.0 - schedule.alpha_bar(t);

  Image g_latent = eps_hat;
  g_latent.add_scaled(eps, -1.0);
  g_latent *= w;

  SdsResult result;
  result.pixel_gradient = backend.codec().decode_gradient(g_latent);
  result.t = t;
  result.weight = w;
  return result;
}

BackendRegistry& BackendRegistry::instance() {
  static BackendRegistry registry = [] {
    BackendRegistry r;
    r.add("oracle-view",
          [](const NoiseSchedule& s, const std::map<std::string, double>& o) {
            return make_synthetic_view_oracle(s, o);
          });
    r.add("oracle-gaussian",
          [](const NoiseSchedule& s, const std::map<std::string, double>& o) {
            const auto it = o.find("data_stddev");
            const double stddev = it == o.end() ? 0.2 : it->second;
            Image mu(8, 8, 3, 0.5);
            return std::make_shared<GaussianOracleBackend>(s, std::move(mu),
                                                           stddev);
          });
    r.add("oracle-delta",
          [](const NoiseSchedule& s, const std::map<std::string, double>&) {
            Image mu(8, 8, 3, 0.5);
            return std::make_shared<GaussianOracleBackend>(s, std::move(mu),
                                                           0.0, "oracle-delta");
          });
    r.add("eps-stub",
          [](const NoiseSchedule& s, const std::map<std::string, double>&) {
            return std::make_shared<EpsIsEpsStub>(s);
          });
    return r;
  }();
  return registry;
}

void BackendRegistry::add(const std::string& name, Factory factory) {
  factories_[name] = std::move(factory);
}

bool BackendRegistry::contains(const std::string& name) const {
  return factories_.count(name) != 0;
}

std::vector<std::string> BackendRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(factories_.size());
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

std::shared_ptr<GuidanceBackend> BackendRegistry::create(
    const std::string& name, const NoiseSchedule& schedule,
    const std::map<std::string, double>& options) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) {
    std::ostringstream os;
    os << "unknown backend '" << name << "'; registered backends:";
    for (const auto& n : names()) os << " " << n;
    throw std::runtime_error(os.str());
  }
  return it->second(schedule, options);
}

}  // namespace ip3d
