// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ip3d/renderer.hpp"
#include "ip3d/rng.hpp"
#include "ip3d/volume_field.hpp"

using namespace ip3d;

namespace {

RayBatch straight_ray() {
  RayBatch rays;
  rays.height = 1;
  rays.width = 1;
  rays.origins = {Vec3(-3.0, 0.0, 0.0)};
  rays.directions = {Vec3(1.0, 0.0, 0.0)};
  return rays;
}

AnalyticField constant_field(double sigma, Vec3 color = Vec3(0.4, 0.5, 0.6)) {
  return AnalyticField([sigma](const Vec3&) { return sigma; },
                       [color](const Vec3&) { return color; });
}

HashGridConfig tiny_grid() {
  HashGridConfig cfg;
  cfg.levels = 2;
  cfg.features_per_level = 2;
  cfg.coarsest_resolution = 2;
  cfg.finest_resolution = 4;
  cfg.table_size_log2 = 10;
  return cfg;
}

}  // namespace

TEST_CASE("clip_ray_to_cube finds the right interval or misses") {
  const auto hit = clip_ray_to_cube(Vec3(-3, 0, 0), Vec3(1, 0, 0), 1.0, 0.05, 6.0);
  REQUIRE(hit.has_value());
  CHECK(hit->first == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(hit->second == doctest::Approx(4.0).epsilon(1e-12));

  CHECK(!clip_ray_to_cube(Vec3(-3, 2.5, 0), Vec3(1, 0, 0), 1.0, 0.05, 6.0));
  // far plane closer than the cube entry
  CHECK(!clip_ray_to_cube(Vec3(-3, 0, 0), Vec3(1, 0, 0), 1.0, 0.05, 1.5));
  // near plane pushes the entry inside the cube
  const auto clipped = clip_ray_to_cube(Vec3(0, 0, 0), Vec3(1, 0, 0), 1.0, 0.5, 6.0);
  REQUIRE(clipped.has_value());
  CHECK(clipped->first == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("an empty scene renders the exact background") {
  const AnalyticField field = constant_field(0.0);
  RenderSettings settings;
  settings.samples_per_ray = 16;
  settings.background = Vec3(0.25, 0.5, 0.75);
  CameraPose pose;
  const RenderOutput out = render_volume(field, generate_rays(pose, 4, 5), settings);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      CHECK(out.image.at(y, x, 0) == 0.25);
      CHECK(out.image.at(y, x, 1) == 0.5);
      CHECK(out.image.at(y, x, 2) == 0.75);
      CHECK(out.opacity.at(y, x) == 0.0);
      CHECK(out.depth.at(y, x) == 0.0);
    }
  }
}

TEST_CASE("homogeneous slab matches the closed-form transmittance") {
  const double sigma = 1.3, L = 2.0, t0 = 2.0;
  const AnalyticField field = constant_field(sigma);

  auto render_once = [&](int samples) {
    RenderSettings settings;
    settings.samples_per_ray = samples;
    settings.background = Vec3::Zero();
    return render_volume(field, straight_ray(), settings);
  };

  const double expect_opacity = 1.0 - std::exp(-sigma * L);
  // mean free path of the truncated exponential, measured from cube entry
  const double expect_depth =
      t0 + 1.0 / sigma - L * std::exp(-sigma * L) / (1.0 - std::exp(-sigma * L));

  const RenderOutput out = render_once(512);
  // exponential transmittance telescopes, so opacity is exact
  CHECK(out.opacity.at(0, 0) == doctest::Approx(expect_opacity).epsilon(1e-9));
  const double err512 = std::abs(out.depth.at(0, 0) - expect_depth);
  CHECK(err512 < 1e-3 * expect_depth);

  const RenderOutput fine = render_once(1024);
  const double err1024 = std::abs(fine.depth.at(0, 0) - expect_depth);
  CHECK(err1024 < err512);

  // fully absorbed ray: image equals the medium color
  CHECK(out.image.at(0, 0, 0) ==
        doctest::Approx(0.4 * expect_opacity).epsilon(1e-9));
}

TEST_CASE("per-ray weights never sum above one") {
  VolumeField field(tiny_grid(), 23, 8, 1);
  field.prior().weight = 2.0;  // make it solidly non-empty
  CameraPose pose;
  RenderSettings settings;
  settings.samples_per_ray = 48;
  const RenderOutput out = render_volume(field, generate_rays(pose, 8, 8), settings);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(out.opacity.at(y, x) <= 1.0 + 1e-6);
      CHECK(out.opacity.at(y, x) >= 0.0);
    }
  }
}

TEST_CASE("background substitution only leaks through residual transmittance") {
  VolumeField field(tiny_grid(), 29, 8, 1);
  field.prior().weight = 3.0;
  CameraPose pose;
  RenderSettings settings;
  settings.samples_per_ray = 32;
  settings.background = Vec3::Zero();
  const RenderOutput black = render_volume(field, generate_rays(pose, 6, 6), settings);
  settings.background = Vec3::Ones();
  const RenderOutput white = render_volume(field, generate_rays(pose, 6, 6), settings);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      const double leak = 1.0 - black.opacity.at(y, x);
      for (int c = 0; c < 3; ++c) {
        CHECK(white.image.at(y, x, c) - black.image.at(y, x, c) ==
              doctest::Approx(leak).epsilon(1e-12).scale(1.0));
      }
    }
  }
}

TEST_CASE("renderer gradients match finite differences through every output") {
  VolumeField field(tiny_grid(), 41, 8, 1);
  field.prior().weight = 1.5;
  CameraPose pose;
  const RayBatch rays = generate_rays(pose, 8, 8);
  RenderSettings settings;
  settings.samples_per_ray = 12;
  settings.background = Vec3(0.2, 0.2, 0.2);

  RngStream wrng(3, "render-fd-weights");
  PixelGrads grads;
  grads.d_image = Image(8, 8, 3);
  grads.d_depth = Image(8, 8, 1);
  grads.d_opacity = Image(8, 8, 1);
  for (size_t i = 0; i < grads.d_image.size(); ++i) {
    grads.d_image[i] = wrng.uniform(-1.0, 1.0);
  }
  for (size_t i = 0; i < grads.d_depth.size(); ++i) {
    grads.d_depth[i] = wrng.uniform(-1.0, 1.0);
    grads.d_opacity[i] = wrng.uniform(-1.0, 1.0);
  }

  auto loss = [&]() {
    const RenderOutput out = render_volume(field, rays, settings);
    double v = 0.0;
    for (size_t i = 0; i < out.image.size(); ++i) v += grads.d_image[i] * out.image[i];
    for (size_t i = 0; i < out.depth.size(); ++i) {
      v += grads.d_depth[i] * out.depth[i] + grads.d_opacity[i] * out.opacity[i];
    }
    return v;
  };

  RenderCache cache;
  render_volume(field, rays, settings, &cache);
  field.zero_grad();
  render_volume_backward(field, cache, grads);

  auto groups = field.param_groups();
  RngStream pick(9, "render-fd-pick");
  const double h = 1e-5;
  for (auto& g : groups) {
    int checked = 0;
    for (int trial = 0; trial < 400 && checked < 8; ++trial) {
      const size_t j = static_cast<size_t>(
          pick.uniform_int(0, static_cast<int>(g.values.size()) - 1));
      if (g.grads[j] == 0.0) continue;
      const double saved = g.values[j];
      g.values[j] = saved + h;
      const double lp = loss();
      g.values[j] = saved - h;
      const double lm = loss();
      g.values[j] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      CHECK(g.grads[j] == doctest::Approx(fd).epsilon(1e-3).scale(1e-4));
      ++checked;
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("normal maps are unit length over covered pixels, zero elsewhere") {
  VolumeField field(tiny_grid(), 47, 8, 1);
  field.prior().weight = 3.0;
  CameraPose pose;
  RenderSettings settings;
  settings.samples_per_ray = 32;
  settings.compute_normals = true;
  const RenderOutput out = render_volume(field, generate_rays(pose, 8, 8), settings);
  REQUIRE(!out.normal_map.empty());
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Vec3 n(out.normal_map.at(y, x, 0), out.normal_map.at(y, x, 1),
                   out.normal_map.at(y, x, 2));
      if (out.opacity.at(y, x) > settings.opacity_threshold) {
        CHECK(std::abs(n.norm() - 1.0) < 1e-6);
      } else {
        CHECK(n.norm() == 0.0);
      }
    }
  }
}

TEST_CASE("stratified sampling needs an rng and perturbs the result") {
  const AnalyticField field =
      AnalyticField([](const Vec3& p) { return p.x() > 0.0 ? 3.0 : 0.1; },
                    [](const Vec3&) { return Vec3(0.5, 0.5, 0.5); });
  RenderSettings settings;
  settings.samples_per_ray = 8;
  settings.stratified = true;
  CHECK_THROWS_AS(render_volume(field, straight_ray(), settings),
                  std::invalid_argument);

  RngStream rng(5, "strat");
  settings.rng = &rng;
  const RenderOutput a = render_volume(field, straight_ray(), settings);
  const RenderOutput b = render_volume(field, straight_ray(), settings);
  CHECK(a.depth.at(0, 0) != b.depth.at(0, 0));  // fresh jitter each call

  RngStream replay(5, "strat");
  settings.rng = &replay;
  const RenderOutput c = render_volume(field, straight_ray(), settings);
  CHECK(c.depth.at(0, 0) == a.depth.at(0, 0));
}

TEST_CASE("non-finite densities abort the render with the sample position") {
  const AnalyticField field = AnalyticField(
      [](const Vec3& p) {
        return p.x() > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
      },
      [](const Vec3&) { return Vec3::Zero(); });
  RenderSettings settings;
  settings.samples_per_ray = 16;
  try {
    render_volume(field, straight_ray(), settings);
    FAIL("expected a runtime_error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("non-finite density") != std::string::npos);
    CHECK(std::string(e.what()).find("(") != std::string::npos);
  }
}

TEST_CASE("render settings are validated") {
  const AnalyticField field = constant_field(1.0);
  RenderSettings settings;
  settings.samples_per_ray = 1;
  CHECK_THROWS_AS(render_volume(field, straight_ray(), settings),
                  std::invalid_argument);
  settings.samples_per_ray = 8;
  settings.near = 2.0;
  settings.far = 1.0;
  CHECK_THROWS_AS(render_volume(field, straight_ray(), settings),
                  std::invalid_argument);
  settings = RenderSettings{};
  CHECK_THROWS_AS(render_volume(field, RayBatch{}, settings),
                  std::invalid_argument);
}
