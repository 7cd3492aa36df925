// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ip3d/rng.hpp"
#include "ip3d/volume_field.hpp"

using namespace ip3d;

namespace {

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

TEST_CASE("density is nonnegative and colors stay inside the unit cube") {
  VolumeField field(tiny_grid(), 19, 16, 2);
  RngStream rng(100, "field-samples");
  const int n = 10000;
  std::vector<Vec3> pos(n);
  for (auto& p : pos) {
    p = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  }
  std::vector<double> sigma(n), rgb(3 * n);
  field.query(pos, sigma, rgb);
  for (int i = 0; i < n; ++i) {
    CHECK(sigma[i] >= 0.0);
    for (int c = 0; c < 3; ++c) {
      CHECK(rgb[3 * i + c] >= 0.0);
      CHECK(rgb[3 * i + c] <= 1.0);
    }
  }
}

TEST_CASE("same seed reproduces the field, state round-trips bit-exactly") {
  VolumeField a(tiny_grid(), 7, 8, 1);
  VolumeField b(tiny_grid(), 7, 8, 1);
  VolumeField c(tiny_grid(), 8, 8, 1);

  const Vec3 p(0.21, -0.43, 0.65);
  auto probe = [&](VolumeField& f) {
    std::vector<double> sigma(1), rgb(3);
    f.query(std::span<const Vec3>(&p, 1), sigma, rgb);
    return std::make_pair(sigma[0], rgb);
  };
  CHECK(probe(a) == probe(b));
  CHECK(probe(a) != probe(c));

  const std::vector<double> blob = a.state();
  VolumeField restored(tiny_grid(), 999, 8, 1);
  restored.load_state(blob);
  CHECK(probe(restored) == probe(a));
  CHECK(restored.state() == blob);
}

TEST_CASE("analytic density gradient matches finite differences") {
  VolumeField field(tiny_grid(), 3, 8, 1);
  field.prior().weight = 0.7;  // exercise the prior term too
  RngStream rng(4, "field-fd");
  const double h = 1e-5;
  for (int k = 0; k < 5; ++k) {
    const Vec3 p(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                 rng.uniform(-0.8, 0.8));
    Vec3 grad;
    field.density_gradient(std::span<const Vec3>(&p, 1), std::span<Vec3>(&grad, 1));
    for (int a = 0; a < 3; ++a) {
      Vec3 pp = p, pm = p;
      pp[a] += h;
      pm[a] -= h;
      double sp, sm;
      field.query_density(std::span<const Vec3>(&pp, 1), std::span<double>(&sp, 1));
      field.query_density(std::span<const Vec3>(&pm, 1), std::span<double>(&sm, 1));
      const double fd = (sp - sm) / (2.0 * h);
      CHECK(grad[a] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("normals are unit length and oppose the density gradient") {
  VolumeField field(tiny_grid(), 21, 8, 1);
  field.prior().weight = 1.0;
  std::vector<Vec3> pos = {Vec3(0.3, 0.1, -0.2), Vec3(-0.5, 0.4, 0.2),
                           Vec3(0.05, -0.6, 0.35)};
  const NormalBatch nb = field.normals_at(pos);
  std::vector<Vec3> grads(pos.size());
  field.density_gradient(pos, grads);
  for (size_t i = 0; i < pos.size(); ++i) {
    CHECK(std::abs(nb.normals[i].norm() - 1.0) < 1e-6);
    if (!nb.degenerate[i]) {
      CHECK((nb.normals[i] + grads[i].normalized()).norm() < 1e-9);
    }
  }
}

TEST_CASE("normals of a radial gaussian point away from the center") {
  // With only the analytic prior active the density is radially symmetric,
  // so -grad(sigma) is the outward radial direction.
  DensityPrior prior;
  prior.weight = 1.0;
  std::vector<Vec3> pos = {Vec3(0.4, 0.0, 0.0), Vec3(0.0, -0.3, 0.0),
                           Vec3(0.1, 0.2, 0.3)};
  std::vector<Vec3> grads(pos.size());
  for (size_t i = 0; i < pos.size(); ++i) grads[i] = prior.density_gradient(pos[i]);
  const NormalBatch nb = normals_from_density_gradients(grads);
  for (size_t i = 0; i < pos.size(); ++i) {
    CHECK(nb.degenerate[i] == 0);
    CHECK((nb.normals[i] - pos[i].normalized()).norm() < 1e-5);
  }
}

TEST_CASE("vanishing gradients are flagged and replaced by the up vector") {
  std::vector<Vec3> grads = {Vec3::Zero(), Vec3(0.0, 0.0, 1e-12)};
  const NormalBatch nb = normals_from_density_gradients(grads);
  for (size_t i = 0; i < grads.size(); ++i) {
    CHECK(nb.degenerate[i] == 1);
    CHECK(nb.normals[i] == Vec3(0.0, 0.0, 1.0));
  }
}

TEST_CASE("parameter gradients match finite differences") {
  VolumeField field(tiny_grid(), 13, 8, 1);
  RngStream rng(55, "field-gradcheck");
  const int n = 4;
  std::vector<Vec3> pos(n);
  for (auto& p : pos) {
    p = Vec3(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
  }
  std::vector<double> wsig(n), wrgb(3 * n);
  for (auto& w : wsig) w = rng.uniform(-1.0, 1.0);
  for (auto& w : wrgb) w = rng.uniform(-1.0, 1.0);

  auto loss = [&]() {
    std::vector<double> sigma(n), rgb(3 * n);
    field.query(pos, sigma, rgb);
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += wsig[i] * sigma[i];
    for (int i = 0; i < 3 * n; ++i) v += wrgb[i] * rgb[i];
    return v;
  };

  field.zero_grad();
  field.query_backward(pos, wsig, wrgb);
  auto groups = field.param_groups();
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].name == "field.encoding");
  CHECK(groups[1].name == "field.mlp");

  const double h = 1e-5;
  RngStream pick(77, "field-pick");
  for (auto& g : groups) {
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 12; ++trial) {
      const size_t j = static_cast<size_t>(
          pick.uniform_int(0, static_cast<int>(g.values.size()) - 1));
      if (g.grads[j] == 0.0 && g.name == "field.encoding") continue;  // untouched entry
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

TEST_CASE("query_backward accepts density-only and color-only gradients") {
  VolumeField field(tiny_grid(), 31, 8, 1);
  std::vector<Vec3> pos = {Vec3(0.1, 0.2, 0.3)};
  std::vector<double> dsig = {1.0};
  std::vector<double> drgb = {0.5, -0.25, 0.125};

  field.zero_grad();
  CHECK_NOTHROW(field.query_backward(pos, dsig, {}));
  CHECK_NOTHROW(field.query_backward(pos, {}, drgb));
  CHECK_THROWS_AS(field.query_backward(pos, std::vector<double>(2, 1.0), {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(field.query_backward(pos, {}, std::vector<double>(4, 1.0)),
                  std::invalid_argument);
}

TEST_CASE("non-finite query positions are rejected") {
  VolumeField field(tiny_grid(), 2, 8, 1);
  const Vec3 bad(0.0, std::numeric_limits<double>::infinity(), 0.0);
  std::vector<double> sigma(1), rgb(3);
  CHECK_THROWS_AS(field.query(std::span<const Vec3>(&bad, 1), sigma, rgb),
                  std::invalid_argument);
}

TEST_CASE("the decayed prior adds exactly its gaussian bump") {
  VolumeField field(tiny_grid(), 5, 8, 1);
  const Vec3 p(0.12, -0.05, 0.2);
  double base;
  field.prior().weight = 0.0;
  field.query_density(std::span<const Vec3>(&p, 1), std::span<double>(&base, 1));

  field.prior().weight = 0.5;
  double bumped;
  field.query_density(std::span<const Vec3>(&p, 1), std::span<double>(&bumped, 1));
  const DensityPrior& pr = field.prior();
  const double expect =
      pr.weight * pr.amplitude * std::exp(-p.squaredNorm() / (2.0 * pr.radius * pr.radius));
  CHECK(bumped - base == doctest::Approx(expect).epsilon(1e-12));
}
