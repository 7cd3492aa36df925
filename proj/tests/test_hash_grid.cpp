// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ip3d/hash_grid.hpp"

using namespace ip3d;

namespace {

HashGridConfig dense_config(int res, int features = 2) {
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.features_per_level = features;
  cfg.coarsest_resolution = res;
  cfg.finest_resolution = res;
  cfg.table_size_log2 = 19;  // (res+1)^3 fits densely for small res
  cfg.bound = 1.0;
  return cfg;
}

Vec3 vertex_position(const HashGridConfig& cfg, int res, int vx, int vy, int vz) {
  const double s = 2.0 * cfg.bound / res;
  return Vec3(vx * s - cfg.bound, vy * s - cfg.bound, vz * s - cfg.bound);
}

}  // namespace

TEST_CASE("level resolutions hit both configured endpoints") {
  HashGridConfig cfg;  // defaults: 16 levels, 16 -> 2048
  CHECK(cfg.level_resolution(0) == 16);
  CHECK(cfg.level_resolution(cfg.levels - 1) == 2048);
  for (int l = 1; l < cfg.levels; ++l) {
    CHECK(cfg.level_resolution(l) >= cfg.level_resolution(l - 1));
  }
  HashGridConfig flat = dense_config(7);
  CHECK(flat.growth_factor() == 1.0);
  CHECK(flat.level_resolution(0) == 7);
}

TEST_CASE("encoding at a lattice vertex returns that entry bit-exactly") {
  const HashGridConfig cfg = dense_config(4);
  HashGridEncoding grid(cfg, RngStream(7, "grid-test"));

  const int res = 4, vx = 2, vy = 1, vz = 3;
  const Vec3 p = vertex_position(cfg, res, vx, vy, vz);
  std::vector<double> feat(cfg.feature_dim());
  grid.encode(std::span<const Vec3>(&p, 1), feat.data());

  const size_t verts = res + 1;
  const size_t entry = vx + verts * (vy + verts * vz);
  for (int f = 0; f < cfg.features_per_level; ++f) {
    CHECK(feat[f] == grid.table()[entry * cfg.features_per_level + f]);
  }
}

TEST_CASE("cell-center features equal the mean of the 8 corner entries") {
  const HashGridConfig cfg = dense_config(4);
  HashGridEncoding grid(cfg, RngStream(11, "grid-test"));

  const int res = 4, cx = 1, cy = 2, cz = 0;
  const double s = 2.0 * cfg.bound / res;
  const Vec3 center(-cfg.bound + (cx + 0.5) * s, -cfg.bound + (cy + 0.5) * s,
                    -cfg.bound + (cz + 0.5) * s);
  std::vector<double> feat(cfg.feature_dim());
  grid.encode(std::span<const Vec3>(&center, 1), feat.data());

  const size_t verts = res + 1;
  for (int f = 0; f < cfg.features_per_level; ++f) {
    double mean = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      const size_t ix = cx + (corner & 1);
      const size_t iy = cy + ((corner >> 1) & 1);
      const size_t iz = cz + ((corner >> 2) & 1);
      mean += grid.table()[(ix + verts * (iy + verts * iz)) * cfg.features_per_level + f];
    }
    mean /= 8.0;
    CHECK(feat[f] == doctest::Approx(mean).epsilon(1e-14));
  }
}

TEST_CASE("interpolation is affine along axis-aligned segments inside a cell") {
  const HashGridConfig cfg = dense_config(4);
  HashGridEncoding grid(cfg, RngStream(3, "grid-test"));

  const double s = 2.0 * cfg.bound / 4;
  const double y = -cfg.bound + 1.3 * s, z = -cfg.bound + 2.6 * s;
  auto at_frac = [&](double fx) {
    const Vec3 p(-cfg.bound + (1.0 + fx) * s, y, z);
    std::vector<double> feat(cfg.feature_dim());
    grid.encode(std::span<const Vec3>(&p, 1), feat.data());
    return feat;
  };
  const auto a = at_frac(0.25), mid = at_frac(0.5), b = at_frac(0.75);
  for (size_t f = 0; f < mid.size(); ++f) {
    CHECK(mid[f] == doctest::Approx(0.5 * (a[f] + b[f])).epsilon(1e-12));
  }
}

TEST_CASE("analytic jacobian matches finite differences") {
  HashGridConfig cfg;
  cfg.levels = 3;
  cfg.features_per_level = 2;
  cfg.coarsest_resolution = 2;
  cfg.finest_resolution = 8;
  cfg.table_size_log2 = 12;
  HashGridEncoding grid(cfg, RngStream(5, "grid-test"));

  RngStream rng(17, "grid-fd");
  const double h = 1e-6;
  int tested = 0;
  while (tested < 6) {
    const Vec3 p(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9),
                 rng.uniform(-0.9, 0.9));
    // skip positions whose FD probes would straddle a cell face
    bool interior = true;
    for (int l = 0; l < cfg.levels && interior; ++l) {
      const int res = cfg.level_resolution(l);
      for (int a = 0; a < 3; ++a) {
        const double u = (p[a] + cfg.bound) * res / (2.0 * cfg.bound);
        const double frac = u - std::floor(u);
        if (frac < 0.01 || frac > 0.99) interior = false;
      }
    }
    if (!interior) continue;
    ++tested;

    const int D = cfg.feature_dim();
    std::vector<double> feat(D), jac(D * 3);
    grid.encode_with_jacobian(std::span<const Vec3>(&p, 1), feat.data(), jac.data());
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 pp = p, pm = p;
      pp[axis] += h;
      pm[axis] -= h;
      std::vector<double> fp(D), fm(D);
      grid.encode(std::span<const Vec3>(&pp, 1), fp.data());
      grid.encode(std::span<const Vec3>(&pm, 1), fm.data());
      for (int f = 0; f < D; ++f) {
        const double fd = (fp[f] - fm[f]) / (2.0 * h);
        const double an = jac[f * 3 + axis];
        CHECK(an == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
      }
    }
  }
}

TEST_CASE("backward deposits unit total weight per level and feature") {
  HashGridConfig cfg;
  cfg.levels = 4;
  cfg.features_per_level = 2;
  cfg.coarsest_resolution = 2;
  cfg.finest_resolution = 16;
  cfg.table_size_log2 = 6;  // forces the finest levels through the hash
  HashGridEncoding grid(cfg, RngStream(2, "grid-test"));
  CHECK(grid.level_entries(3) == size_t(1) << 6);
  CHECK(grid.level_entries(0) == 27);

  const Vec3 p(0.123, -0.456, 0.789);
  std::vector<double> ones(cfg.feature_dim(), 1.0);
  grid.zero_grad();
  grid.backward(std::span<const Vec3>(&p, 1), ones.data());
  // Corner weights sum to one per level, so the deposited gradient mass is
  // levels * features_per_level regardless of hash collisions.
  const double total = std::accumulate(grid.grads().begin(), grid.grads().end(), 0.0);
  CHECK(total == doctest::Approx(cfg.levels * cfg.features_per_level).epsilon(1e-12));

  grid.zero_grad();
  for (double g : grid.grads()) CHECK(g == 0.0);
}

TEST_CASE("level offsets tile the table contiguously") {
  HashGridConfig cfg;
  cfg.levels = 5;
  cfg.features_per_level = 2;
  cfg.coarsest_resolution = 2;
  cfg.finest_resolution = 32;
  cfg.table_size_log2 = 8;
  HashGridEncoding grid(cfg, RngStream(1, "grid-test"));
  size_t expect = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    CHECK(grid.level_offset(l) == expect);
    expect += grid.level_entries(l);
  }
  CHECK(grid.param_count() == expect * cfg.features_per_level);
}

TEST_CASE("positions outside the bound cube are rejected, the faces accepted") {
  const HashGridConfig cfg = dense_config(4);
  HashGridEncoding grid(cfg, RngStream(9, "grid-test"));
  std::vector<double> feat(cfg.feature_dim());

  const Vec3 face(1.0, 0.0, -1.0);  // exactly on the boundary
  CHECK_NOTHROW(grid.encode(std::span<const Vec3>(&face, 1), feat.data()));

  const Vec3 outside(1.0 + 1e-6, 0.0, 0.0);
  CHECK_THROWS_WITH_AS(grid.encode(std::span<const Vec3>(&outside, 1), feat.data()),
                       "hash grid: position outside the bound cube",
                       std::domain_error);

  const Vec3 bad(std::nan(""), 0.0, 0.0);
  CHECK_THROWS_AS(grid.encode(std::span<const Vec3>(&bad, 1), feat.data()),
                  std::invalid_argument);
}

TEST_CASE("identical seeds reproduce the table, different seeds do not") {
  const HashGridConfig cfg = dense_config(4);
  HashGridEncoding a(cfg, RngStream(42, "grid"));
  HashGridEncoding b(cfg, RngStream(42, "grid"));
  HashGridEncoding c(cfg, RngStream(43, "grid"));
  CHECK(a.table() == b.table());
  CHECK(a.table() != c.table());
  for (double v : a.table()) CHECK(std::abs(v) <= 1e-4);
}

TEST_CASE("config validation rejects inconsistent layouts") {
  HashGridConfig cfg;
  cfg.levels = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HashGridConfig{};
  cfg.finest_resolution = 8;
  cfg.coarsest_resolution = 16;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HashGridConfig{};
  cfg.bound = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HashGridConfig{};
  cfg.table_size_log2 = 31;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
