// SPDX-License-Identifier: Apache-2.0
#include "ip3d/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ip3d {
namespace {

constexpr size_t kChunkSamples = 16384;
constexpr double kMinNormalWeight = 1e-12;

void check_settings(const RenderSettings& s, size_t n_rays) {
  if (s.samples_per_ray < 2) {
    throw std::invalid_argument("render: samples_per_ray must be >= 2");
  }
  if (!(s.near < s.far)) {
    throw std::invalid_argument("render: near must be < far");
  }
  if (s.stratified && s.rng == nullptr) {
    throw std::invalid_argument("render: stratified sampling requires an rng");
  }
  if (n_rays == 0) {
    throw std::invalid_argument("render: empty ray batch");
  }
}

Vec3 clamp_to_cube(Vec3 p, double bound) {
  for (int j = 0; j < 3; ++j) p[j] = std::clamp(p[j], -bound, bound);
  return p;
}

[[noreturn]] void throw_nonfinite(const Vec3& p) {
  std::ostringstream os;
  os << "render: non-finite density at sample position (" << p.x() << ", "
     << p.y() << ", " << p.z() << ")";
  throw std::runtime_error(os.str());
}

/// Indices of the k largest weights above the floor, deterministic order.
std::vector<int> select_topk(const std::vector<double>& w, int k) {
  std::vector<int> idx;
  idx.reserve(w.size());
  for (int i = 0; i < static_cast<int>(w.size()); ++i) {
    if (w[i] > kMinNormalWeight) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return w[a] > w[b]; });
  if (static_cast<int>(idx.size()) > k) idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// One selected sample's central-difference stencil: 6 clamped positions and
/// the per-axis spans the difference is divided by.
struct Stencil {
  Vec3 plus[3];
  Vec3 minus[3];
  double span[3];
};

Stencil make_stencil(const Vec3& p, double h, double bound) {
  Stencil st;
  for (int j = 0; j < 3; ++j) {
    Vec3 a = p, b = p;
    a[j] += h;
    b[j] -= h;
    st.plus[j] = clamp_to_cube(a, bound);
    st.minus[j] = clamp_to_cube(b, bound);
    st.span[j] = st.plus[j][j] - st.minus[j][j];
  }
  return st;
}

Vec3 stencil_normal(const double* sigma6, const Stencil& st, bool* degenerate) {
  Vec3 g;
  for (int j = 0; j < 3; ++j) {
    g[j] = st.span[j] > 0.0 ? (sigma6[2 * j] - sigma6[2 * j + 1]) / st.span[j]
                            : 0.0;
  }
  const double norm = g.norm();
  if (norm < 1e-8) {
    *degenerate = true;
    return Vec3(0.0, 0.0, 1.0);
  }
  *degenerate = false;
  return -g / norm;
}

struct RayQuadrature {
  std::vector<double> t_enter;
  std::vector<double> delta;
  std::vector<double> ts;
};

RayQuadrature plan_samples(const RayBatch& rays, const RenderSettings& s,
                           double bound) {
  const size_t n = rays.count();
  const int S = s.samples_per_ray;
  RayQuadrature q;
  q.t_enter.assign(n, 0.0);
  q.delta.assign(n, 0.0);
  q.ts.assign(n * S, 0.0);
  for (size_t r = 0; r < n; ++r) {
    const auto clip = clip_ray_to_cube(rays.origins[r], rays.directions[r],
                                       bound, s.near, s.far);
    if (!clip) continue;
    const double t0 = clip->first;
    const double dt = (clip->second - clip->first) / S;
    q.t_enter[r] = t0;
    q.delta[r] = dt;
    for (int k = 0; k < S; ++k) {
      const double off = s.stratified ? s.rng->uniform() : 0.5;
      q.ts[r * S + k] = t0 + (k + off) * dt;
    }
  }
  return q;
}

/// Per-ray compositing quantities shared by forward and backward.
struct Composite {
  std::vector<double> alpha;   // 1 - exp(-sigma * delta)
  std::vector<double> expterm; // exp(-sigma * delta)
  std::vector<double> trans;   // transmittance before each sample
  std::vector<double> weight;
  double t_final = 1.0;
  double opacity = 0.0;

  void run(const double* sigma, int S, double delta) {
    alpha.resize(S);
    expterm.resize(S);
    trans.resize(S);
    weight.resize(S);
    double T = 1.0;
    for (int k = 0; k < S; ++k) {
      const double e = std::exp(-sigma[k] * delta);
      trans[k] = T;
      expterm[k] = e;
      alpha[k] = 1.0 - e;
      weight[k] = T * alpha[k];
      T *= e;
    }
    t_final = T;
    opacity = 1.0 - T;
  }
};

bool grad_present(const Image& g) { return !g.empty(); }

}  // namespace

std::optional<std::pair<double, double>> clip_ray_to_cube(const Vec3& origin,
                                                          const Vec3& dir,
                                                          double bound,
                                                          double near,
                                                          double far) {
  double t0 = near, t1 = far;
  for (int j = 0; j < 3; ++j) {
    if (std::abs(dir[j]) < 1e-12) {
      if (std::abs(origin[j]) > bound) return std::nullopt;
      continue;
    }
    double ta = (-bound - origin[j]) / dir[j];
    double tb = (bound - origin[j]) / dir[j];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

RenderOutput render_volume(const Field& field, const RayBatch& rays,
                           const RenderSettings& settings, RenderCache* cache) {
  check_settings(settings, rays.count());
  const int H = rays.height, W = rays.width, S = settings.samples_per_ray;
  const size_t n_rays = rays.count();
  const double bound = field.bound();
  const double h = settings.normal_fd_step * bound;

  RayQuadrature quad = plan_samples(rays, settings, bound);
  if (cache) {
    cache->rays = rays;
    cache->settings = settings;
    cache->t_enter = quad.t_enter;
    cache->delta = quad.delta;
    cache->ts = quad.ts;
  }

  RenderOutput out;
  out.image = Image(H, W, 3);
  out.depth = Image(H, W, 1);
  out.opacity = Image(H, W, 1);
  if (settings.compute_normals) out.normal_map = Image(H, W, 3);

  const size_t rays_per_chunk = std::max<size_t>(1, kChunkSamples / S);
  std::vector<Vec3> positions;
  std::vector<double> sigma, rgb;
  std::vector<Vec3> stencil_pos;
  std::vector<double> stencil_sigma;
  Composite comp;

  for (size_t begin = 0; begin < n_rays; begin += rays_per_chunk) {
    const size_t end = std::min(n_rays, begin + rays_per_chunk);
    const size_t nr = end - begin;
    positions.resize(nr * S);
    for (size_t r = 0; r < nr; ++r) {
      const size_t ray = begin + r;
      for (int k = 0; k < S; ++k) {
        positions[r * S + k] =
            clamp_to_cube(rays.origins[ray] +
                              quad.ts[ray * S + k] * rays.directions[ray],
                          bound);
      }
    }
    sigma.resize(nr * S);
    rgb.resize(nr * S * 3);
    field.query(positions, sigma, rgb);
    for (size_t i = 0; i < sigma.size(); ++i) {
      if (!std::isfinite(sigma[i])) throw_nonfinite(positions[i]);
    }

    struct NormalJob {
      size_t ray;
      std::vector<int> sel;
      size_t stencil_begin;  // index into stencil_pos / 6
    };
    std::vector<NormalJob> jobs;
    std::vector<Stencil> stencils;
    stencil_pos.clear();

    for (size_t r = 0; r < nr; ++r) {
      const size_t ray = begin + r;
      const int y = static_cast<int>(ray) / W;
      const int x = static_cast<int>(ray) % W;
      const Vec3& bg = settings.background;
      if (quad.delta[ray] <= 0.0) {
        for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = bg[c];
        continue;
      }
      comp.run(sigma.data() + r * S, S, quad.delta[ray]);
      Vec3 color = Vec3::Zero();
      double t_acc = 0.0;
      for (int k = 0; k < S; ++k) {
        const double w = comp.weight[k];
        const size_t b = (r * S + k) * 3;
        color += w * Vec3(rgb[b], rgb[b + 1], rgb[b + 2]);
        t_acc += w * quad.ts[ray * S + k];
      }
      color += comp.t_final * bg;
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = color[c];
      out.opacity.at(y, x) = comp.opacity;
      out.depth.at(y, x) = comp.opacity < settings.opacity_threshold
                               ? 0.0
                               : t_acc / comp.opacity;
      if (settings.compute_normals &&
          comp.opacity >= settings.opacity_threshold) {
        NormalJob job;
        job.ray = ray;
        job.sel = select_topk(comp.weight, settings.normal_topk);
        job.stencil_begin = stencils.size();
        for (int i : job.sel) {
          const Stencil st = make_stencil(positions[r * S + i], h, bound);
          stencils.push_back(st);
          for (int j = 0; j < 3; ++j) {
            stencil_pos.push_back(st.plus[j]);
            stencil_pos.push_back(st.minus[j]);
          }
        }
        if (!job.sel.empty()) jobs.push_back(std::move(job));
      }
    }

    if (!jobs.empty()) {
      stencil_sigma.resize(stencil_pos.size());
      field.query_density(stencil_pos, stencil_sigma);
      for (const NormalJob& job : jobs) {
        const size_t r = job.ray - begin;
        comp.run(sigma.data() + r * S, S, quad.delta[job.ray]);
        Vec3 acc = Vec3::Zero();
        for (size_t s = 0; s < job.sel.size(); ++s) {
          const size_t sti = job.stencil_begin + s;
          bool degenerate = false;
          const Vec3 n = stencil_normal(stencil_sigma.data() + sti * 6,
                                        stencils[sti], &degenerate);
          acc += comp.weight[job.sel[s]] * n;
        }
        const double norm = acc.norm();
        const Vec3 n_px = norm < 1e-12 ? Vec3(0.0, 0.0, 1.0) : Vec3(acc / norm);
        const int y = static_cast<int>(job.ray) / W;
        const int x = static_cast<int>(job.ray) % W;
        for (int c = 0; c < 3; ++c) out.normal_map.at(y, x, c) = n_px[c];
      }
    }
  }
  return out;
}

void render_volume_backward(TrainableField& field, const RenderCache& cache,
                            const PixelGrads& grads) {
  const RayBatch& rays = cache.rays;
  const RenderSettings& settings = cache.settings;
  const int H = rays.height, W = rays.width, S = settings.samples_per_ray;
  const size_t n_rays = rays.count();
  const double bound = field.bound();
  const double h = settings.normal_fd_step * bound;

  const bool has_image = grad_present(grads.d_image);
  const bool has_depth = grad_present(grads.d_depth);
  const bool has_opacity = grad_present(grads.d_opacity);
  const bool has_normal = grad_present(grads.d_normal) &&
                          settings.compute_normals;
  if (!has_image && !has_depth && !has_opacity && !has_normal) return;
  auto check_shape = [&](const Image& g, int channels, const char* name) {
    if (!g.empty() && (g.height() != H || g.width() != W ||
                       g.channels() != channels)) {
      throw std::invalid_argument(std::string("render backward: ") + name +
                                  " shape mismatch");
    }
  };
  check_shape(grads.d_image, 3, "d_image");
  check_shape(grads.d_depth, 1, "d_depth");
  check_shape(grads.d_opacity, 1, "d_opacity");
  check_shape(grads.d_normal, 3, "d_normal");

  const size_t rays_per_chunk = std::max<size_t>(1, kChunkSamples / S);
  std::vector<Vec3> positions;
  std::vector<double> sigma, rgb;
  std::vector<double> dsigma, drgb, dw;
  std::vector<Vec3> stencil_pos;
  std::vector<double> stencil_sigma, stencil_dsigma;
  Composite comp;

  for (size_t begin = 0; begin < n_rays; begin += rays_per_chunk) {
    const size_t end = std::min(n_rays, begin + rays_per_chunk);
    const size_t nr = end - begin;
    positions.resize(nr * S);
    for (size_t r = 0; r < nr; ++r) {
      const size_t ray = begin + r;
      for (int k = 0; k < S; ++k) {
        positions[r * S + k] =
            clamp_to_cube(rays.origins[ray] +
                              cache.ts[ray * S + k] * rays.directions[ray],
                          bound);
      }
    }
    sigma.resize(nr * S);
    rgb.resize(nr * S * 3);
    field.query(positions, sigma, rgb);
    dsigma.assign(nr * S, 0.0);
    drgb.assign(nr * S * 3, 0.0);
    stencil_pos.clear();
    stencil_dsigma.clear();

    for (size_t r = 0; r < nr; ++r) {
      const size_t ray = begin + r;
      if (cache.delta[ray] <= 0.0) continue;
      const int y = static_cast<int>(ray) / W;
      const int x = static_cast<int>(ray) % W;
      comp.run(sigma.data() + r * S, S, cache.delta[ray]);
      dw.assign(S, 0.0);

      if (has_image) {
        const Vec3 dI(grads.d_image.at(y, x, 0), grads.d_image.at(y, x, 1),
                      grads.d_image.at(y, x, 2));
        for (int k = 0; k < S; ++k) {
          const size_t b = (r * S + k) * 3;
          const Vec3 c(rgb[b], rgb[b + 1], rgb[b + 2]);
          dw[k] += dI.dot(c - settings.background);
          for (int ch = 0; ch < 3; ++ch) {
            drgb[b + ch] += comp.weight[k] * dI[ch];
          }
        }
      }
      if (has_depth && comp.opacity >= settings.opacity_threshold) {
        const double dD = grads.d_depth.at(y, x);
        if (dD != 0.0) {
          double t_acc = 0.0;
          for (int k = 0; k < S; ++k) {
            t_acc += comp.weight[k] * cache.ts[ray * S + k];
          }
          const double depth = t_acc / comp.opacity;
          for (int k = 0; k < S; ++k) {
            dw[k] += dD * (cache.ts[ray * S + k] - depth) / comp.opacity;
          }
        }
      }
      if (has_opacity) {
        const double dO = grads.d_opacity.at(y, x);
        for (int k = 0; k < S; ++k) dw[k] += dO;
      }
      if (has_normal && comp.opacity >= settings.opacity_threshold) {
        const Vec3 dN(grads.d_normal.at(y, x, 0), grads.d_normal.at(y, x, 1),
                      grads.d_normal.at(y, x, 2));
        if (dN.squaredNorm() > 0.0) {
          const std::vector<int> sel = select_topk(comp.weight,
                                                   settings.normal_topk);
          if (!sel.empty()) {
            std::vector<Stencil> stencils;
            std::vector<Vec3> local_pos;
            for (int i : sel) {
              const Stencil st = make_stencil(positions[r * S + i], h, bound);
              stencils.push_back(st);
              for (int j = 0; j < 3; ++j) {
                local_pos.push_back(st.plus[j]);
                local_pos.push_back(st.minus[j]);
              }
            }
            stencil_sigma.resize(local_pos.size());
            field.query_density(local_pos, stencil_sigma);
            std::vector<Vec3> normals(sel.size());
            std::vector<uint8_t> degen(sel.size());
            std::vector<Vec3> gvecs(sel.size());
            Vec3 acc = Vec3::Zero();
            for (size_t s = 0; s < sel.size(); ++s) {
              bool d = false;
              Vec3 g;
              const double* s6 = stencil_sigma.data() + s * 6;
              for (int j = 0; j < 3; ++j) {
                g[j] = stencils[s].span[j] > 0.0
                           ? (s6[2 * j] - s6[2 * j + 1]) / stencils[s].span[j]
                           : 0.0;
              }
              gvecs[s] = g;
              const double norm = g.norm();
              d = norm < 1e-8;
              normals[s] = d ? Vec3(0.0, 0.0, 1.0) : Vec3(-g / norm);
              degen[s] = d ? 1 : 0;
              acc += comp.weight[sel[s]] * normals[s];
            }
            const double l = acc.norm();
            if (l >= 1e-12) {
              const Vec3 n_px = acc / l;
              const Vec3 dacc = (dN - n_px * n_px.dot(dN)) / l;
              for (size_t s = 0; s < sel.size(); ++s) {
                dw[sel[s]] += normals[s].dot(dacc);
                if (degen[s]) continue;
                const Vec3 dn = comp.weight[sel[s]] * dacc;
                const double gnorm = gvecs[s].norm();
                const Vec3 u = -gvecs[s] / gnorm;
                const Vec3 du = (dn - u * u.dot(dn)) / gnorm;
                const Vec3 dg = -du;
                for (int j = 0; j < 3; ++j) {
                  if (stencils[s].span[j] <= 0.0) continue;
                  const double gj = dg[j] / stencils[s].span[j];
                  stencil_pos.push_back(stencils[s].plus[j]);
                  stencil_dsigma.push_back(gj);
                  stencil_pos.push_back(stencils[s].minus[j]);
                  stencil_dsigma.push_back(-gj);
                }
              }
            }
          }
        }
      }

      double suffix = 0.0;
      for (int k = S - 1; k >= 0; --k) {
        dsigma[r * S + k] = cache.delta[ray] *
                            (dw[k] * comp.trans[k] * comp.expterm[k] - suffix);
        suffix += dw[k] * comp.weight[k];
      }
    }

    field.query_backward(positions, dsigma, drgb);
    if (!stencil_pos.empty()) {
      field.query_backward(stencil_pos, stencil_dsigma, {});
    }
  }
}

}  // namespace ip3d
