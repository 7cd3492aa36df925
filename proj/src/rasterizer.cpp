// SPDX-License-Identifier: Apache-2.0
#include "ip3d/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ip3d {
namespace {

using Eigen::Vector2d;

constexpr double kMaxCoverage = 1.0 - 1e-7;

struct EdgeHit {
  double d2 = 0.0;
  Vector2d q = Vector2d::Zero();  // closest point on the edge
  double t = 0.0;                 // clamped edge parameter
};

EdgeHit point_segment(const Vector2d& p, const Vector2d& a,
                      const Vector2d& b) {
  EdgeHit hit;
  const Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  hit.t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  hit.q = a + hit.t * ab;
  hit.d2 = (p - hit.q).squaredNorm();
  return hit;
}

double cross2(const Vector2d& a, const Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Barycentric coordinates of p in triangle (a,b,c); clamped and
/// renormalized so degenerate or outside points stay usable.
void barycentric(const Vector2d& p, const Vector2d& a, const Vector2d& b,
                 const Vector2d& c, double out[3]) {
  const double area = cross2(b - a, c - a);
  if (std::abs(area) < 1e-16) {
    out[0] = out[1] = out[2] = 1.0 / 3.0;
    return;
  }
  const double w0 = cross2(b - p, c - p) / area;
  const double w1 = cross2(c - p, a - p) / area;
  const double w2 = 1.0 - w0 - w1;
  double b0 = std::clamp(w0, 0.0, 1.0);
  double b1 = std::clamp(w1, 0.0, 1.0);
  double b2 = std::clamp(w2, 0.0, 1.0);
  const double sum = b0 + b1 + b2;
  out[0] = b0 / sum;
  out[1] = b1 / sum;
  out[2] = b2 / sum;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Shared per-pixel weight computation: w_i = C_i * prod_{j<i} (1 - C_j).
struct FragComposite {
  std::vector<double> weight;
  std::vector<double> prefix;  // transmittance before fragment i
  double t_final = 1.0;

  void run(const RasterFragment* frags, int count) {
    weight.resize(count);
    prefix.resize(count);
    double T = 1.0;
    for (int i = 0; i < count; ++i) {
      prefix[i] = T;
      weight[i] = T * frags[i].coverage;
      T *= 1.0 - frags[i].coverage;
    }
    t_final = T;
  }
};

}  // namespace

RenderOutput rasterize_mesh(const TriangleMesh& mesh, const CameraPose& pose,
                            const RasterSettings& settings,
                            RasterCache* cache) {
  const int H = settings.height, W = settings.width;
  if (H < 1 || W < 1) {
    throw std::invalid_argument("rasterize: bad image size");
  }
  if (!(pose.fov_y_deg > 0.0 && pose.fov_y_deg < 180.0)) {
    throw std::invalid_argument("rasterize: fov_y outside (0, 180)");
  }
  if (!mesh.colors.empty() && mesh.colors.size() != mesh.positions.size()) {
    throw std::invalid_argument("rasterize: color count mismatch");
  }

  const CameraFrame frame = camera_frame(pose);
  const double tan_y = std::tan(0.5 * pose.fov_y_deg * M_PI / 180.0);
  const double tan_x = tan_y * W / H;
  const double gamma = settings.temperature;

  const size_t nv = mesh.positions.size();
  std::vector<Vec3> cam(nv);
  std::vector<Vector2d> uv(nv);
  std::vector<uint8_t> valid(nv, 0);
  for (size_t i = 0; i < nv; ++i) {
    const Vec3 rel = mesh.positions[i] - frame.origin;
    cam[i] = Vec3(rel.dot(frame.right), rel.dot(frame.up),
                  rel.dot(frame.forward));
    if (cam[i].z() > settings.near_clip) {
      valid[i] = 1;
      uv[i] = Vector2d(cam[i].x() / (cam[i].z() * tan_x),
                       cam[i].y() / (cam[i].z() * tan_y));
    }
  }

  std::vector<Vec3> face_normals(mesh.triangles.size(), Vec3::Zero());
  for (size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    const Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]])
                       .cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
    const double len = n.norm();
    if (len > 1e-14) face_normals[f] = n / len;
  }

  auto pixel_center = [&](int x, int y) {
    return Vector2d(2.0 * (x + 0.5) / W - 1.0, 1.0 - 2.0 * (y + 0.5) / H);
  };
  const double r_cut = std::sqrt(settings.coverage_cutoff * gamma);

  std::vector<RasterFragment> fragments;
  for (size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& tri = mesh.triangles[f];
    if (!valid[tri[0]] || !valid[tri[1]] || !valid[tri[2]]) continue;
    const Vector2d a = uv[tri[0]], b = uv[tri[1]], c = uv[tri[2]];
    const double u_min = std::min({a.x(), b.x(), c.x()}) - r_cut;
    const double u_max = std::max({a.x(), b.x(), c.x()}) + r_cut;
    const double v_min = std::min({a.y(), b.y(), c.y()}) - r_cut;
    const double v_max = std::max({a.y(), b.y(), c.y()}) + r_cut;
    const int x0 = std::max(0, static_cast<int>(std::floor((u_min + 1.0) * 0.5 * W - 0.5)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil((u_max + 1.0) * 0.5 * W - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor((1.0 - v_max) * 0.5 * H - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil((1.0 - v_min) * 0.5 * H - 0.5)));
    const double area_sign = cross2(b - a, c - a) >= 0.0 ? 1.0 : -1.0;

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vector2d p = pixel_center(x, y);
        const double e0 = cross2(b - a, p - a) * area_sign;
        const double e1 = cross2(c - b, p - b) * area_sign;
        const double e2 = cross2(a - c, p - c) * area_sign;
        const bool inside = e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0;

        const EdgeHit h01 = point_segment(p, a, b);
        const EdgeHit h12 = point_segment(p, b, c);
        const EdgeHit h20 = point_segment(p, c, a);
        const EdgeHit* best = &h01;
        int ea = 0, eb = 1;
        if (h12.d2 < best->d2) { best = &h12; ea = 1; eb = 2; }
        if (h20.d2 < best->d2) { best = &h20; ea = 2; eb = 0; }

        if (!inside && best->d2 > settings.coverage_cutoff * gamma) continue;
        const double sign = inside ? 1.0 : -1.0;
        const double coverage =
            std::min(kMaxCoverage, sigmoid(sign * best->d2 / gamma));
        if (coverage < 1e-6) continue;

        RasterFragment frag;
        frag.pixel = y * W + x;
        frag.tri = static_cast<int>(f);
        frag.coverage = coverage;
        const Vector2d attr_point = inside ? p : best->q;
        barycentric(attr_point, a, b, c, frag.bary);
        frag.z = frag.bary[0] * cam[tri[0]].z() + frag.bary[1] * cam[tri[1]].z() +
                 frag.bary[2] * cam[tri[2]].z();
        const Vector2d diff = 2.0 * (best->q - p);
        frag.dd2_duv[0] = Vector2d::Zero();
        frag.dd2_duv[1] = Vector2d::Zero();
        frag.dd2_duv[2] = Vector2d::Zero();
        frag.dd2_duv[ea] = (1.0 - best->t) * diff;
        frag.dd2_duv[eb] = best->t * diff;
        fragments.push_back(frag);
      }
    }
  }

  std::stable_sort(fragments.begin(), fragments.end(),
                   [](const RasterFragment& l, const RasterFragment& r) {
                     if (l.pixel != r.pixel) return l.pixel < r.pixel;
                     if (l.z != r.z) return l.z < r.z;
                     return l.tri < r.tri;
                   });
  std::vector<int> pixel_begin(static_cast<size_t>(H) * W + 1, 0);
  for (const auto& frag : fragments) pixel_begin[frag.pixel + 1]++;
  for (size_t i = 1; i < pixel_begin.size(); ++i) {
    pixel_begin[i] += pixel_begin[i - 1];
  }

  RenderOutput out;
  out.image = Image(H, W, 3);
  out.depth = Image(H, W, 1);
  out.opacity = Image(H, W, 1);
  if (settings.compute_normals) out.normal_map = Image(H, W, 3);

  FragComposite comp;
  const bool with_colors = !mesh.colors.empty();
  for (int px = 0; px < H * W; ++px) {
    const int y = px / W, x = px % W;
    const int begin = pixel_begin[px], count = pixel_begin[px + 1] - begin;
    if (count == 0) {
      for (int ch = 0; ch < 3; ++ch) {
        out.image.at(y, x, ch) = settings.background[ch];
      }
      continue;
    }
    comp.run(fragments.data() + begin, count);
    Vec3 color = Vec3::Zero();
    Vec3 normal_acc = Vec3::Zero();
    double z_acc = 0.0;
    for (int i = 0; i < count; ++i) {
      const RasterFragment& frag = fragments[begin + i];
      const auto& tri = mesh.triangles[frag.tri];
      Vec3 frag_color = Vec3::Zero();
      if (with_colors) {
        for (int m = 0; m < 3; ++m) {
          frag_color += frag.bary[m] * mesh.colors[tri[m]];
        }
      }
      color += comp.weight[i] * frag_color;
      z_acc += comp.weight[i] * frag.z;
      normal_acc += comp.weight[i] * face_normals[frag.tri];
    }
    const double opacity = 1.0 - comp.t_final;
    color += comp.t_final * settings.background;
    for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = color[ch];
    out.opacity.at(y, x) = opacity;
    out.depth.at(y, x) =
        opacity < settings.opacity_threshold ? 0.0 : z_acc / opacity;
    if (settings.compute_normals && opacity >= settings.opacity_threshold) {
      const double len = normal_acc.norm();
      const Vec3 n = len < 1e-12 ? Vec3(0.0, 0.0, 1.0) : Vec3(normal_acc / len);
      for (int ch = 0; ch < 3; ++ch) out.normal_map.at(y, x, ch) = n[ch];
    }
  }

  if (cache) {
    cache->settings = settings;
    cache->frame = frame;
    cache->tan_x = tan_x;
    cache->tan_y = tan_y;
    cache->cam = std::move(cam);
    cache->face_normals = std::move(face_normals);
    cache->fragments = std::move(fragments);
    cache->pixel_begin = std::move(pixel_begin);
  }
  return out;
}

void rasterize_backward(const TriangleMesh& mesh, const RasterCache& cache,
                        const PixelGrads& grads, MeshGrads& out) {
  const RasterSettings& settings = cache.settings;
  const int H = settings.height, W = settings.width;
  const double gamma = settings.temperature;
  out.d_positions.assign(mesh.positions.size(), Vec3::Zero());
  out.d_colors.assign(mesh.positions.size(), Vec3::Zero());

  const bool has_image = !grads.d_image.empty();
  const bool has_depth = !grads.d_depth.empty();
  const bool has_opacity = !grads.d_opacity.empty();
  const bool has_normal = !grads.d_normal.empty() && settings.compute_normals;
  if (!has_image && !has_depth && !has_opacity && !has_normal) return;
  const bool with_colors = !mesh.colors.empty();

  const Mat3 rot = cache.frame.rotation();
  FragComposite comp;
  std::vector<double> dw, dcov, dz;

  for (int px = 0; px < H * W; ++px) {
    const int y = px / W, x = px % W;
    const int begin = cache.pixel_begin[px];
    const int count = cache.pixel_begin[px + 1] - begin;
    if (count == 0) continue;
    const RasterFragment* frags = cache.fragments.data() + begin;
    comp.run(frags, count);
    const double opacity = 1.0 - comp.t_final;
    const bool solid = opacity >= settings.opacity_threshold;

    dw.assign(count, 0.0);
    dz.assign(count, 0.0);

    Vec3 dI = Vec3::Zero();
    if (has_image) {
      dI = Vec3(grads.d_image.at(y, x, 0), grads.d_image.at(y, x, 1),
                grads.d_image.at(y, x, 2));
    }
    double depth = 0.0;
    if (has_depth && solid) {
      double z_acc = 0.0;
      for (int i = 0; i < count; ++i) z_acc += comp.weight[i] * frags[i].z;
      depth = z_acc / opacity;
    }
    const double dD = has_depth ? grads.d_depth.at(y, x) : 0.0;
    const double dO = has_opacity ? grads.d_opacity.at(y, x) : 0.0;

    Vec3 dacc = Vec3::Zero();
    if (has_normal && solid) {
      const Vec3 dN(grads.d_normal.at(y, x, 0), grads.d_normal.at(y, x, 1),
                    grads.d_normal.at(y, x, 2));
      if (dN.squaredNorm() > 0.0) {
        Vec3 acc = Vec3::Zero();
        for (int i = 0; i < count; ++i) {
          acc += comp.weight[i] * cache.face_normals[frags[i].tri];
        }
        const double len = acc.norm();
        if (len >= 1e-12) {
          const Vec3 n_px = acc / len;
          dacc = (dN - n_px * n_px.dot(dN)) / len;
        }
      }
    }

    for (int i = 0; i < count; ++i) {
      const RasterFragment& frag = frags[i];
      const auto& tri = mesh.triangles[frag.tri];
      Vec3 frag_color = Vec3::Zero();
      if (with_colors) {
        for (int m = 0; m < 3; ++m) {
          frag_color += frag.bary[m] * mesh.colors[tri[m]];
        }
      }
      if (has_image) {
        dw[i] += dI.dot(frag_color - settings.background);
        if (with_colors) {
          for (int m = 0; m < 3; ++m) {
            out.d_colors[tri[m]] += frag.bary[m] * comp.weight[i] * dI;
          }
        }
      }
      if (dD != 0.0 && solid) {
        dw[i] += dD * (frag.z - depth) / opacity;
        dz[i] += dD * comp.weight[i] / opacity;
      }
      dw[i] += dO;
      if (dacc.squaredNorm() > 0.0) {
        dw[i] += cache.face_normals[frag.tri].dot(dacc);
      }
    }

    dcov.assign(count, 0.0);
    double suffix = 0.0;
    for (int i = count - 1; i >= 0; --i) {
      dcov[i] = comp.prefix[i] * dw[i] - suffix / (1.0 - frags[i].coverage);
      suffix += dw[i] * comp.weight[i];
    }

    for (int i = 0; i < count; ++i) {
      const RasterFragment& frag = frags[i];
      const auto& tri = mesh.triangles[frag.tri];
      const double c = frag.coverage;
      const double dd2 = dcov[i] * c * (1.0 - c) *
                         (c >= 0.5 ? 1.0 : -1.0) / gamma;
      for (int m = 0; m < 3; ++m) {
        const int vid = tri[m];
        const Vec3& cm = cache.cam[vid];
        Vec3 dcam = Vec3::Zero();
        if (dd2 != 0.0) {
          const Eigen::Vector2d duv = dd2 * frag.dd2_duv[m];
          dcam.x() += duv.x() / (cm.z() * cache.tan_x);
          dcam.y() += duv.y() / (cm.z() * cache.tan_y);
          dcam.z() += -duv.x() * cm.x() / (cm.z() * cm.z() * cache.tan_x) -
                      duv.y() * cm.y() / (cm.z() * cm.z() * cache.tan_y);
        }
        if (dz[i] != 0.0) dcam.z() += dz[i] * frag.bary[m];
        if (dcam.squaredNorm() > 0.0) {
          out.d_positions[vid] += rot * dcam;
        }
      }
    }
  }
}

}  // namespace ip3d
