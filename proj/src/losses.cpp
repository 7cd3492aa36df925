// SPDX-License-Identifier: Apache-2.0
#include "ip3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ip3d {
namespace {

void require_ref_shapes(const ReferenceBundle& ref, const RenderOutput& out) {
  if (ref.image.empty() || ref.mask.empty()) {
    throw std::invalid_argument("loss: reference image and mask required");
  }
  if (ref.image.height() != ref.mask.height() ||
      ref.image.width() != ref.mask.width()) {
    throw std::invalid_argument("loss: reference mask size mismatch");
  }
  if (out.image.height() != ref.image.height() ||
      out.image.width() != ref.image.width()) {
    throw std::invalid_argument("loss: render size mismatch");
  }
}

void ensure_grad(Image& g, const Image& like) {
  if (g.empty()) g = Image(like.height(), like.width(), like.channels());
}

/// Masked Pearson statistics shared by loss_depth value and gradient.
struct DepthStats {
  std::vector<size_t> pixels;       // flat indices with mask == 1
  std::vector<double> xc, yc;       // centered pseudo / rendered depth
  double xn = 0.0, yn = 0.0;        // centered vector norms
  double rho = 0.0;
};

DepthStats depth_stats(const ReferenceBundle& ref, const RenderOutput& out) {
  require_ref_shapes(ref, out);
  if (ref.pseudo_depth.empty()) {
    throw std::invalid_argument("loss_depth: no pseudo depth in reference");
  }
  DepthStats st;
  const size_t n = static_cast<size_t>(ref.mask.height()) * ref.mask.width();
  double sx = 0.0, sy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (ref.mask[i] <= 0.5) continue;
    st.pixels.push_back(i);
    sx += ref.pseudo_depth[i];
    sy += out.depth[i];
  }
  const size_t m = st.pixels.size();
  if (m < 2) throw std::runtime_error("loss_depth: degenerate depth");
  const double mx = sx / m, my = sy / m;
  st.xc.resize(m);
  st.yc.resize(m);
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (size_t j = 0; j < m; ++j) {
    st.xc[j] = ref.pseudo_depth[st.pixels[j]] - mx;
    st.yc[j] = out.depth[st.pixels[j]] - my;
    xx += st.xc[j] * st.xc[j];
    yy += st.yc[j] * st.yc[j];
    xy += st.xc[j] * st.yc[j];
  }
  st.xn = std::sqrt(xx);
  st.yn = std::sqrt(yy);
  if (st.xn < 1e-12 || st.yn < 1e-12) {
    throw std::runtime_error("loss_depth: degenerate depth");
  }
  st.rho = xy / (st.xn * st.yn);
  return st;
}

}  // namespace

double loss_rec(const ReferenceBundle& ref, const RenderOutput& out) {
  require_ref_shapes(ref, out);
  const int H = ref.image.height(), W = ref.image.width();
  const double n_px = static_cast<double>(H) * W;
  double img_term = 0.0, mask_term = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = ref.mask.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double d = m * (ref.image.at(y, x, c) - out.image.at(y, x, c));
        img_term += d * d;
      }
      const double dm = m - out.opacity.at(y, x);
      mask_term += dm * dm;
    }
  }
  return (img_term + mask_term) / n_px;
}

double loss_rec_backward(const ReferenceBundle& ref, const RenderOutput& out,
                         PixelGrads& grads, double weight) {
  const double value = loss_rec(ref, out);
  ensure_grad(grads.d_image, out.image);
  ensure_grad(grads.d_opacity, out.opacity);
  const int H = ref.image.height(), W = ref.image.width();
  const double n_px = static_cast<double>(H) * W;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = ref.mask.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double d = m * (ref.image.at(y, x, c) - out.image.at(y, x, c));
        grads.d_image.at(y, x, c) += weight * (-2.0 * m * d) / n_px;
      }
      grads.d_opacity.at(y, x) +=
          weight * 2.0 * (out.opacity.at(y, x) - m) / n_px;
    }
  }
  return value;
}

double loss_depth(const ReferenceBundle& ref, const RenderOutput& out) {
  const DepthStats st = depth_stats(ref, out);
  return 0.5 * (1.0 - st.rho);
}

double loss_depth_backward(const ReferenceBundle& ref, const RenderOutput& out,
                           PixelGrads& grads, double weight) {
  const DepthStats st = depth_stats(ref, out);
  ensure_grad(grads.d_depth, out.depth);
  for (size_t j = 0; j < st.pixels.size(); ++j) {
    const double drho = st.xc[j] / (st.xn * st.yn) -
                        st.rho * st.yc[j] / (st.yn * st.yn);
    grads.d_depth[st.pixels[j]] += weight * (-0.5) * drho;
  }
  return 0.5 * (1.0 - st.rho);
}

Image gaussian_blur(const Image& src, int kernel_size) {
  if (kernel_size < 3 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian_blur: kernel size must be odd >= 3");
  }
  const int half = kernel_size / 2;
  const double sigma = kernel_size / 6.0;
  std::vector<double> kernel(kernel_size);
  double sum = 0.0;
  for (int i = 0; i < kernel_size; ++i) {
    const double d = i - half;
    kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += kernel[i];
  }
  for (double& k : kernel) k /= sum;

  const int H = src.height(), W = src.width(), C = src.channels();
  Image tmp(H, W, C), dst(H, W, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) {
          const int xx = std::clamp(x + i, 0, W - 1);
          acc += kernel[i + half] * src.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) {
          const int yy = std::clamp(y + i, 0, H - 1);
          acc += kernel[i + half] * tmp.at(yy, x, c);
        }
        dst.at(y, x, c) = acc;
      }
    }
  }
  return dst;
}

double loss_normal(const Image& normal_map, int kernel_size) {
  if (normal_map.empty()) {
    throw std::invalid_argument("loss_normal: empty normal map");
  }
  const Image blurred = gaussian_blur(normal_map, kernel_size);
  double acc = 0.0;
  for (size_t i = 0; i < normal_map.size(); ++i) {
    const double d = normal_map[i] - blurred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(normal_map.size());
}

double loss_normal_backward(const Image& normal_map, PixelGrads& grads,
                            int kernel_size, double weight) {
  if (normal_map.empty()) {
    throw std::invalid_argument("loss_normal: empty normal map");
  }
  const Image blurred = gaussian_blur(normal_map, kernel_size);
  ensure_grad(grads.d_normal, normal_map);
  const double n = static_cast<double>(normal_map.size());
  double acc = 0.0;
  for (size_t i = 0; i < normal_map.size(); ++i) {
    const double d = normal_map[i] - blurred[i];
    acc += d * d;
    grads.d_normal[i] += weight * 2.0 * d / n;
  }
  return acc / n;
}

double total_loss(const LossTerms& terms, const LossWeights& weights) {
  const struct {
    const char* name;
    double value;
  } named[] = {{"rec", terms.rec},
               {"depth", terms.depth},
               {"normal", terms.normal},
               {"sds_ip2d", terms.sds_ip2d},
               {"sds_3d", terms.sds_3d}};
  for (const auto& t : named) {
    if (!std::isfinite(t.value)) {
      throw std::runtime_error(std::string("total_loss: non-finite term '") +
                               t.name + "'");
    }
  }
  return weights.lambda_ip2d * terms.sds_ip2d + weights.lambda_3d * terms.sds_3d +
         weights.lambda_d * terms.depth + weights.lambda_n * terms.normal +
         terms.rec;
}

}  // namespace ip3d
