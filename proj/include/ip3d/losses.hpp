// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ip3d/camera.hpp"
#include "ip3d/image.hpp"
#include "ip3d/renderer.hpp"

namespace ip3d {

/// Loss mixing weights; the reconstruction term always enters with weight 1.
struct LossWeights {
  double lambda_ip2d = 1.0;
  double lambda_3d = 40.0;
  double lambda_d = 0.001;
  double lambda_n = 0.5;
};

/// Reference-view supervision: input image, its binary mask, and an optional
/// monocular pseudo-depth whose affine scale is arbitrary.
struct ReferenceBundle {
  Image image;         // H x W x 3
  Image mask;          // H x W x 1, values in {0,1}
  Image pseudo_depth;  // H x W x 1; empty disables the depth term
  CameraPose pose;
};

/// Masked image reconstruction plus mask agreement, mean-reduced over pixels:
/// mean |M (x - x_hat)|^2 + mean (M - opacity)^2.
double loss_rec(const ReferenceBundle& ref, const RenderOutput& out);
double loss_rec_backward(const ReferenceBundle& ref, const RenderOutput& out,
                         PixelGrads& grads, double weight = 1.0);

/// Half of one minus the Pearson correlation between rendered depth and the
/// pseudo depth, statistics over mask == 1 pixels only. Throws
/// "degenerate depth" when either masked depth has (near) zero variance.
double loss_depth(const ReferenceBundle& ref, const RenderOutput& out);
double loss_depth_backward(const ReferenceBundle& ref, const RenderOutput& out,
                           PixelGrads& grads, double weight = 1.0);

/// Separable Gaussian blur, sigma = kernel_size / 6, replicate padding.
/// kernel_size must be odd and >= 3.
Image gaussian_blur(const Image& src, int kernel_size);

/// Normal smoothness: mean |n - stopgrad(blur(n, k))|^2 over all entries.
/// The blurred branch is excluded from differentiation.
double loss_normal(const Image& normal_map, int kernel_size = 9);
double loss_normal_backward(const Image& normal_map, PixelGrads& grads,
                            int kernel_size = 9, double weight = 1.0);

/// Scalar values of the individual terms. SDS terms follow the value-0
/// convention (their effect is the injected pixel gradient), so the fields
/// default to zero and exist for logging symmetry.
struct LossTerms {
  double rec = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double sds_ip2d = 0.0;
  double sds_3d = 0.0;
};

/// lambda_ip2d * sds_ip2d + lambda_3d * sds_3d + lambda_d * depth +
/// lambda_n * normal + rec. Throws naming the term on any non-finite value.
double total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace ip3d
