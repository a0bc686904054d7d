#pragma once

#include "seedsplat/common.hpp"
#include "seedsplat/fields.hpp"

namespace seedsplat {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_volume = 0.001;
};

// Mean absolute per-channel difference.
double loss_l1(const Image& rendered, const Image& target);

// d(loss_l1)/d(rendered), written into grad (same dimensions as rendered).
double loss_l1_backward(const Image& rendered, const Image& target, Image* grad);

// Structural dissimilarity 1 - mean SSIM with an 11x11 Gaussian window,
// sigma 1.5, data range 1.0, evaluated on the valid (unpadded) region.
double loss_ssim(const Image& rendered, const Image& target);

// Same value plus d(loss_ssim)/d(rendered).
double loss_ssim_backward(const Image& rendered, const Image& target, Image* grad);

// Peak signal-to-noise ratio in dB over all pixels and channels, data range
// 1.0; identical images report the 99 dB cap.
double psnr(const Image& rendered, const Image& target);

// Volume regularization: sum over active gaussians of the product of the
// three scale components.
double loss_volume(const TemporalGaussians& gaussians);

// Accumulates weight * d(loss_volume)/d(scale) into grads->scale.
void loss_volume_backward(const TemporalGaussians& gaussians, double weight,
                          GaussianGrads* grads);

// Mean of the per-gaussian scale products over active gaussians (0 if none);
// the quantity the volume term pushes down.
double mean_scale_product(const TemporalGaussians& gaussians);

// (1 - lambda_ssim) * l1 + lambda_ssim * ssim + lambda_volume * volume.
double total_loss(double l1, double ssim, double volume, const LossWeights& weights);

}  // namespace seedsplat
