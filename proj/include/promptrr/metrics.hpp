#pragma once

// Image quality metrics, computed in double precision. These score results;
// they never participate in training graphs.

#include "promptrr/tensor.hpp"

namespace promptrr {

/// 10*log10(max_val^2 / MSE) in dB. Identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

/// Structural similarity on the grayscale conversion (0.299/0.587/0.114),
/// 11x11 Gaussian window with sigma 1.5, averaged over fully valid window
/// positions. Inputs are [3 x H x W] with H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace promptrr
