#pragma once

#include "promptrr/tensor.hpp"

namespace promptrr {

/// Single-level 2-D Haar analysis with the orthonormal (energy-preserving)
/// scaling: each 2x2 block [a b; c d] maps to
///   ll = (a+b+c+d)/2   lh = (a-b+c-d)/2
///   hl = (a+b-c-d)/2   hh = (a-b-c+d)/2
/// Input [C x H x W] (H, W even) packs to [4C x H/2 x W/2] with the four
/// bands stacked in the order ll, lh, hl, hh.
Tensor haar2_fwd(const Tensor& x);

/// Exact inverse of haar2_fwd; the butterfly matrix is its own inverse.
Tensor haar2_inv(const Tensor& packed);

struct WaveletBands {
    Tensor ll, lh, hl, hh;
};

/// Views of the four bands of a packed [4C x h x w] tensor (copies; each
/// participates in the autodiff graph via the slice).
WaveletBands split_bands(const Tensor& packed);

struct FreqSplit {
    Tensor lf;  ///< [C x h x w], the ll band
    Tensor hf;  ///< [3C x h x w], lh-hl-hh stacked
};

FreqSplit split_freq(const Tensor& packed);

}  // namespace promptrr
