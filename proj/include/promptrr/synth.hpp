#pragma once

// Synthetic training data: clean/reflection scene generation, the blur-and-add
// compositing rule, and a small on-disk pair dataset.

#include <cstdint>
#include <string>
#include <vector>

#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

struct ImagePair {
    Tensor input_q;       // contaminated observation, [3 x H x W] in [0,1]
    Tensor gt_b;          // clean background
    Tensor reflection_r;  // reflection layer before blurring (provenance)
    Tensor kernel;        // blur kernel actually used, [k x k]
    float weight = 0.f;   // reflection strength actually used
};

struct SynthSpec {
    int kernel_size = 11;  // odd
    double sigma_min = 1.0, sigma_max = 3.0;
    double weight_min = 0.2, weight_max = 0.8;
};

/// Normalized 2-D Gaussian, row-major size*size, sums to one.
std::vector<double> gaussian_kernel(int size, double sigma);

/// Per-channel 2-D convolution with mirror (reflect) padding; the kernel is
/// symmetric so correlation and convolution coincide. Accumulates in double.
Tensor reflect_conv(const Tensor& x, const std::vector<double>& kernel, int size);

/// Q = clamp(B + w * (R conv K), 0, 1); sigma is drawn first, then w.
ImagePair synthesize(const Tensor& b, const Tensor& r, const SynthSpec& spec, Rng& rng);

/// Random smooth gradients with a few rectangles/ellipses blended on top;
/// values in [0,1].
Tensor random_scene(int h, int w, Rng& rng);

/// Writes `count` synthesized pairs as dir/pairs/NNNN_{input,gt}.ppm, one
/// derived seed per index.
void write_pair_dataset(const std::string& dir, int count, int h, int w, const SynthSpec& spec,
                        std::uint64_t seed);

struct LoadedPair {
    Tensor input_q, gt_b;
};

/// Reads pair `index` from dir/pairs/ or, failing that, straight from dir —
/// the latter lets users point at their own folder of NNNN_{input,gt}.ppm.
LoadedPair load_pair(const std::string& dir, int index);

/// Number of contiguous pair indices present starting at 0.
int count_pairs(const std::string& dir);

}  // namespace promptrr
