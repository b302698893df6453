#pragma once

// Frequency prompt encoder: a wavelet split feeding two small conv encoders,
// one over the low-frequency bands and one over the high-frequency bands.
// Each branch ends in global pooling and a linear head, so the prompts it
// produces have a fixed geometry regardless of image resolution.

#include <string>
#include <vector>

#include "promptrr/params.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

struct FpeResBlock {
    Tensor c1_w, c1_b;
    Tensor c2_w, c2_b;
};

struct FpeBranchParams {
    Tensor stem_w, stem_b;  // 3x3 conv, in_ch -> c_f
    std::vector<FpeResBlock> blocks;
    Tensor fc1_w, fc1_b;  // c_f -> n_p*d_p
    Tensor fc2_w, fc2_b;  // n_p*d_p -> n_p*d_p
};

struct FpeParams {
    int k = 1;  // number of concatenated RGB images
    int n_p = 4;
    int d_p = 16;
    int c_f = 16;
    FpeBranchParams lf;  // consumes 3k low-frequency channels
    FpeBranchParams hf;  // consumes 9k high-frequency channels
};

struct FrequencyPromptPair {
    Tensor lf;  // [n_p, d_p]
    Tensor hf;  // [n_p, d_p]
};

/// Builds both branches; biases start at zero so a zero image maps to zero
/// prompts.
FpeParams make_fpe_params(ParamRegistry& reg, const std::string& prefix, int k, int n_p, int d_p,
                          int c_f, int r_blocks, Rng& rng);

/// images is a channel stack of k RGB images, [3k x H x W] with H, W even.
/// Each channel is wavelet-split once; the low bands drive the lf prompt and
/// the high bands the hf prompt.
FrequencyPromptPair fpe_encode(const Tensor& images, const FpeParams& params);

}  // namespace promptrr
