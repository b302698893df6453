#pragma once

#include <string>

#include "promptrr/params.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

/// How much of the prompt machinery a block instantiates.
///  full        — cross-attention interaction + injection
///  inject_only — injection with a standardized pass-through prompt
///  off         — plain attention / feed-forward (no prompt parameters)
enum class PiimMode { full, inject_only, off };

/// Which sub-blocks of a TPB receive their prompt.
enum class PromptUse { both, msa_only, ffn_only, none };

struct TpbConfig {
    int channels = 16;
    int heads = 1;
    int n_p = 4;
    int d_p = 16;
    PiimMode piim_mode = PiimMode::full;
    PromptUse use_prompt_in = PromptUse::both;
};

/// Channel attention: LN, per-branch 1x1 + depthwise 3x3 Q/K/V convs, a
/// (C/heads)^2 softmax attention matrix per head with learnable temperature,
/// 1x1 output projection, residual.
struct AttentionParams {
    int heads = 1;
    Tensor ln_gain, ln_bias;
    Tensor q_w, q_b, q_dw, q_dwb;
    Tensor k_w, k_b, k_dw, k_dwb;
    Tensor v_w, v_b, v_dw, v_dwb;
    Tensor proj_w, proj_b;
    Tensor alpha;  ///< one temperature per head, init 1
};

/// Gated feed-forward: LN, two expansion branches (1x1 up + depthwise 3x3),
/// GELU gate on branch 1, elementwise product, 1x1 projection, residual.
struct GdfnParams {
    Tensor ln_gain, ln_bias;
    Tensor up1_w, up1_b, dw1_w, dw1_b;
    Tensor up2_w, up2_b, dw2_w, dw2_b;
    Tensor proj_w, proj_b;
};

/// Prompt interaction (pool + two channel maps -> token cross-attention ->
/// standardize-and-modulate) and injection (two linear reads of the refined
/// prompt produce a per-channel scale and shift).
struct PiimParams {
    PiimMode mode = PiimMode::off;
    int n_p = 0, d_p = 0;
    // interaction (mode == full)
    Tensor head1_w, head1_b;  ///< 1x1, C -> C on the pooled feature
    Tensor head2_w, head2_b;  ///< 1x1, C -> 1
    Tensor wq, wk, wv;        ///< d_p x d_p token projections
    Tensor alpha;             ///< attention temperature, init 1
    Tensor fg1_w, fg1_b, fg_ln_gain, fg_ln_bias, fg2_w, fg2_b;
    Tensor fb1_w, fb1_b, fb_ln_gain, fb_ln_bias, fb2_w, fb2_b;
    // injection (mode != off)
    Tensor w1_w, w1_b;  ///< n_p*d_p -> C scale read
    Tensor w2_w, w2_b;  ///< n_p*d_p -> C shift read
};

struct TpbParams {
    AttentionParams att;
    GdfnParams ffn;
    PiimParams piim_msa;
    PiimParams piim_ffn;
};

AttentionParams make_attention_params(ParamRegistry& reg, const std::string& prefix, int channels,
                                      int heads, Rng& rng);
GdfnParams make_gdfn_params(ParamRegistry& reg, const std::string& prefix, int channels, Rng& rng);
PiimParams make_piim_params(ParamRegistry& reg, const std::string& prefix, int channels, int n_p,
                            int d_p, PiimMode mode, Rng& rng);
/// Builds both hosts plus their PIIMs; `use_prompt_in` downgrades the unused
/// side to PiimMode::off so no dead parameters are allocated.
TpbParams make_tpb_params(ParamRegistry& reg, const std::string& prefix, const TpbConfig& cfg,
                          Rng& rng);

Tensor mdta(const Tensor& x, const AttentionParams& p);
Tensor gdfn(const Tensor& x, const GdfnParams& p);

/// Cross-attention between the pooled feature and the prompt, then
/// standardize-and-modulate; returns the refined prompt. `x_norm` is the
/// host block's normalized feature.
Tensor piim_interact(const Tensor& x_norm, const Tensor& prompt, const PiimParams& p);

/// The inject_only refinement: per-token standardization of the raw prompt.
Tensor piim_standardize(const Tensor& prompt);

/// Per-channel modulation of x by the refined prompt.
Tensor piim_inject(const Tensor& x, const Tensor& p_r, const PiimParams& p);

/// Attention host with prompt conditioning decided by `piim.mode`; with mode
/// off this is the same computation as mdta (bit for bit).
Tensor pmsa(const Tensor& x, const Tensor& prompt, const AttentionParams& att,
            const PiimParams& piim);
Tensor pffn(const Tensor& x, const Tensor& prompt, const GdfnParams& ffn,
            const PiimParams& piim);

/// pmsa then pffn, each with its own residual.
Tensor tpb(const Tensor& x, const Tensor& prompt_msa, const Tensor& prompt_ffn,
           const TpbParams& params);

}  // namespace promptrr
