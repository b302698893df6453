#include "promptrr/blocks.hpp"

#include "promptrr/ops.hpp"

namespace promptrr {

namespace {

constexpr float kLnEps = 1e-5f;

void check_prompt(const Tensor& prompt, const PiimParams& p, const char* op) {
    if (!prompt.defined() || prompt.ndim() != 2 || prompt.dim(0) != p.n_p ||
        prompt.dim(1) != p.d_p)
        throw TensorError(std::string(op) + ": prompt must be [" + std::to_string(p.n_p) + " x " +
                          std::to_string(p.d_p) + "], got " +
                          (prompt.defined() ? shape_str(prompt.shape()) : std::string("<undefined>")));
}

/// linear -> LN -> leaky_relu -> linear, applied token-wise. The second
/// layer is zero-initialized, so this starts as the zero map.
Tensor modulation_head(const Tensor& prompt, const Tensor& w1, const Tensor& b1,
                       const Tensor& ln_gain, const Tensor& ln_bias, const Tensor& w2,
                       const Tensor& b2) {
    Tensor h = linear(prompt, w1, b1);
    h = layer_norm(h, ln_gain, ln_bias, kLnEps, 1);
    h = leaky_relu(h);
    return linear(h, w2, b2);
}

/// Shared Q/K/V attention path; `y` is the (already conditioned) normalized
/// feature, `x` the residual source.
Tensor attention_core(const Tensor& x, const Tensor& y, const AttentionParams& p) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (c % p.heads != 0)
        throw TensorError("attention: channels " + std::to_string(c) +
                          " not divisible by heads " + std::to_string(p.heads));
    const int ch = c / p.heads;
    Tensor q = dwconv3x3(conv1x1(y, p.q_w, p.q_b), p.q_dw, p.q_dwb);
    Tensor k = dwconv3x3(conv1x1(y, p.k_w, p.k_b), p.k_dw, p.k_dwb);
    Tensor v = dwconv3x3(conv1x1(y, p.v_w, p.v_b), p.v_dw, p.v_dwb);
    std::vector<Tensor> heads_out;
    heads_out.reserve(static_cast<std::size_t>(p.heads));
    for (int hd = 0; hd < p.heads; ++hd) {
        Tensor qh = reshape(slice0(q, hd * ch, (hd + 1) * ch), {ch, h * w});
        Tensor kh = reshape(slice0(k, hd * ch, (hd + 1) * ch), {ch, h * w});
        Tensor vh = reshape(slice0(v, hd * ch, (hd + 1) * ch), {ch, h * w});
        Tensor scores = div_by(matmul(qh, transpose2d(kh)), slice0(p.alpha, hd, hd + 1));
        Tensor att = softmax(scores, 1);
        heads_out.push_back(reshape(matmul(att, vh), {ch, h, w}));
    }
    Tensor merged = heads_out.size() == 1
                        ? heads_out[0]
                        : concat0(std::span<const Tensor>(heads_out.data(), heads_out.size()));
    return add(x, conv1x1(merged, p.proj_w, p.proj_b));
}

Tensor gdfn_core(const Tensor& x, const Tensor& y, const GdfnParams& p) {
    Tensor b1 = gelu(dwconv3x3(conv1x1(y, p.up1_w, p.up1_b), p.dw1_w, p.dw1_b));
    Tensor b2 = dwconv3x3(conv1x1(y, p.up2_w, p.up2_b), p.dw2_w, p.dw2_b);
    return add(x, conv1x1(mul(b1, b2), p.proj_w, p.proj_b));
}

Tensor channel_ln(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return layer_norm(x, gain, bias, kLnEps, 0);
}

/// Refined prompt for the block's mode; undefined when the mode is off.
Tensor refine_prompt(const Tensor& x_norm, const Tensor& prompt, const PiimParams& piim,
                     const char* op) {
    switch (piim.mode) {
        case PiimMode::off:
            return {};
        case PiimMode::inject_only:
            check_prompt(prompt, piim, op);
            return piim_standardize(prompt);
        case PiimMode::full:
            check_prompt(prompt, piim, op);
            return piim_interact(x_norm, prompt, piim);
    }
    throw TensorError("unreachable");
}

}  // namespace

AttentionParams make_attention_params(ParamRegistry& reg, const std::string& prefix, int channels,
                                      int heads, Rng& rng) {
    if (heads < 1 || channels % heads != 0)
        throw TensorError("attention params '" + prefix + "': channels " +
                          std::to_string(channels) + " not divisible by heads " +
                          std::to_string(heads));
    AttentionParams p;
    p.heads = heads;
    p.ln_gain = reg.ones(prefix + ".ln_g", {channels});
    p.ln_bias = reg.zeros(prefix + ".ln_b", {channels});
    auto branch = [&](const char* n, Tensor& w, Tensor& b, Tensor& dw, Tensor& dwb) {
        w = reg.uniform(prefix + "." + n + "_w", {channels, channels}, channels, rng);
        b = reg.zeros(prefix + "." + n + "_b", {channels});
        dw = reg.uniform(prefix + "." + n + "_dw", {channels, 3, 3}, 9, rng);
        dwb = reg.zeros(prefix + "." + n + "_dwb", {channels});
    };
    branch("q", p.q_w, p.q_b, p.q_dw, p.q_dwb);
    branch("k", p.k_w, p.k_b, p.k_dw, p.k_dwb);
    branch("v", p.v_w, p.v_b, p.v_dw, p.v_dwb);
    p.proj_w = reg.uniform(prefix + ".proj_w", {channels, channels}, channels, rng);
    p.proj_b = reg.zeros(prefix + ".proj_b", {channels});
    p.alpha = reg.ones(prefix + ".alpha", {heads});
    return p;
}

GdfnParams make_gdfn_params(ParamRegistry& reg, const std::string& prefix, int channels,
                            Rng& rng) {
    const int hidden = 2 * channels;  // expansion factor 2.0
    GdfnParams p;
    p.ln_gain = reg.ones(prefix + ".ln_g", {channels});
    p.ln_bias = reg.zeros(prefix + ".ln_b", {channels});
    p.up1_w = reg.uniform(prefix + ".up1_w", {hidden, channels}, channels, rng);
    p.up1_b = reg.zeros(prefix + ".up1_b", {hidden});
    p.dw1_w = reg.uniform(prefix + ".dw1_w", {hidden, 3, 3}, 9, rng);
    p.dw1_b = reg.zeros(prefix + ".dw1_b", {hidden});
    p.up2_w = reg.uniform(prefix + ".up2_w", {hidden, channels}, channels, rng);
    p.up2_b = reg.zeros(prefix + ".up2_b", {hidden});
    p.dw2_w = reg.uniform(prefix + ".dw2_w", {hidden, 3, 3}, 9, rng);
    p.dw2_b = reg.zeros(prefix + ".dw2_b", {hidden});
    p.proj_w = reg.uniform(prefix + ".proj_w", {channels, hidden}, hidden, rng);
    p.proj_b = reg.zeros(prefix + ".proj_b", {channels});
    return p;
}

PiimParams make_piim_params(ParamRegistry& reg, const std::string& prefix, int channels, int n_p,
                            int d_p, PiimMode mode, Rng& rng) {
    PiimParams p;
    p.mode = mode;
    p.n_p = n_p;
    p.d_p = d_p;
    if (mode == PiimMode::off) return p;
    if (mode == PiimMode::full) {
        p.head1_w = reg.uniform(prefix + ".head1_w", {channels, channels}, channels, rng);
        p.head1_b = reg.zeros(prefix + ".head1_b", {channels});
        p.head2_w = reg.uniform(prefix + ".head2_w", {1, channels}, channels, rng);
        p.head2_b = reg.zeros(prefix + ".head2_b", {1});
        p.wq = reg.uniform(prefix + ".wq", {d_p, d_p}, d_p, rng);
        p.wk = reg.uniform(prefix + ".wk", {d_p, d_p}, d_p, rng);
        p.wv = reg.uniform(prefix + ".wv", {d_p, d_p}, d_p, rng);
        p.alpha = reg.ones(prefix + ".alpha", {1});
        p.fg1_w = reg.uniform(prefix + ".fg1_w", {d_p, d_p}, d_p, rng);
        p.fg1_b = reg.zeros(prefix + ".fg1_b", {d_p});
        p.fg_ln_gain = reg.ones(prefix + ".fg_ln_g", {d_p});
        p.fg_ln_bias = reg.zeros(prefix + ".fg_ln_b", {d_p});
        p.fg2_w = reg.zeros(prefix + ".fg2_w", {d_p, d_p});  // start at pure standardization
        p.fg2_b = reg.zeros(prefix + ".fg2_b", {d_p});
        p.fb1_w = reg.uniform(prefix + ".fb1_w", {d_p, d_p}, d_p, rng);
        p.fb1_b = reg.zeros(prefix + ".fb1_b", {d_p});
        p.fb_ln_gain = reg.ones(prefix + ".fb_ln_g", {d_p});
        p.fb_ln_bias = reg.zeros(prefix + ".fb_ln_b", {d_p});
        p.fb2_w = reg.zeros(prefix + ".fb2_w", {d_p, d_p});
        p.fb2_b = reg.zeros(prefix + ".fb2_b", {d_p});
    }
    p.w1_w = reg.uniform(prefix + ".w1_w", {channels, n_p * d_p}, n_p * d_p, rng);
    p.w1_b = reg.zeros(prefix + ".w1_b", {channels});
    p.w2_w = reg.uniform(prefix + ".w2_w", {channels, n_p * d_p}, n_p * d_p, rng);
    p.w2_b = reg.zeros(prefix + ".w2_b", {channels});
    return p;
}

TpbParams make_tpb_params(ParamRegistry& reg, const std::string& prefix, const TpbConfig& cfg,
                          Rng& rng) {
    auto effective = [&](bool wanted) {
        return wanted ? cfg.piim_mode : PiimMode::off;
    };
    const bool msa_on = cfg.use_prompt_in == PromptUse::both ||
                        cfg.use_prompt_in == PromptUse::msa_only;
    const bool ffn_on = cfg.use_prompt_in == PromptUse::both ||
                        cfg.use_prompt_in == PromptUse::ffn_only;
    TpbParams p;
    p.att = make_attention_params(reg, prefix + ".msa", cfg.channels, cfg.heads, rng);
    p.piim_msa = make_piim_params(reg, prefix + ".msa.piim", cfg.channels, cfg.n_p, cfg.d_p,
                                  effective(msa_on), rng);
    p.ffn = make_gdfn_params(reg, prefix + ".ffn", cfg.channels, rng);
    p.piim_ffn = make_piim_params(reg, prefix + ".ffn.piim", cfg.channels, cfg.n_p, cfg.d_p,
                                  effective(ffn_on), rng);
    return p;
}

Tensor mdta(const Tensor& x, const AttentionParams& p) {
    return attention_core(x, channel_ln(x, p.ln_gain, p.ln_bias), p);
}

Tensor gdfn(const Tensor& x, const GdfnParams& p) {
    return gdfn_core(x, channel_ln(x, p.ln_gain, p.ln_bias), p);
}

Tensor piim_standardize(const Tensor& prompt) {
    if (!prompt.defined() || prompt.ndim() != 2)
        throw TensorError("piim_standardize: prompt must be rank 2");
    Tensor unit = Tensor::full({prompt.dim(1)}, 1.f);
    Tensor zero = Tensor::zeros({prompt.dim(1)});
    return layer_norm(prompt, unit, zero, kLnEps, 1);
}

Tensor piim_interact(const Tensor& x_norm, const Tensor& prompt, const PiimParams& p) {
    if (p.mode != PiimMode::full)
        throw TensorError("piim_interact: parameters were not built for full interaction");
    check_prompt(prompt, p, "piim_interact");
    // Pool the feature down to prompt geometry, then two channel maps give
    // the prompt-shaped summary.
    Tensor pooled = adaptive_avg_pool(x_norm, p.n_p, p.d_p);
    Tensor xhat = reshape(conv1x1(conv1x1(pooled, p.head1_w, p.head1_b), p.head2_w, p.head2_b),
                          {p.n_p, p.d_p});
    Tensor q = linear(xhat, p.wq);
    Tensor k = linear(prompt, p.wk);
    Tensor v = linear(xhat, p.wv);
    Tensor a = softmax(div_by(matmul(q, transpose2d(k)), p.alpha), 1);
    Tensor av = matmul(a, v);
    // Adaptive stage is the identity at prompt geometry; kept explicit.
    Tensor pprime = reshape(adaptive_avg_pool(reshape(av, {1, p.n_p, p.d_p}), p.n_p, p.d_p),
                            {p.n_p, p.d_p});
    Tensor gamma = modulation_head(prompt, p.fg1_w, p.fg1_b, p.fg_ln_gain, p.fg_ln_bias, p.fg2_w,
                                   p.fg2_b);
    Tensor beta = modulation_head(prompt, p.fb1_w, p.fb1_b, p.fb_ln_gain, p.fb_ln_bias, p.fb2_w,
                                  p.fb2_b);
    Tensor ones = Tensor::full({p.n_p, p.d_p}, 1.f);
    return add(mul(piim_standardize(pprime), add(ones, gamma)), beta);
}

Tensor piim_inject(const Tensor& x, const Tensor& p_r, const PiimParams& p) {
    if (p.mode == PiimMode::off)
        throw TensorError("piim_inject: parameters were built with injection off");
    check_prompt(p_r, p, "piim_inject");
    Tensor flat = flatten(p_r);
    Tensor s = linear(flat, p.w1_w, p.w1_b);
    Tensor t = linear(flat, p.w2_w, p.w2_b);
    return scale_shift_channels(x, s, t);
}

Tensor pmsa(const Tensor& x, const Tensor& prompt, const AttentionParams& att,
            const PiimParams& piim) {
    Tensor y = channel_ln(x, att.ln_gain, att.ln_bias);
    Tensor p_r = refine_prompt(y, prompt, piim, "pmsa");
    if (p_r.defined()) y = piim_inject(y, p_r, piim);
    return attention_core(x, y, att);
}

Tensor pffn(const Tensor& x, const Tensor& prompt, const GdfnParams& ffn,
            const PiimParams& piim) {
    Tensor y = channel_ln(x, ffn.ln_gain, ffn.ln_bias);
    Tensor p_r = refine_prompt(y, prompt, piim, "pffn");
    if (p_r.defined()) y = piim_inject(y, p_r, piim);
    return gdfn_core(x, y, ffn);
}

Tensor tpb(const Tensor& x, const Tensor& prompt_msa, const Tensor& prompt_ffn,
           const TpbParams& params) {
    Tensor mid = pmsa(x, prompt_msa, params.att, params.piim_msa);
    return pffn(mid, prompt_ffn, params.ffn, params.piim_ffn);
}

}  // namespace promptrr
