#include "promptrr/promptformer.hpp"

#include "promptrr/ops.hpp"

namespace promptrr {

namespace {

// trunk == false marks the extractor/reconstruction blocks, which inject but
// never run cross-attention; disabling the trunk path disables them too.
TpbConfig stage_tpb_config(const PromptFormerConfig& cfg, int stage, bool trunk) {
    TpbConfig t;
    t.channels = cfg.stage_channels(stage);
    t.heads = cfg.stage_heads[static_cast<std::size_t>(stage)];
    t.n_p = cfg.routed_tokens();
    t.d_p = cfg.d_p;
    if (cfg.trunk_piim == PiimMode::off)
        t.piim_mode = PiimMode::off;
    else
        t.piim_mode = trunk ? cfg.trunk_piim : PiimMode::inject_only;
    t.use_prompt_in = trunk ? cfg.trunk_prompt_in : PromptUse::both;
    return t;
}

std::vector<TpbParams> make_stage(ParamRegistry& reg, const std::string& prefix, int count,
                                  const TpbConfig& tcfg, Rng& rng) {
    std::vector<TpbParams> blocks;
    blocks.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        blocks.push_back(make_tpb_params(reg, prefix + std::to_string(i), tcfg, rng));
    return blocks;
}

}  // namespace

PromptFormerConfig desk_promptformer() { return {}; }

PromptFormerConfig paper_promptformer() {
    PromptFormerConfig cfg;
    cfg.base_channels = 48;
    cfg.stage_blocks = {4, 6, 6, 8};
    cfg.stage_heads = {1, 2, 4, 8};
    return cfg;
}

PromptFormerParams make_promptformer_params(ParamRegistry& reg, const std::string& prefix,
                                            const PromptFormerConfig& cfg, Rng& rng) {
    PromptFormerParams p;
    const int c0 = cfg.stage_channels(0);
    p.extract_w = reg.uniform(prefix + ".extract_w", {c0, 3, 3, 3}, 27, rng);
    p.extract_b = reg.zeros(prefix + ".extract_b", {c0});
    p.extract_tpb = make_tpb_params(reg, prefix + ".extract.tpb",
                                    stage_tpb_config(cfg, 0, false), rng);
    p.enc.resize(3);
    p.dec.resize(3);
    p.down.resize(3);
    p.up.resize(3);
    for (int s = 0; s < 3; ++s) {
        const int n = cfg.stage_blocks[static_cast<std::size_t>(s)];
        const TpbConfig tcfg = stage_tpb_config(cfg, s, true);
        p.enc[static_cast<std::size_t>(s)] =
            make_stage(reg, prefix + ".enc" + std::to_string(s) + ".", (n + 1) / 2, tcfg, rng);
        p.dec[static_cast<std::size_t>(s)] =
            make_stage(reg, prefix + ".dec" + std::to_string(s) + ".", n / 2, tcfg, rng);
        const int ci = cfg.stage_channels(s), cn = cfg.stage_channels(s + 1);
        p.down[static_cast<std::size_t>(s)].w =
            reg.uniform(prefix + ".down" + std::to_string(s) + "_w", {cn, ci, 3, 3}, ci * 9, rng);
        p.down[static_cast<std::size_t>(s)].b =
            reg.zeros(prefix + ".down" + std::to_string(s) + "_b", {cn});
        p.up[static_cast<std::size_t>(s)].w =
            reg.uniform(prefix + ".up" + std::to_string(s) + "_w", {ci, cn}, cn, rng);
        p.up[static_cast<std::size_t>(s)].b =
            reg.zeros(prefix + ".up" + std::to_string(s) + "_b", {ci});
    }
    p.mid = make_stage(reg, prefix + ".mid.", cfg.stage_blocks[3],
                       stage_tpb_config(cfg, 3, true), rng);
    p.recon_tpb = make_tpb_params(reg, prefix + ".recon.tpb",
                                  stage_tpb_config(cfg, 0, false), rng);
    p.recon_w = reg.zeros(prefix + ".recon_w", {3, c0, 3, 3});  // identity at init
    p.recon_b = reg.zeros(prefix + ".recon_b", {3});
    return p;
}

Tensor restore(const Tensor& input, const FrequencyPromptPair& prompts,
               const PromptFormerParams& params, const PromptFormerConfig& cfg) {
    if (!input.defined() || input.ndim() != 3 || input.dim(0) != 3)
        throw TensorError("restore: input must be [3 x H x W]");
    if (input.dim(1) % 8 != 0 || input.dim(2) % 8 != 0)
        throw TensorError("restore: spatial dims must be divisible by 8, got " +
                          shape_str(input.shape()));
    if (!prompts.lf.defined() || !prompts.hf.defined() || prompts.lf.ndim() != 2 ||
        prompts.hf.ndim() != 2 || prompts.lf.dim(0) != cfg.n_p || prompts.lf.dim(1) != cfg.d_p ||
        prompts.hf.dim(0) != cfg.n_p || prompts.hf.dim(1) != cfg.d_p)
        throw TensorError("restore: prompts must both be [" + std::to_string(cfg.n_p) + " x " +
                          std::to_string(cfg.d_p) + "]");

    Tensor pm = prompts.lf, pf = prompts.hf;
    if (cfg.routing == PromptRouting::both_everywhere) {
        pm = concat0(prompts.lf, prompts.hf);
        pf = pm;
    }

    Tensor x = conv2d(input, params.extract_w, params.extract_b, 1, 1);
    x = tpb(x, pm, pf, params.extract_tpb);
    std::vector<Tensor> skips;
    skips.reserve(3);
    for (int s = 0; s < 3; ++s) {
        for (const TpbParams& blk : params.enc[static_cast<std::size_t>(s)])
            x = tpb(x, pm, pf, blk);
        skips.push_back(x);
        x = conv2d(x, params.down[static_cast<std::size_t>(s)].w,
                   params.down[static_cast<std::size_t>(s)].b, 2, 1);
    }
    for (const TpbParams& blk : params.mid) x = tpb(x, pm, pf, blk);
    for (int s = 2; s >= 0; --s) {
        x = conv1x1(upsample_nearest2x(x), params.up[static_cast<std::size_t>(s)].w,
                    params.up[static_cast<std::size_t>(s)].b);
        x = add(x, skips[static_cast<std::size_t>(s)]);
        for (const TpbParams& blk : params.dec[static_cast<std::size_t>(s)])
            x = tpb(x, pm, pf, blk);
    }
    x = tpb(x, pm, pf, params.recon_tpb);
    return add(input, conv2d(x, params.recon_w, params.recon_b, 1, 1));
}

}  // namespace promptrr
