#include "promptrr/model.hpp"

#include "promptrr/ops.hpp"

namespace promptrr {
namespace {

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

PromptRR build_model(const TrainConfig& cfg) {
    validate(cfg);
    PromptRR m;
    m.cfg = cfg;
    // separate stream so training draws never depend on how many params exist
    Rng rng(Rng::derive(cfg.seed, 1000));
    const int n_p = cfg.model.n_p, d_p = cfg.model.d_p;
    const int c_f = cfg.model.base_channels;
    const int k_pre = cfg.fpe_pre_gt_only ? 1 : 2;
    m.fpe_pre =
        make_fpe_params(m.reg, "fpe_pre", k_pre, n_p, d_p, c_f, cfg.fpe_res_blocks, rng);
    m.fpe_con = make_fpe_params(m.reg, "fpe_con", 1, n_p, d_p, c_f, cfg.fpe_res_blocks, rng);
    m.restorer = make_promptformer_params(m.reg, "pf", cfg.model, rng);
    m.den_lf = make_denoiser_params(m.reg, "den_lf", n_p, d_p, cfg.timesteps, rng);
    m.den_hf = make_denoiser_params(m.reg, "den_hf", n_p, d_p, cfg.timesteps, rng);
    m.sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    return m;
}

FrequencyPromptPair target_prompts(const PromptRR& m, const Tensor& gt, const Tensor& input) {
    if (m.cfg.fpe_pre_gt_only) return fpe_encode(gt, m.fpe_pre);
    return fpe_encode(concat0(gt, input), m.fpe_pre);
}

FrequencyPromptPair cond_prompts(const PromptRR& m, const Tensor& input) {
    return fpe_encode(input, m.fpe_con);
}

FrequencyPromptPair generate_prompts(const PromptRR& m, const FrequencyPromptPair& cond,
                                     std::uint64_t seed) {
    return sample_prompts(cond, m.den_lf, m.den_hf, m.sched, seed, m.cfg.sampler);
}

Tensor restore_image(const PromptRR& m, const Tensor& input, const FrequencyPromptPair& prompts) {
    return restore(input, prompts, m.restorer, m.cfg.model);
}

Tensor reflect_pad_to(const Tensor& x, int multiple) {
    if (x.ndim() != 3) throw TensorError("reflect_pad_to: expected [C x H x W]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ph = (multiple - h % multiple) % multiple;
    const int pw = (multiple - w % multiple) % multiple;
    if (ph == 0 && pw == 0) return x;
    Tensor out = Tensor::zeros({c, h + ph, w + pw});
    auto xd = x.data();
    auto od = out.data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h + ph; ++i)
            for (int j = 0; j < w + pw; ++j)
                od[(static_cast<std::size_t>(ch) * (h + ph) + i) * (w + pw) + j] =
                    xd[(static_cast<std::size_t>(ch) * h + reflect_index(i, h)) * w +
                       reflect_index(j, w)];
    return out;
}

Tensor infer_image(const PromptRR& m, const Tensor& input, std::uint64_t seed) {
    if (input.ndim() != 3 || input.dim(0) != 3)
        throw TensorError("infer_image: expected [3 x H x W], got " + shape_str(input.shape()));
    NoGradScope frozen;
    const int h = input.dim(1), w = input.dim(2);
    const Tensor padded = reflect_pad_to(input, 8);
    const FrequencyPromptPair cond = cond_prompts(m, padded);
    const FrequencyPromptPair prompts = generate_prompts(m, cond, seed);
    const Tensor restored = restore_image(m, padded, prompts);
    if (padded.dim(1) == h && padded.dim(2) == w) return restored;

    Tensor out = Tensor::zeros({3, h, w});
    auto rd = restored.data();
    auto od = out.data();
    const int pw2 = restored.dim(2);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                od[(static_cast<std::size_t>(c) * h + i) * w + j] =
                    rd[(static_cast<std::size_t>(c) * restored.dim(1) + i) * pw2 + j];
    return out;
}

}  // namespace promptrr
