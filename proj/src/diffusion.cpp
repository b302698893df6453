#include "promptrr/diffusion.hpp"

#include <cmath>

#include "promptrr/ops.hpp"

namespace promptrr {

namespace {

void check_schedule(const DiffusionSchedule& s) {
    if (s.steps < 1 || s.beta.size() != static_cast<std::size_t>(s.steps) ||
        s.alpha_bar.size() != static_cast<std::size_t>(s.steps) + 1)
        throw TensorError("diffusion schedule: inconsistent sizes");
}

void check_t(int t, const DiffusionSchedule& s, const char* op) {
    check_schedule(s);
    if (t < 1 || t > s.steps)
        throw TensorError(std::string(op) + ": t=" + std::to_string(t) + " outside 1.." +
                          std::to_string(s.steps));
}

Tensor draw_normal(int n_p, int d_p, Rng& rng) {
    Tensor t = Tensor::zeros({n_p, d_p});
    for (float& v : t.data()) v = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

DiffusionSchedule schedule_from_betas(const std::vector<double>& betas) {
    if (betas.empty()) throw TensorError("diffusion schedule: needs at least one step");
    DiffusionSchedule s;
    s.steps = static_cast<int>(betas.size());
    s.beta = betas;
    s.alpha_bar.assign(1, 1.0);
    for (double b : betas) {
        if (!(b > 0.0) || !(b < 1.0))
            throw TensorError("diffusion schedule: beta must lie in (0,1)");
        s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
    }
    return s;
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw TensorError("diffusion schedule: needs at least one step");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
        betas[static_cast<std::size_t>(i)] =
            steps == 1 ? beta_start
                       : beta_start + (beta_end - beta_start) * i / (steps - 1);
    return schedule_from_betas(betas);
}

DenoiserParams make_denoiser_params(ParamRegistry& reg, const std::string& prefix, int n_p,
                                    int d_p, int steps, Rng& rng) {
    if (n_p < 1 || d_p < 1 || steps < 1)
        throw TensorError("denoiser params: sizes must be positive");
    DenoiserParams p;
    p.n_p = n_p;
    p.d_p = d_p;
    p.steps = steps;
    const int nd = n_p * d_p;
    const int hidden = 4 * nd;
    int in = 2 * nd + steps;
    // Hidden layers get a He-style gain so signal variance survives the
    // leaky-relu stack (slope 0.2): var = 2/((1+0.2^2)*fan) -> bound 2.402*sqrt(1/fan).
    // The plain 1/fan bound shrinks activations ~6x per layer and stalls training.
    constexpr double kLeakyGain = 2.402;
    for (int layer = 0; layer < 5; ++layer) {
        const int out = layer < 4 ? hidden : nd;
        const double gain = layer < 4 ? kLeakyGain : 1.0;
        const std::string name = prefix + ".fc" + std::to_string(layer);
        p.w.push_back(reg.uniform(name + "_w", {out, in}, in, rng, gain));
        p.b.push_back(reg.zeros(name + "_b", {out}));
        in = out;
    }
    return p;
}

Tensor denoiser_forward(const Tensor& cond, const Tensor& noised, int t,
                        const DenoiserParams& params) {
    if (t < 1 || t > params.steps)
        throw TensorError("denoiser: t=" + std::to_string(t) + " outside 1.." +
                          std::to_string(params.steps));
    const int nd = params.n_p * params.d_p;
    if (!cond.defined() || !noised.defined() || cond.numel() != nd || noised.numel() != nd)
        throw TensorError("denoiser: prompt inputs must have " + std::to_string(nd) +
                          " elements");
    Tensor one_hot = Tensor::zeros({params.steps});
    one_hot.data()[static_cast<std::size_t>(t - 1)] = 1.f;
    Tensor h = concat0(flatten(cond), flatten(noised), one_hot);
    for (int layer = 0; layer < 4; ++layer)
        h = leaky_relu(linear(h, params.w[static_cast<std::size_t>(layer)],
                              params.b[static_cast<std::size_t>(layer)]));
    h = linear(h, params.w[4], params.b[4]);
    return reshape(h, {params.n_p, params.d_p});
}

Tensor forward_noise(const Tensor& p0, int t, const Tensor& eps, const DiffusionSchedule& sched) {
    check_t(t, sched, "forward_noise");
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    return add(scale(p0, static_cast<float>(std::sqrt(ab))),
               scale(eps, static_cast<float>(std::sqrt(1.0 - ab))));
}

Tensor diffusion_loss_term(const Tensor& p0, const Tensor& cond, int t, const Tensor& eps,
                           const DenoiserFn& denoiser, const DiffusionSchedule& sched) {
    Tensor noised = forward_noise(p0, t, eps, sched);
    Tensor diff = sub(denoiser(cond, noised, t), eps);
    return mean(mul(diff, diff));
}

Tensor diffusion_loss(const FrequencyPromptPair& p0, const FrequencyPromptPair& cond, int t,
                      const FrequencyPromptPair& eps, const DenoiserParams& lf,
                      const DenoiserParams& hf, const DiffusionSchedule& sched) {
    auto lf_fn = [&lf](const Tensor& c, const Tensor& n, int step) {
        return denoiser_forward(c, n, step, lf);
    };
    auto hf_fn = [&hf](const Tensor& c, const Tensor& n, int step) {
        return denoiser_forward(c, n, step, hf);
    };
    return add(diffusion_loss_term(p0.lf, cond.lf, t, eps.lf, lf_fn, sched),
               diffusion_loss_term(p0.hf, cond.hf, t, eps.hf, hf_fn, sched));
}

Tensor sample_chain(const Tensor& start, const Tensor& cond, const DenoiserFn& denoiser,
                    const DiffusionSchedule& sched, SamplerKind kind) {
    check_schedule(sched);
    Tensor p = start;
    for (int t = sched.steps; t >= 1; --t) {
        Tensor e = denoiser(cond, p, t);
        if (kind == SamplerKind::eq8) {
            p = sub(p, e);
            continue;
        }
        const double ab_t = sched.alpha_bar[static_cast<std::size_t>(t)];
        const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
        const float carry = static_cast<float>(std::sqrt(ab_prev / ab_t));
        const float remove = static_cast<float>(std::sqrt(1.0 - ab_t));
        const float readd = static_cast<float>(std::sqrt(1.0 - ab_prev));
        p = add(scale(sub(p, scale(e, remove)), carry), scale(e, readd));
    }
    return p;
}

FrequencyPromptPair sample_prompts(const FrequencyPromptPair& cond, const DenoiserParams& lf,
                                   const DenoiserParams& hf, const DiffusionSchedule& sched,
                                   std::uint64_t seed, SamplerKind kind) {
    Rng rng_lf(Rng::derive(seed, 0));
    Rng rng_hf(Rng::derive(seed, 1));
    Tensor start_lf = draw_normal(lf.n_p, lf.d_p, rng_lf);
    Tensor start_hf = draw_normal(hf.n_p, hf.d_p, rng_hf);
    auto lf_fn = [&lf](const Tensor& c, const Tensor& n, int step) {
        return denoiser_forward(c, n, step, lf);
    };
    auto hf_fn = [&hf](const Tensor& c, const Tensor& n, int step) {
        return denoiser_forward(c, n, step, hf);
    };
    FrequencyPromptPair out;
    out.lf = sample_chain(start_lf, cond.lf, lf_fn, sched, kind);
    out.hf = sample_chain(start_hf, cond.hf, hf_fn, sched, kind);
    return out;
}

}  // namespace promptrr
