#pragma once

// Prompt diffusion: a short noising schedule, two small MLP denoisers (one
// per frequency band), the training loss on predicted noise, and the reverse
// samplers that turn a conditional prompt plus seeded noise back into clean
// prompts.

#include <functional>
#include <string>
#include <vector>

#include "promptrr/fpe.hpp"
#include "promptrr/params.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

struct DiffusionSchedule {
    int steps = 0;                  // T
    std::vector<double> beta;       // beta[i] is the step-(i+1) noise rate
    std::vector<double> alpha_bar;  // alpha_bar[t] = prod_{s<=t}(1-beta_s); alpha_bar[0] = 1
};

/// Evenly spaced betas from beta_start to beta_end inclusive (a single step
/// uses beta_start alone).
DiffusionSchedule make_schedule(int steps = 4, double beta_start = 0.1, double beta_end = 0.99);
DiffusionSchedule schedule_from_betas(const std::vector<double>& betas);

struct DenoiserParams {
    int n_p = 0, d_p = 0, steps = 0;
    std::vector<Tensor> w, b;  // 4 hidden layers + linear output
};

/// Input is concat(flatten(condition), flatten(noised prompt), one-hot of t);
/// hidden width is 4*n_p*d_p with leaky relu between layers.
DenoiserParams make_denoiser_params(ParamRegistry& reg, const std::string& prefix, int n_p,
                                    int d_p, int steps, Rng& rng);

Tensor denoiser_forward(const Tensor& cond, const Tensor& noised, int t,
                        const DenoiserParams& params);

/// sqrt(alpha_bar_t) * p0 + sqrt(1 - alpha_bar_t) * eps, 1 <= t <= steps.
Tensor forward_noise(const Tensor& p0, int t, const Tensor& eps, const DiffusionSchedule& sched);

using DenoiserFn = std::function<Tensor(const Tensor& cond, const Tensor& noised, int t)>;

/// Mean squared error between eps and the denoiser's prediction from the
/// noised prompt; one frequency band.
Tensor diffusion_loss_term(const Tensor& p0, const Tensor& cond, int t, const Tensor& eps,
                           const DenoiserFn& denoiser, const DiffusionSchedule& sched);

/// Sum of both band terms, using the MLP denoisers.
Tensor diffusion_loss(const FrequencyPromptPair& p0, const FrequencyPromptPair& cond, int t,
                      const FrequencyPromptPair& eps, const DenoiserParams& lf,
                      const DenoiserParams& hf, const DiffusionSchedule& sched);

enum class SamplerKind { algorithm2, eq8 };

/// Reverse chain from a given start prompt; t runs steps..1. algorithm2
/// re-centers with the schedule, eq8 just subtracts the prediction.
Tensor sample_chain(const Tensor& start, const Tensor& cond, const DenoiserFn& denoiser,
                    const DiffusionSchedule& sched, SamplerKind kind);

/// Draws the start prompts from derived streams of `seed` (lf first), then
/// runs both chains. Pure in (cond, params, seed).
FrequencyPromptPair sample_prompts(const FrequencyPromptPair& cond, const DenoiserParams& lf,
                                   const DenoiserParams& hf, const DiffusionSchedule& sched,
                                   std::uint64_t seed, SamplerKind kind = SamplerKind::algorithm2);

}  // namespace promptrr
