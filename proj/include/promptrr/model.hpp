#pragma once

// Full pipeline assembly: both prompt encoders, the restoration trunk, the
// two denoisers, and one registry holding every parameter in a stable order.

#include <cstdint>

#include "promptrr/config.hpp"
#include "promptrr/diffusion.hpp"
#include "promptrr/fpe.hpp"
#include "promptrr/params.hpp"
#include "promptrr/promptformer.hpp"

namespace promptrr {

struct PromptRR {
    TrainConfig cfg;
    ParamRegistry reg;      // registration order: fpe_pre, fpe_con, pf, den_lf, den_hf
    FpeParams fpe_pre;      // sees concat(GT, input) during training
    FpeParams fpe_con;      // sees only the input
    PromptFormerParams restorer;
    DenoiserParams den_lf, den_hf;
    DiffusionSchedule sched;
};

/// Initializes all parameters from a stream derived from cfg.seed.
PromptRR build_model(const TrainConfig& cfg);

/// Training-time prompt targets from the ground truth (plus the input,
/// unless cfg.fpe_pre_gt_only).
FrequencyPromptPair target_prompts(const PromptRR& m, const Tensor& gt, const Tensor& input);

/// Conditional prompts from the degraded input alone.
FrequencyPromptPair cond_prompts(const PromptRR& m, const Tensor& input);

/// Runs both reverse chains from seeded noise, conditioned on `cond`.
/// Records on the active tape, so gradients can flow through the chains.
FrequencyPromptPair generate_prompts(const PromptRR& m, const FrequencyPromptPair& cond,
                                     std::uint64_t seed);

Tensor restore_image(const PromptRR& m, const Tensor& input, const FrequencyPromptPair& prompts);

/// Mirror-pads so both dims hit the next multiple of `multiple` (right and
/// bottom edges only).
Tensor reflect_pad_to(const Tensor& x, int multiple);

/// Full inference: pad, condition, sample prompts, restore, crop. Runs
/// without gradient recording; pure in (model, input, seed).
Tensor infer_image(const PromptRR& m, const Tensor& input, std::uint64_t seed);

}  // namespace promptrr
