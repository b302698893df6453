#pragma once

// Run configuration: presets, a plain key = value config-file format, and a
// canonical text form used both for hashing and for documenting the keys.

#include <cstdint>
#include <string>

#include "promptrr/diffusion.hpp"
#include "promptrr/promptformer.hpp"

namespace promptrr {

struct TrainConfig {
    std::string preset = "desk";  // desk | paper

    int iters_pretrain = 500;
    int iters_diffusion = 2000;
    int iters_joint = 1000;
    int batch_size = 2;
    int patch_size = 64;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;  // pretrain stage only
    std::uint64_t seed = 7;
    std::string data_dir = "data";
    std::string out_dir = "out";
    int log_every = 50;

    PromptFormerConfig model;
    int fpe_res_blocks = 2;
    bool fpe_pre_gt_only = false;  // encode GT alone instead of concat(GT, input)

    int timesteps = 4;
    double beta_start = 0.1;
    double beta_end = 0.99;
    SamplerKind sampler = SamplerKind::algorithm2;

    bool detach_prompts = false;       // joint stage: block grads through the sampler
    bool reinit_promptformer = false;  // joint stage: drop stage-1 trunk weights
};

/// "desk" (default, minutes on a CPU) or "paper" (full-scale layout).
TrainConfig preset_config(const std::string& preset);

/// Applies `key = value` lines from `path` on top of `base`. A `preset` key
/// re-bases onto that preset first; `#` starts a comment. Unknown keys throw.
TrainConfig load_config(const std::string& path, TrainConfig base = {});

/// Applies a single key/value pair (shared by the file loader and tests).
void apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every key in a fixed order; parsing this text reproduces the config.
std::string canonical_config(const TrainConfig& cfg);

/// Throws on out-of-range values (sizes, rates, schedule bounds).
void validate(const TrainConfig& cfg);

}  // namespace promptrr
