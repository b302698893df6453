#pragma once

// The three training stages, checkpoint plumbing between them, and file-level
// inference. Every random draw comes from streams derived from cfg.seed, so a
// whole pipeline run is reproducible.

#include <iosfwd>
#include <string>
#include <vector>

#include "promptrr/checkpoint.hpp"
#include "promptrr/model.hpp"
#include "promptrr/synth.hpp"

namespace promptrr {

struct TrainSet {
    std::vector<LoadedPair> pairs;
};

/// Loads every pair under `dir`; throws when none are found.
TrainSet load_train_set(const std::string& dir);

struct StageResult {
    std::string stage;
    std::vector<double> total_history;  // one entry per step
    double initial_loss = 0.0;          // mean of the first up-to-10 steps
    double final_loss = 0.0;            // mean of the last up-to-10 steps
    std::string checkpoint_path;
};

/// Restoration warm-up: prompts from FPE_pre(GT, input), mean-abs loss,
/// decoupled weight decay. Trains fpe_pre + pf.
StageResult stage_pretrain(PromptRR& m, const TrainSet& data, std::ostream* console = nullptr);

/// Denoiser training on fixed prompt targets; FPE_pre frozen. Trains
/// den_lf + den_hf + fpe_con.
StageResult stage_diffusion(PromptRR& m, const TrainSet& data, std::ostream* console = nullptr);

/// End-to-end: prompts sampled from the reverse chains (gradients flow
/// through them unless cfg.detach_prompts), restoration and diffusion losses
/// combined. Trains den_lf + den_hf + fpe_con + pf.
StageResult stage_joint(PromptRR& m, const TrainSet& data, std::ostream* console = nullptr);

std::string stage_checkpoint_path(const TrainConfig& cfg, const std::string& stage);

/// Loads a checkpoint into the model; throws on preset mismatch.
CheckpointMeta load_stage_checkpoint(PromptRR& m, const std::string& path);

/// Reads input_path, restores with the model, writes out_path. When gt_path
/// is non-empty, also computes PSNR/SSIM against it.
struct InferResult {
    double psnr_in = 0.0, psnr_out = 0.0;  // vs GT; only set when GT given
    double ssim_out = 0.0;
    bool has_metrics = false;
};
InferResult infer_file(const PromptRR& m, const std::string& input_path,
                       const std::string& out_path, std::uint64_t seed,
                       const std::string& gt_path = "");

}  // namespace promptrr
