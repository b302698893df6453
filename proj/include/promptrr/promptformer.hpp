#pragma once

// Restoration backbone: a prompt-guided feature extractor, a four-stage
// U-shaped trunk of prompted transformer blocks, and a prompt-guided
// reconstruction head with a global input residual. The output projection is
// zero-initialized, so a fresh model is the identity map.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "promptrr/blocks.hpp"
#include "promptrr/fpe.hpp"
#include "promptrr/params.hpp"
#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

/// Which prompt reaches which injection site. The default sends the
/// low-frequency prompt to the attention half and the high-frequency prompt
/// to the feed-forward half; the alternative concatenates both prompts and
/// feeds the pair everywhere.
enum class PromptRouting { lf_msa_hf_ffn, both_everywhere };

struct PromptFormerConfig {
    int base_channels = 16;
    std::array<int, 4> stage_blocks{1, 2, 2, 2};
    std::array<int, 4> stage_heads{1, 2, 2, 4};
    int n_p = 4;
    int d_p = 16;
    PromptRouting routing = PromptRouting::lf_msa_hf_ffn;
    /// Trunk conditioning variants: `off` removes the prompt path entirely
    /// (extractor/reconstruction blocks included), `use_prompt_in` restricts
    /// which half of each trunk block is conditioned.
    PiimMode trunk_piim = PiimMode::full;
    PromptUse trunk_prompt_in = PromptUse::both;

    int stage_channels(int stage) const {
        return base_channels * stage_heads[static_cast<std::size_t>(stage)];
    }
    /// Trunk prompts see this many tokens (doubled when both prompts are
    /// concatenated).
    int routed_tokens() const { return routing == PromptRouting::both_everywhere ? 2 * n_p : n_p; }
};

PromptFormerConfig desk_promptformer();
PromptFormerConfig paper_promptformer();

struct ConvParams {
    Tensor w, b;
};

struct PromptFormerParams {
    Tensor extract_w, extract_b;  // 3 -> C, 3x3
    TpbParams extract_tpb;        // injection only
    std::vector<std::vector<TpbParams>> enc;  // stages 0..2
    std::vector<ConvParams> down;             // stride-2 3x3, stage i -> i+1
    std::vector<TpbParams> mid;               // stage 3
    std::vector<ConvParams> up;               // 1x1 after nearest-neighbor 2x, stage i+1 -> i
    std::vector<std::vector<TpbParams>> dec;  // stages 2..0, indexed by stage
    TpbParams recon_tpb;                      // injection only
    Tensor recon_w, recon_b;                  // C -> 3, 3x3, zero-initialized
};

PromptFormerParams make_promptformer_params(ParamRegistry& reg, const std::string& prefix,
                                            const PromptFormerConfig& cfg, Rng& rng);

/// input is [3 x H x W] with H, W divisible by 8. Output has the same shape
/// and lives on the real line; clamping to displayable range is the writer's
/// concern.
Tensor restore(const Tensor& input, const FrequencyPromptPair& prompts,
               const PromptFormerParams& params, const PromptFormerConfig& cfg);

}  // namespace promptrr
