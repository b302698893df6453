#pragma once

// Checkpoint container: "PRRK1" magic, a small textual key-value header, then
// every registry tensor in registration order as raw little-endian float32.

#include <cstdint>
#include <string>

#include "promptrr/params.hpp"

namespace promptrr {

struct CheckpointMeta {
    std::string preset;       // "desk" or "paper"
    std::string stage;        // "pretrain", "diffusion", "joint"
    long iteration = 0;
    std::uint64_t seed = 0;
    std::string config_hash;  // hash of the canonical config text
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamRegistry& reg);

/// Loads tensor values in place into `reg`. The file must contain exactly the
/// registry's tensors, same names, same order, same shapes.
CheckpointMeta load_checkpoint(const std::string& path, ParamRegistry& reg);

/// Header only; cheap preset/stage inspection without a model.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// FNV-1a over a canonical text representation.
std::string text_hash(const std::string& text);

}  // namespace promptrr
