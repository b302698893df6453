#pragma once

// Binary PPM (P6, 8-bit) read/write. Values map linearly between [0,1] floats
// and bytes; writing clamps first, so any real-valued tensor is accepted.

#include <string>

#include "promptrr/tensor.hpp"

namespace promptrr {

/// Parses a P6 file (comments allowed in the header) into [3 x H x W].
Tensor read_ppm(const std::string& path);

/// Writes img ([3 x H x W]) with clamp-then-round quantization.
void write_ppm(const std::string& path, const Tensor& img);

}  // namespace promptrr
