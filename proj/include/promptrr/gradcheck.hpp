#pragma once

// Whole-model gradient audit: builds a micro model in which every block type
// appears, forms the joint training loss on one synthetic pair, and compares
// sampled analytic gradients against five-point-stencil finite differences.

#include <cstdint>
#include <iosfwd>
#include <string>

namespace promptrr {

struct GradcheckOptions {
    std::uint64_t seed = 7;
    int max_coords = 2000;
    double step = 1e-3;  // relative base step; the stencil also probes 2x this
    double tol = 1e-3;
};

struct GradcheckReport {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;
    std::string worst_param;
    bool passed() const { return checked > 0 && failed == 0; }
};

GradcheckReport run_gradcheck(const GradcheckOptions& opt, std::ostream* console = nullptr);

}  // namespace promptrr
