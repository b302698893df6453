#pragma once

// Adam with bias correction and optional decoupled weight decay (set
// weight_decay > 0 to get AdamW behaviour).

#include <vector>

#include "promptrr/tensor.hpp"

namespace promptrr {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled; applied as p -= lr * wd * p
};

class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

    /// Applies one update from the gradients currently stored on the
    /// parameters. Parameters without an allocated gradient are skipped.
    void step();

    void zero_grad();

    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    long t_ = 0;
};

}  // namespace promptrr
