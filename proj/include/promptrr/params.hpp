#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptrr/rng.hpp"
#include "promptrr/tensor.hpp"

namespace promptrr {

/// Ordered, named collection of learnable tensors. Creation order is the
/// serialization order, so checkpoints are stable across runs as long as the
/// model is built the same way.
class ParamRegistry {
public:
    /// Uniform init in +-gain*sqrt(1/fan_in); requires_grad on.
    Tensor uniform(const std::string& name, Shape shape, int fan_in, Rng& rng, double gain = 1.0);
    Tensor zeros(const std::string& name, Shape shape);
    Tensor ones(const std::string& name, Shape shape);

    bool has(const std::string& name) const;
    /// Throws TensorError when absent.
    Tensor find(const std::string& name) const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t total_elements() const;

    /// All params whose name starts with `prefix` ("" selects everything).
    std::vector<Tensor> collect(const std::string& prefix) const;
    /// Toggles requires_grad on a prefix (freeze contracts).
    void set_trainable(const std::string& prefix, bool trainable);

private:
    Tensor insert(const std::string& name, Tensor t);
    std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace promptrr
