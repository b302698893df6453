#include "promptrr/params.hpp"

#include <cmath>

namespace promptrr {

Tensor ParamRegistry::insert(const std::string& name, Tensor t) {
    if (has(name)) throw TensorError("parameter '" + name + "' registered twice");
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamRegistry::uniform(const std::string& name, Shape shape, int fan_in, Rng& rng,
                              double gain) {
    if (fan_in <= 0) throw TensorError("parameter '" + name + "': fan_in must be positive");
    Tensor t = Tensor::zeros(std::move(shape), true);
    const double bound = gain * std::sqrt(1.0 / fan_in);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    return insert(name, t);
}

Tensor ParamRegistry::zeros(const std::string& name, Shape shape) {
    return insert(name, Tensor::zeros(std::move(shape), true));
}

Tensor ParamRegistry::ones(const std::string& name, Shape shape) {
    return insert(name, Tensor::full(std::move(shape), 1.0f, true));
}

bool ParamRegistry::has(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return true;
    return false;
}

Tensor ParamRegistry::find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw TensorError("unknown parameter '" + name + "'");
}

std::size_t ParamRegistry::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.numel());
    return n;
}

std::vector<Tensor> ParamRegistry::collect(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : entries_)
        if (n.rfind(prefix, 0) == 0) out.push_back(t);
    return out;
}

void ParamRegistry::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [n, t] : entries_)
        if (n.rfind(prefix, 0) == 0) t.set_requires_grad(trainable);
}

}  // namespace promptrr
