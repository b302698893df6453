#include "promptrr/optim.hpp"

#include <cmath>

namespace promptrr {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.defined()) throw TensorError("Adam: undefined parameter");
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.f);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        auto pd = p.data();
        auto gd = p.grad();
        std::vector<float>& m = m_[i];
        std::vector<float>& v = v_[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double g = gd[j];
            const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            double upd = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (cfg_.weight_decay != 0.0) upd += cfg_.lr * cfg_.weight_decay * pd[j];
            pd[j] = static_cast<float>(pd[j] - upd);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace promptrr
