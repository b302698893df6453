#include "promptrr/tensor.hpp"

#include <sstream>

namespace promptrr {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

int shape_numel(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d <= 0) throw TensorError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto st = std::make_shared<Storage>();
    int n = shape_numel(shape);
    st->shape = std::move(shape);
    st->data.assign(static_cast<std::size_t>(n), 0.0f);
    st->requires_grad = requires_grad;
    return Tensor(std::move(st));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (float& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    int n = shape_numel(shape);
    if (static_cast<std::size_t>(n) != data.size())
        throw TensorError("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    auto st = std::make_shared<Storage>();
    st->shape = std::move(shape);
    st->data = std::move(data);
    st->requires_grad = requires_grad;
    return Tensor(std::move(st));
}

std::span<float> Tensor::grad() {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0f);
    return st_->grad;
}

void Tensor::zero_grad() {
    if (st_) st_->grad.clear();
}

float Tensor::item() const {
    if (!st_ || st_->data.size() != 1)
        throw TensorError("item() requires a single-element tensor, got " +
                          (st_ ? shape_str(st_->shape) : std::string("<undefined>")));
    return st_->data[0];
}

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape::GradTape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

GradTape::~GradTape() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const Tensor& out, std::function<void()> backprop) {
    nodes_.push_back(Node{out, std::move(backprop)});
}

void GradTape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw TensorError("backward() requires a scalar loss, got " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;  // constant loss: nothing reachable
    // Grads of op outputs are per-sweep scratch; only leaves accumulate
    // across backward() calls.
    for (Node& n : nodes_) {
        auto& g = n.out.storage()->grad;
        std::fill(g.begin(), g.end(), 0.0f);
    }
    auto& st = *loss.storage();
    if (st.grad.empty()) st.grad.assign(1, 0.0f);
    st.grad[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backprop();
}

NoGradScope::NoGradScope() {
    saved_ = g_active_tape;
    g_active_tape = nullptr;
}

NoGradScope::~NoGradScope() { g_active_tape = saved_; }

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    for (const Tensor* t : inputs)
        if (t && t->requires_grad()) return true;
    return false;
}

}  // namespace promptrr
