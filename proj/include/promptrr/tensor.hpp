#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace promptrr {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

/// Dense float32 n-d array with shared storage. Values are immutable after
/// an op produces them; only gradient buffers accumulate.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);

    bool defined() const { return st_ != nullptr; }
    const Shape& shape() const { return st_->shape; }
    int ndim() const { return static_cast<int>(st_->shape.size()); }
    int dim(int i) const { return st_->shape[static_cast<std::size_t>(i)]; }
    int numel() const { return static_cast<int>(st_->data.size()); }

    std::span<float> data() { return st_->data; }
    std::span<const float> data() const { return st_->data; }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    void set_requires_grad(bool v) { st_->requires_grad = v; }

    bool has_grad() const { return st_ && !st_->grad.empty(); }
    /// Allocates a zero gradient buffer on first use.
    std::span<float> grad();
    std::span<const float> grad() const { return st_->grad; }
    void zero_grad();

    /// Value of a single-element tensor.
    float item() const;

    /// Same storage object (used to test aliasing / freeze contracts).
    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

    struct Storage {
        Shape shape;
        std::vector<float> data;
        bool requires_grad = false;
        std::vector<float> grad;
    };
    const std::shared_ptr<Storage>& storage() const { return st_; }

private:
    explicit Tensor(std::shared_ptr<Storage> st) : st_(std::move(st)) {}
    std::shared_ptr<Storage> st_;
};

/// Reverse-mode tape. Ops executed while a tape is active append one node
/// each (creation order); backward() replays the nodes once, in reverse.
/// One tape per thread may be active; distinct threads get distinct tapes.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    /// Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse creation
    /// order, accumulating (+=) into every reachable requires_grad tensor.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }

    static GradTape* active();
    void record(const Tensor& out, std::function<void()> backprop);

private:
    struct Node {
        Tensor out;
        std::function<void()> backprop;
    };
    std::vector<Node> nodes_;
    GradTape* prev_ = nullptr;
};

/// Temporarily stops recording (frozen sub-models, samplers run detached).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    GradTape* saved_;
};

/// True when an active tape should record an op with these inputs.
bool recording(std::initializer_list<const Tensor*> inputs);

}  // namespace promptrr
