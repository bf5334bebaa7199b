#pragma once

// Dense row-major float64 tensor with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle to shared storage. Ops build a DAG through the
// `Node` attached to their outputs; `backward()` walks it in reverse
// topological order. Leaves with requires_grad accumulate into `grad()` until
// `zero_grad()`.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cass {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Receives the output whose grad is complete; pushes into inputs' grads.
    std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> node;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim() const { return impl_->shape.size(); }
    std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const double> data() const { return impl_->data; }
    // Mutable access for initialisation and optimizer steps only.
    std::span<double> mutable_data() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    // Seeds d(self)/d(self) = 1; self must hold exactly one element.
    void backward() const;

    // Same values, no history, no grad.
    Tensor detach() const;
    // Deep copy of values (and requires_grad flag), no history.
    Tensor clone() const;

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

bool grad_enabled();

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

}  // namespace cass
