#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rmb {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Backward rule of a recorded op. Receives the gradient of the op output and
/// the output value, and accumulates into the gradients of the op inputs.
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<const double> out_value)>;

namespace detail {
struct TensorImpl;
}

/// Dense row-major tensor of doubles with optional reverse-mode tracking.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// model parameters are shared between a model and its optimizer. Rank-0
/// tensors (empty shape) hold a single scalar.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(impl_); }

    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const&;
    /// A temporary may own the only reference to its storage.
    std::span<const double> values() const&& = delete;
    /// Writable view of the storage. Mutating a tensor that is part of a
    /// recorded graph invalidates that graph.
    std::span<double> mutable_values();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    /// Only valid on leaves (tensors not produced by a tracked op).
    void set_requires_grad(bool flag);
    bool is_leaf() const;

    bool has_grad() const;
    /// Accumulated gradient; empty span when no gradient reached this tensor.
    std::span<const double> grad() const;
    /// Zero-initialised on first use. Backward rules accumulate through this.
    std::span<double> grad_buffer() const;
    void zero_grad();
    /// Keep the gradient of a non-leaf tensor after backward().
    void retain_grad();

    /// New leaf holding a copy of the values, detached from any graph.
    Tensor detach() const;

    /// Reverse-mode sweep from a scalar. Frees the recorded graph afterwards.
    void backward() const;

    bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& impl() const;

    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Creates the result of an op. When grad mode is enabled and any input
/// requires a gradient, the result is linked into the graph with `fn`.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn fn);

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace rmb
