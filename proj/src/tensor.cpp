#include "resmamba/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace rmb {

namespace detail {

struct Node {
    std::vector<Tensor> inputs;
    BackwardFn backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    bool retain_grad = false;
    std::unique_ptr<Node> node;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape)
{
    for (auto extent : shape) {
        if (extent == 0) {
            throw std::invalid_argument("tensor extents must be positive, got " + shape_to_string(shape));
        }
    }
}

}  // namespace

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_to_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>())
{
    check_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("tensor of shape " + shape_to_string(shape) + " needs " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad)
{
    check_shape(shape);
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad)
{
    return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

detail::TensorImpl& Tensor::impl() const
{
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::size(std::size_t axis) const
{
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().values.size(); }

std::span<const double> Tensor::values() const& { return impl().values; }

std::span<double> Tensor::mutable_values() { return impl().values; }

double Tensor::item() const
{
    if (numel() != 1) {
        throw std::invalid_argument("item() on a tensor of shape " + shape_to_string(shape()));
    }
    return impl().values[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const
{
    const auto& s = shape();
    if (index.size() != s.size()) throw std::invalid_argument("index rank does not match tensor rank");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw std::out_of_range("tensor index out of range");
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl().values[flat];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool flag)
{
    if (!is_leaf()) throw std::logic_error("requires_grad can only be changed on leaf tensors");
    impl().requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl().node == nullptr; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::grad_buffer() const
{
    auto& i = impl();
    if (i.grad.empty()) i.grad.assign(i.values.size(), 0.0);
    return i.grad;
}

void Tensor::zero_grad() { impl().grad.clear(); }

void Tensor::retain_grad() { impl().retain_grad = true; }

Tensor Tensor::detach() const { return Tensor(shape(), impl().values, false); }

void Tensor::backward() const
{
    auto& root = impl();
    if (root.values.size() != 1) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_to_string(root.shape));
    }
    if (!root.requires_grad) {
        throw std::logic_error("backward() on a tensor that does not require grad");
    }

    // Post-order DFS gives a topological order; strong references keep
    // intermediates alive while their producing nodes are released.
    std::vector<std::shared_ptr<detail::TensorImpl>> order;
    std::unordered_set<const detail::TensorImpl*> visited;
    std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack;
    stack.emplace_back(impl_, 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [current, next_input] = stack.back();
        const auto* node = current->node.get();
        if (node && next_input < node->inputs.size()) {
            const auto& child = node->inputs[next_input++].impl_;
            if (child->node && visited.insert(child.get()).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(current);
        stack.pop_back();
    }

    if (root.grad.empty()) root.grad.assign(1, 0.0);
    root.grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& current = **it;
        if (!current.node) continue;
        if (!current.grad.empty()) {
            current.node->backward(current.grad, current.values);
        }
        current.node.reset();
        if (!current.retain_grad) {
            current.grad.clear();
            current.grad.shrink_to_fit();
        }
    }
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn fn)
{
    Tensor out(std::move(shape), std::move(values), false);
    if (!g_grad_enabled) return out;

    std::vector<Tensor> tracked;
    for (auto& input : inputs) {
        if (input.defined() && input.requires_grad()) tracked.push_back(std::move(input));
    }
    if (tracked.empty()) return out;

    out.impl_->requires_grad = true;
    out.impl_->node = std::make_unique<detail::Node>(detail::Node{std::move(tracked), std::move(fn)});
    return out;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace rmb
