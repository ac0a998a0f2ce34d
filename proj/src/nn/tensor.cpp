#include "qfvs/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace qfvs {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), real{0}, requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
    const auto n = qfvs::numel(shape);
    return from_data(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data, bool requires_grad) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    if (qfvs::numel(shape) != data.size())
        throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(qfvs::numel(shape)) +
                         " values, got " + std::to_string(data.size()));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value) { return from_data({1}, {value}); }

std::size_t Tensor::dim(std::ptrdiff_t axis) const {
    const auto r = static_cast<std::ptrdiff_t>(rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + to_string(shape()));
    return node_->shape[static_cast<std::size_t>(axis)];
}

std::span<real> Tensor::mutable_data() {
    if (node_->backward) throw ContractError("mutable_data() on a non-leaf tensor (" + std::string(op()) + ")");
    return node_->data;
}

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
}

Tensor Tensor::detach() const { return from_data(shape(), node_->data, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<real> data, const std::vector<Tensor>& parents,
                   std::string_view op, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
    if (needs) {
        node->requires_grad = true;
        node->backward = std::move(backward);
        node->parents.reserve(parents.size());
        for (const auto& p : parents)
            if (p.defined()) node->parents.push_back(p.node());
    }
    return Tensor(std::move(node));
}

}  // namespace detail

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() needs a single-element loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; `order` ends up topologically sorted with the
    // loss last.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += real{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    // Interior gradients are scratch; only leaves keep theirs.
    for (detail::Node* node : order)
        if (node->backward) node->grad.clear();
}

}  // namespace qfvs
