#pragma once

// Define-by-run reverse-mode autodiff over dense row-major tensors.
//
// A Tensor is a cheap handle onto a shared node. Ops build new nodes and, when
// gradients are enabled and some input requires them, record a backward
// closure plus references to their inputs. backward() walks that tape in
// reverse topological order and accumulates gradients additively.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfvs/real.hpp"

namespace qfvs {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Operand shapes disagree.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// A layer or op was configured with parameters that cannot produce output.
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition.
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

enum class Mode { train, eval };

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;  // empty until something flows in
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<real>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), real{0});
        return grad;
    }
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<real> data, bool requires_grad = false);
    static Tensor scalar(real value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    // Negative axes count from the back.
    std::size_t dim(std::ptrdiff_t axis) const;
    std::size_t numel() const { return node_->data.size(); }

    std::span<const real> data() const { return node_->data; }
    // For leaves only: parameters, optimizer updates, test perturbation.
    std::span<real> mutable_data();

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const real> grad() const { return node_->grad; }
    std::span<real> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    real item() const;
    std::string_view op() const { return node_->op; }
    bool is_leaf() const { return !node_->backward; }

    // Same values, no history, no gradient.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

   private:
    std::shared_ptr<detail::Node> node_;
};

// Populates grads of every tensor reachable from `loss` that requires them.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

namespace detail {

// Creates an op result. The closure receives the result node; its `grad` is
// populated and it may add into parents' grad_buffer(). Nothing is recorded
// when grads are disabled or no parent requires them.
Tensor make_result(Shape shape, std::vector<real> data, const std::vector<Tensor>& parents,
                   std::string_view op, std::function<void(Node&)> backward);

}  // namespace detail

// ---- linear algebra ------------------------------------------------------

// [..., m, k] x [..., k, n] with broadcasting over leading batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- temporal layers -----------------------------------------------------

// x[B,Cin,L], w[Cout,Cin,K], b[Cout] (may be undefined).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);
// x[B,Cin,L], w[Cin,Cout,K] -> [B,Cout,(L-1)*stride+K]. No bias, no padding.
Tensor conv1d_transpose(const Tensor& x, const Tensor& w, std::size_t stride);
// Backward routes to the first maximal index of each window.
Tensor maxpool1d(const Tensor& x, std::size_t kernel, std::size_t stride);

struct BatchNormState {
    std::vector<real> running_mean;
    std::vector<real> running_var;
    real momentum = 0.1;
    real eps = 1e-5;

    explicit BatchNormState(std::size_t channels = 0)
        : running_mean(channels, real{0}), running_var(channels, real{1}) {}
};

// x[B,C,L]; statistics per channel over batch and time.
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                   Mode mode);

// ---- element-wise --------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis);
// Binary ops need equal shapes; a one-element operand acts as a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
// Inverted dropout; identity in eval mode or when p == 0.
Tensor dropout(const Tensor& x, real p, Rng& rng, Mode mode);

// ---- shape ---------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis);
Tensor mean(const Tensor& x, std::ptrdiff_t axis);
Tensor sum(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1);
// Slice [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t begin, std::size_t end);
// Rows of a 2-D tensor, in the given order.
Tensor index_select(const Tensor& x, std::span<const std::size_t> rows);

// x[..., R, D] scaled row-wise by w[..., R].
Tensor scale_rows(const Tensor& x, const Tensor& w);
// x[..., in] + b[in] broadcast along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& b);

// ---- losses --------------------------------------------------------------

// Mean over elements of -(y log p + (1-y) log(1-p)), p clamped to [eps, 1-eps].
Tensor binary_cross_entropy(const Tensor& probs, std::span<const real> labels, real eps = 1e-7);

}  // namespace qfvs
