#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace kcm {

class Tape;

namespace detail {

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized iff the node participates in a tape
    bool requires_grad = false;
    bool is_leaf = false;
    Tape* tape = nullptr;

    std::size_t size() const { return values.size(); }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copies are shallow handles to a
// shared node. Tensors created outside a tape are plain values; leaves
// created through Tape::leaf carry a gradient buffer that backward() fills.
class Tensor {
public:
    Tensor() = default;

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only

    const std::vector<double>& values() const;
    // Mutable access for construction-time fills; never mutate a tensor that
    // already participates in a tape.
    std::vector<double>& values_mut();

    bool requires_grad() const;
    const std::vector<double>& grad() const;  // throws unless participating
    void zero_grad();

    double item() const;  // single-element tensors
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;

    std::string shape_str() const;

    // internal
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Ordered record of executed primitive ops. Every op's inputs precede it, so
// a single reverse sweep propagates adjoints correctly. Leaf gradients
// accumulate across backward() calls; intermediate adjoints are reset on
// every call.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a copy of `value` as a differentiable leaf on this tape.
    Tensor leaf(const Tensor& value);

    // Populates grad on every participating leaf with d(loss)/d(leaf).
    void backward(const Tensor& loss);

    // Zeroes the gradient buffers of all leaves.
    void zero_grad();

    std::size_t op_count() const { return records_.size(); }
    std::size_t leaf_count() const { return leaves_.size(); }

    // op plumbing: `pull` reads output->grad and accumulates into inputs.
    void register_op(std::shared_ptr<detail::TensorNode> output,
                     std::function<void()> pull);

private:
    struct Record {
        std::shared_ptr<detail::TensorNode> output;
        std::function<void()> pull;
    };
    std::vector<Record> records_;
    std::vector<std::shared_ptr<detail::TensorNode>> leaves_;
};

// --- primitive ops ---------------------------------------------------------
// Each op computes plain values and, when any input participates in a tape,
// registers a reverse-mode record on that tape.

Tensor matmul(const Tensor& a, const Tensor& b);
// out = x * W^T + b with x: m-by-k, W: n-by-k, b: n. Fused affine layer.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or matrix + row vector
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// x: m-by-d minus a length-d row vector broadcast over rows.
Tensor sub_rowvec(const Tensor& x, const Tensor& u);
Tensor flatten(const Tensor& a);  // m-by-1 -> length-m vector (any shape -> rank 1)
// Elementwise log(1 + exp(-z)), numerically stable.
Tensor logistic_loss(const Tensor& z);
// Elementwise max(0, 1 - z); subgradient at the hinge point is 0.
Tensor hinge_loss(const Tensor& z);
// Elementwise min(a, hi); derivative 0 where clipped.
Tensor clamp_max(const Tensor& a, double hi);
// Per-row cross entropy -sum_c t_c log softmax(logits)_c. logits, targets:
// m-by-C; returns length-m vector.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& targets);

}  // namespace kcm
