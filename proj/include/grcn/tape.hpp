#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "grcn/tensor.hpp"

namespace grcn {

class Tape;

// Handle of a value recorded on a gradient tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode gradient tape over dense tensors. Nodes are recorded in
// topological order (parents always precede children); backward() runs one
// reverse sweep and accumulates gradients into every node that needs them.
// Tape construction is single-threaded; heavy forward/backward inner loops
// dispatch to the kernels in grcn/kernels.hpp.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Var leaf(Tensor value, bool trainable = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Values and gradients.
    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;
    bool has_grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // Elementwise and shape ops.
    Var add(Var a, Var b);
    Var add_n(const std::vector<Var>& xs);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var leaky_relu(Var x, double slope);
    Var relu(Var x);
    Var softplus(Var x);
    Var sum(Var x);
    Var dot(Var a, Var b);

    // Dense linear algebra.
    Var matmul(Var a, Var b);
    Var linear(Var x, Var w, Var b);  // rows of x through w,b: x*w^T + b
    Var matvec(Var a, Var x);
    Var vecmat(Var p, Var a);

    // Softmax and normalization.
    Var softmax(Var logits);
    Var l2_normalize(Var x);
    Var rows_l2_normalize(Var x);

    // Indexing and assembly.
    Var row(Var a, std::size_t i);
    Var slice_rows(Var a, std::size_t begin, std::size_t count);
    Var gather_rows(Var a, std::vector<std::uint32_t> idx);
    Var gather(Var x, std::vector<std::uint32_t> idx);
    Var stack_rows(const std::vector<Var>& rows);
    Var concat(const std::vector<Var>& vecs);
    Var concat_cols(const std::vector<Var>& mats);

    // Graph-structured ops.
    Var edge_dot(Var a, Var b, std::vector<std::uint32_t> ia, std::vector<std::uint32_t> ib);
    Var segment_softmax(Var x, std::vector<std::size_t> offsets);
    Var segment_weighted_rows(Var rows, Var w, std::vector<std::uint32_t> row_idx,
                              std::vector<std::size_t> offsets);
    Var segment_mean_expand(Var x, std::vector<std::size_t> offsets);

    // Reductions across tensors.
    Var emax(const std::vector<Var>& xs);
    Var emean(const std::vector<Var>& xs);
    Var l2_norm_many(const std::vector<Var>& xs);
    Var sum_squares_many(const std::vector<Var>& xs);

    // Reverse sweep from a scalar loss. Rejected when called twice without
    // reset_gradients(). Every trainable leaf ends up with a gradient tensor
    // of its own shape (zero if unreachable from the loss).
    void backward(Var loss);
    void reset_gradients();

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        // Accumulates this node's incoming gradient into its parents.
        std::function<void(Tape&, const Tensor&, const Node&)> pull;
        bool trainable = false;
        bool needs_grad = false;
        bool grad_set = false;
        Tensor grad;
    };

    Var push(Tensor value, std::vector<int> parents,
             std::function<void(Tape&, const Tensor&, const Node&)> pull);
    const Node& node(Var v) const;
    void check_mine(Var v, const char* op) const;
    Tensor& grad_buffer(int id);
    void accumulate(int id, const Tensor& g);

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    friend struct TapeOpsAccess;
};

}  // namespace grcn
