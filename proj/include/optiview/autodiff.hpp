#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <vector>

#include "optiview/errors.hpp"

namespace optiview::nn {

using Matrix = Eigen::MatrixXd;

// Reverse-mode automatic differentiation over dense matrices. A Tape is
// built per forward pass: every operation appends a node holding its value
// and a closure that routes the incoming gradient to its parents. Nodes are
// addressed by integer id; ids are only valid for the tape that issued
// them. Gradients flow to leaf() nodes; constant() nodes absorb nothing.
//
// backward() walks the nodes in reverse creation order, which is a valid
// topological order because operations can only reference earlier ids.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable input (network parameter). The value is copied.
    int leaf(const Matrix& value);
    // Non-differentiable input (data, fixed embeddings, pooling matrices).
    int constant(Matrix value);

    // C = op(A)·op(B) with optional transposes.
    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);
    int add(int a, int b);
    int sub(int a, int b);
    // bias is 1×C, added to every row of x.
    int add_row_vector(int x, int bias);
    // bias is R×1, added to every column of x.
    int add_col_vector(int x, int bias);
    int scale(int x, double c);
    int relu(int x);
    int gelu(int x);
    // Per-row normalization with learned gain/bias (both 1×C).
    int layer_norm_rows(int x, int gain, int bias, double eps = 1e-5);
    int softmax_rows(int x);
    int transpose(int x);
    int concat_rows(const std::vector<int>& parts);
    int concat_cols(const std::vector<int>& parts);
    int slice_rows(int x, int first, int count);
    int slice_cols(int x, int first, int count);
    // result row i = x row index[i]; indices must be in range.
    int gather_rows(int x, std::vector<int> index);
    // result col j = x col index[j], or a zero column where index[j] < 0;
    // the building block for im2col-style convolution lowering.
    int gather_cols_zero(int x, std::vector<int> index);
    // Column-wise max over rows -> 1×C. Gradient routes to the first
    // maximizing row of each column.
    int max_over_rows(int x);
    int mean_over_rows(int x);
    // Sum of squared entries -> 1×1.
    int sum_squares(int x);
    // Elementwise maps. clamp's gradient is zero outside (lo, hi); sqrt
    // and acos require their usual open domains, enforced by callers.
    int sqrt_all(int x);
    int abs_all(int x);
    int clamp_all(int x, double lo, double hi);
    int acos_all(int x);
    // y = x / s where s is a 1×1 node.
    int div_by_scalar(int x, int s);

    const Matrix& value(int id) const { return nodes_[check(id)].value; }
    // Zero matrix if the node never received gradient.
    const Matrix& grad(int id) const;
    bool requires_grad(int id) const { return nodes_[check(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and accumulates into every reachable
    // differentiable node. root must be 1×1. May be called once per tape.
    void backward(int root);

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until touched by backward
        bool requires_grad = false;
        std::function<void(Tape&, int)> back;  // (tape, own id)
    };

    int check(int id) const;
    int push(Matrix value, bool requires_grad, std::function<void(Tape&, int)> back);
    // Accumulates g into nodes_[id].grad if that node is differentiable.
    void accumulate(int id, const Matrix& g);

    // deque keeps references returned by value() stable while new nodes
    // are pushed, so callers may hold them across op calls.
    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace optiview::nn
