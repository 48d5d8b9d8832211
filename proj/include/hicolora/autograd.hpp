#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hicolora/numkit.hpp"

namespace hicolora::ag {

/// Handle to a node on a Tape. Only meaningful for the tape that created it.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

enum class Op {
    Leaf,
    Param,
    MatMul,
    MatMulNT,
    Add,
    Sub,
    AddRow,
    Scale,
    ScalarMul,
    Relu,
    Sigmoid,
    RowSoftmax,
    LayerNorm,
    MeanPoolRows,
    CrossEntropy,
    SliceCols,
    ConcatCols,
    Sum,
};

/// Append-only record of a forward computation. Node ids are assigned in
/// creation order, so inputs always precede their consumers and the backward
/// pass is a single sweep in reverse id order.
class Tape {
public:
    Var constant(Matrix value);
    /// Registers a trainable parameter; gradients come back in registration order.
    Var param(Matrix value);

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// Adds a 1 x d row to every row of an n x d matrix.
    Var add_row(Var a, Var row);
    Var scale(Var a, double c);
    /// Multiplies `a` by the 1 x 1 node `s`.
    Var scalar_mul(Var s, Var a);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var row_softmax(Var a);
    /// Per-row standardization without affine parameters.
    Var layer_norm(Var a, double eps = 1e-5);
    Var mean_pool_rows(Var a);
    /// Mean over rows of -log softmax(logits_row)[target_row].
    Var cross_entropy(Var logits, std::span<const std::size_t> targets);
    Var cross_entropy(Var logits, std::size_t target);
    Var slice_cols(Var a, std::size_t start, std::size_t count);
    Var concat_cols(std::span<const Var> parts);
    Var sum(Var a);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    Op op(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t param_count() const noexcept { return params_.size(); }

    /// Reverse sweep from a 1 x 1 loss. Returns one gradient per registered
    /// parameter; parameters the loss does not reach get an exact zero.
    std::vector<Matrix> backward(Var loss);

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<std::size_t> inputs;
        Matrix value;
        Matrix grad;
        Matrix cache;  // op-specific saved values
        double scalar = 0.0;
        std::vector<std::size_t> ints;
        bool needs_grad = false;
    };

    Var push(Node n);
    Node& at(Var v);
    void accumulate(std::size_t id, const Matrix& g);

    std::vector<Node> nodes_;
    std::vector<std::size_t> params_;
};

struct GradReport {
    std::vector<std::string> names;
    std::vector<double> max_rel_error;  // per parameter
    double max_error = 0.0;
    std::size_t coordinates = 0;
};

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares analytic gradients against central differences
/// (f(t + eps) - f(t - eps)) / 2 eps on every coordinate. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradReport grad_check(const LossBuilder& build_loss, const std::vector<Matrix>& params, double epsilon,
                      std::vector<std::string> names = {});

}  // namespace hicolora::ag
