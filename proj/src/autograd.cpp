#include "hicolora/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "hicolora/error.hpp"

namespace hicolora::ag {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Argument,
            [&] { return std::string("shape mismatch in ") + op + ": " + a.shape_str() + " vs " + b.shape_str(); });
}

}  // namespace

Var Tape::push(Node n) {
    require(n.value.all_finite(), ErrorKind::Numerical, "non-finite value produced on tape");
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tape::Node& Tape::at(Var v) {
    require(v.id < nodes_.size(), ErrorKind::Argument, "variable does not belong to this tape");
    return nodes_[v.id];
}

Var Tape::constant(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::param(Matrix value) {
    Node n;
    n.op = Op::Param;
    n.value = std::move(value);
    n.needs_grad = true;
    Var v = push(std::move(n));
    params_.push_back(v.id);
    return v;
}

#define HCL_UNARY(a)   \
    Node n;            \
    n.inputs = {a.id}; \
    n.needs_grad = at(a).needs_grad

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::MatMul;
    n.value = hicolora::matmul(at(a).value, at(b).value);
    n.inputs = {a.id, b.id};
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    return push(std::move(n));
}

Var Tape::matmul_nt(Var a, Var b) {
    Node n;
    n.op = Op::MatMulNT;
    n.value = hicolora::matmul_nt(at(a).value, at(b).value);
    n.inputs = {a.id, b.id};
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    same_shape(at(a).value, at(b).value, "add");
    Node n;
    n.op = Op::Add;
    n.value = at(a).value + at(b).value;
    n.inputs = {a.id, b.id};
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    same_shape(at(a).value, at(b).value, "sub");
    Node n;
    n.op = Op::Sub;
    n.value = at(a).value - at(b).value;
    n.inputs = {a.id, b.id};
    n.needs_grad = at(a).needs_grad || at(b).needs_grad;
    return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
    const Matrix& x = at(a).value;
    const Matrix& r = at(row).value;
    require(r.rows() == 1 && r.cols() == x.cols(), ErrorKind::Argument,
            [&] { return "shape mismatch in add_row: " + x.shape_str() + " vs " + r.shape_str(); });
    Node n;
    n.op = Op::AddRow;
    n.value = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto dst = n.value.row_span(i);
        for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += r(0, j);
    }
    n.inputs = {a.id, row.id};
    n.needs_grad = at(a).needs_grad || at(row).needs_grad;
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    HCL_UNARY(a);
    n.op = Op::Scale;
    n.scalar = c;
    n.value = at(a).value * c;
    return push(std::move(n));
}

Var Tape::scalar_mul(Var s, Var a) {
    const Matrix& sv = at(s).value;
    require(sv.rows() == 1 && sv.cols() == 1, ErrorKind::Argument,
            [&] { return "scalar_mul expects a 1x1 scalar, got " + sv.shape_str(); });
    Node n;
    n.op = Op::ScalarMul;
    n.value = at(a).value * sv(0, 0);
    n.inputs = {s.id, a.id};
    n.needs_grad = at(s).needs_grad || at(a).needs_grad;
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    HCL_UNARY(a);
    n.op = Op::Relu;
    n.value = at(a).value;
    for (double& x : n.value.data()) x = x > 0.0 ? x : 0.0;
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    HCL_UNARY(a);
    n.op = Op::Sigmoid;
    n.value = at(a).value;
    for (double& x : n.value.data()) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return push(std::move(n));
}

Var Tape::row_softmax(Var a) {
    HCL_UNARY(a);
    n.op = Op::RowSoftmax;
    const Matrix& x = at(a).value;
    n.value = Matrix(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto p = hicolora::softmax(x.row_span(i));
        std::copy(p.begin(), p.end(), n.value.row_span(i).begin());
    }
    return push(std::move(n));
}

Var Tape::layer_norm(Var a, double eps) {
    HCL_UNARY(a);
    n.op = Op::LayerNorm;
    const Matrix& x = at(a).value;
    const std::size_t d = x.cols();
    n.value = Matrix(x.rows(), d);
    n.cache = Matrix(x.rows(), 1);  // 1 / sigma per row
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row_span(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        n.cache(i, 0) = inv;
        auto out = n.value.row_span(i);
        for (std::size_t j = 0; j < d; ++j) out[j] = (r[j] - mean) * inv;
    }
    return push(std::move(n));
}

Var Tape::mean_pool_rows(Var a) {
    HCL_UNARY(a);
    n.op = Op::MeanPoolRows;
    const Matrix& x = at(a).value;
    require(x.rows() > 0, ErrorKind::Argument, "mean_pool_rows of an empty matrix");
    n.value = Matrix(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) n.value(0, j) += x(i, j);
    n.value *= 1.0 / static_cast<double>(x.rows());
    return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::span<const std::size_t> targets) {
    HCL_UNARY(logits);
    n.op = Op::CrossEntropy;
    const Matrix& z = at(logits).value;
    require(targets.size() == z.rows(), ErrorKind::Argument,
            [&] { return "cross_entropy expects one target per row of " + z.shape_str(); });
    n.cache = Matrix(z.rows(), z.cols());  // softmax probabilities
    double loss = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        require(targets[i] < z.cols(), ErrorKind::Argument, "cross_entropy target out of range");
        const auto p = hicolora::softmax(z.row_span(i));
        std::copy(p.begin(), p.end(), n.cache.row_span(i).begin());
        const auto row = z.row_span(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double lse = 0.0;
        for (double v : row) lse += std::exp(v - mx);
        loss += mx + std::log(lse) - row[targets[i]];
    }
    n.ints.assign(targets.begin(), targets.end());
    n.value = Matrix(1, 1, loss / static_cast<double>(z.rows()));
    return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::size_t target) { return cross_entropy(logits, std::span(&target, 1)); }

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
    HCL_UNARY(a);
    n.op = Op::SliceCols;
    n.value = at(a).value.cols_slice(start, count);
    n.ints = {start, count};
    return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), ErrorKind::Argument, "concat_cols of nothing");
    const std::size_t rows = at(parts[0]).value.rows();
    std::size_t cols = 0;
    Node n;
    n.op = Op::ConcatCols;
    for (Var p : parts) {
        const Matrix& v = at(p).value;
        require(v.rows() == rows, ErrorKind::Argument, "concat_cols row mismatch");
        cols += v.cols();
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || at(p).needs_grad;
    }
    n.value = Matrix(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Matrix& v = at(p).value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) n.value(i, off + j) = v(i, j);
        off += v.cols();
    }
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    HCL_UNARY(a);
    n.op = Op::Sum;
    double s = 0.0;
    for (double x : at(a).value.data()) s += x;
    n.value = Matrix(1, 1, s);
    return push(std::move(n));
}

#undef HCL_UNARY

void Tape::accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.empty())
        n.grad = g;
    else
        n.grad += g;
}

std::vector<Matrix> Tape::backward(Var loss) {
    const Matrix& lv = at(loss).value;
    require(lv.rows() == 1 && lv.cols() == 1, ErrorKind::Argument,
            [&] { return "backward needs a scalar loss, got " + lv.shape_str(); });
    for (Node& n : nodes_) n.grad = Matrix();
    nodes_[loss.id].grad = Matrix(1, 1, 1.0);

    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.empty()) continue;
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
            case Op::Param:
                break;
            case Op::MatMul: {
                const Matrix& a = nodes_[n.inputs[0]].value;
                const Matrix& b = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].needs_grad) accumulate(n.inputs[0], hicolora::matmul_nt(g, b));
                if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], hicolora::matmul_tn(a, g));
                break;
            }
            case Op::MatMulNT: {
                const Matrix& a = nodes_[n.inputs[0]].value;
                const Matrix& b = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].needs_grad) accumulate(n.inputs[0], hicolora::matmul(g, b));
                if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], hicolora::matmul_tn(g, a));
                break;
            }
            case Op::Add:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], g);
                break;
            case Op::Sub:
                accumulate(n.inputs[0], g);
                if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], g * -1.0);
                break;
            case Op::AddRow: {
                accumulate(n.inputs[0], g);
                if (nodes_[n.inputs[1]].needs_grad) {
                    Matrix r(1, g.cols());
                    for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) r(0, j) += g(i, j);
                    accumulate(n.inputs[1], r);
                }
                break;
            }
            case Op::Scale:
                accumulate(n.inputs[0], g * n.scalar);
                break;
            case Op::ScalarMul: {
                const Matrix& s = nodes_[n.inputs[0]].value;
                const Matrix& a = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].needs_grad) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * a.data()[i];
                    accumulate(n.inputs[0], Matrix(1, 1, acc));
                }
                if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], g * s(0, 0));
                break;
            }
            case Op::Relu: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i)
                    if (!(x.data()[i] > 0.0)) d.data()[i] = 0.0;
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::Sigmoid: {
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double y = n.value.data()[i];
                    d.data()[i] *= y * (1.0 - y);
                }
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::RowSoftmax: {
                Matrix d(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double inner = dot(g.row_span(i), n.value.row_span(i));
                    for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = n.value(i, j) * (g(i, j) - inner);
                }
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::LayerNorm: {
                const std::size_t dcols = g.cols();
                Matrix d(g.rows(), dcols);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    double mean_g = 0.0, mean_gy = 0.0;
                    for (std::size_t j = 0; j < dcols; ++j) {
                        mean_g += g(i, j);
                        mean_gy += g(i, j) * n.value(i, j);
                    }
                    mean_g /= static_cast<double>(dcols);
                    mean_gy /= static_cast<double>(dcols);
                    const double inv = n.cache(i, 0);
                    for (std::size_t j = 0; j < dcols; ++j)
                        d(i, j) = inv * (g(i, j) - mean_g - n.value(i, j) * mean_gy);
                }
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::MeanPoolRows: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix d(x.rows(), x.cols());
                const double inv = 1.0 / static_cast<double>(x.rows());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g(0, j) * inv;
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::CrossEntropy: {
                Matrix d = n.cache;
                const double w = g(0, 0) / static_cast<double>(d.rows());
                for (std::size_t i = 0; i < d.rows(); ++i) d(i, n.ints[i]) -= 1.0;
                d *= w;
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::SliceCols: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix d(x.rows(), x.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) d(i, n.ints[0] + j) = g(i, j);
                accumulate(n.inputs[0], d);
                break;
            }
            case Op::ConcatCols: {
                std::size_t off = 0;
                for (std::size_t in : n.inputs) {
                    const std::size_t c = nodes_[in].value.cols();
                    if (nodes_[in].needs_grad) accumulate(in, g.cols_slice(off, c));
                    off += c;
                }
                break;
            }
            case Op::Sum: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                accumulate(n.inputs[0], Matrix(x.rows(), x.cols(), g(0, 0)));
                break;
            }
        }
    }

    std::vector<Matrix> grads;
    grads.reserve(params_.size());
    for (std::size_t id : params_) {
        const Node& p = nodes_[id];
        grads.push_back(p.grad.empty() ? Matrix(p.value.rows(), p.value.cols()) : p.grad);
    }
    return grads;
}

GradReport grad_check(const LossBuilder& build_loss, const std::vector<Matrix>& params, double epsilon,
                      std::vector<std::string> names) {
    require(epsilon >= 1e-6 && epsilon <= 1e-3, ErrorKind::Argument, "grad_check epsilon must lie in [1e-6, 1e-3]");
    if (names.empty())
        for (std::size_t i = 0; i < params.size(); ++i) names.push_back("param" + std::to_string(i));
    require(names.size() == params.size(), ErrorKind::Argument, "grad_check names do not match params");

    auto evaluate = [&](const std::vector<Matrix>& ps, std::vector<Matrix>* grads) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(ps.size());
        for (const Matrix& p : ps) vars.push_back(tape.param(p));
        const Var loss = build_loss(tape, vars);
        const double v = tape.value(loss)(0, 0);
        require(std::isfinite(v), ErrorKind::Numerical, "grad_check: non-finite loss");
        if (grads) *grads = tape.backward(loss);
        return v;
    };

    std::vector<Matrix> analytic;
    evaluate(params, &analytic);

    GradReport report;
    report.names = std::move(names);
    report.max_rel_error.assign(params.size(), 0.0);
    std::vector<Matrix> probe = params;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            const double orig = params[p].data()[i];
            probe[p].data()[i] = orig + epsilon;
            const double up = evaluate(probe, nullptr);
            probe[p].data()[i] = orig - epsilon;
            const double down = evaluate(probe, nullptr);
            probe[p].data()[i] = orig;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = analytic[p].data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            report.max_rel_error[p] = std::max(report.max_rel_error[p], std::abs(a - numeric) / denom);
            ++report.coordinates;
        }
        report.max_error = std::max(report.max_error, report.max_rel_error[p]);
    }
    return report;
}

}  // namespace hicolora::ag
