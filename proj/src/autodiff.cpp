#include "optiview/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace optiview::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeMismatch(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

}  // namespace

int Tape::check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw ShapeMismatch("tape: node id out of range");
    return id;
}

int Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, int)> back) {
    nodes_.push_back({std::move(value), Matrix(), requires_grad, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

const Matrix& Tape::grad(int id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.size() == 0) {
        static thread_local Matrix zero;
        zero = Matrix::Zero(n.value.rows(), n.value.cols());
        return zero;
    }
    return n.grad;
}

int Tape::leaf(const Matrix& value) { return push(value, true, nullptr); }

int Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    const long ak = trans_a ? A.rows() : A.cols();
    const long bk = trans_b ? B.cols() : B.rows();
    if (ak != bk) throw ShapeMismatch("matmul: inner dimensions disagree");
    Matrix out;
    if (!trans_a && !trans_b) out = A * B;
    else if (trans_a && !trans_b) out = A.transpose() * B;
    else if (!trans_a && trans_b) out = A * B.transpose();
    else out = A.transpose() * B.transpose();
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, trans_a, trans_b](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& A = t.value(a);
        const Matrix& B = t.value(b);
        if (t.requires_grad(a)) {
            if (!trans_a && !trans_b) t.accumulate(a, G * B.transpose());
            else if (trans_a && !trans_b) t.accumulate(a, B * G.transpose());
            else if (!trans_a && trans_b) t.accumulate(a, G * B);
            else t.accumulate(a, B.transpose() * G.transpose());
        }
        if (t.requires_grad(b)) {
            if (!trans_a && !trans_b) t.accumulate(b, A.transpose() * G);
            else if (trans_a && !trans_b) t.accumulate(b, A * G);
            else if (!trans_a && trans_b) t.accumulate(b, G.transpose() * A);
            else t.accumulate(b, G.transpose() * A.transpose());
        }
    });
}

int Tape::add(int a, int b) {
    require_same_shape(value(a), value(b), "add");
    Matrix out = value(a) + value(b);
    return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        t.accumulate(a, G);
        t.accumulate(b, G);
    });
}

int Tape::sub(int a, int b) {
    require_same_shape(value(a), value(b), "sub");
    Matrix out = value(a) - value(b);
    return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        t.accumulate(a, G);
        t.accumulate(b, -G);
    });
}

int Tape::add_row_vector(int x, int bias) {
    const Matrix& X = value(x);
    const Matrix& B = value(bias);
    if (B.rows() != 1 || B.cols() != X.cols())
        throw ShapeMismatch("add_row_vector: bias must be 1xC");
    Matrix out = X.rowwise() + B.row(0);
    return push(std::move(out), requires_grad(x) || requires_grad(bias),
                [x, bias](Tape& t, int self) {
                    const Matrix& G = t.nodes_[self].grad;
                    t.accumulate(x, G);
                    t.accumulate(bias, G.colwise().sum());
                });
}

int Tape::add_col_vector(int x, int bias) {
    const Matrix& X = value(x);
    const Matrix& B = value(bias);
    if (B.cols() != 1 || B.rows() != X.rows())
        throw ShapeMismatch("add_col_vector: bias must be Rx1");
    Matrix out = X.colwise() + B.col(0);
    return push(std::move(out), requires_grad(x) || requires_grad(bias),
                [x, bias](Tape& t, int self) {
                    const Matrix& G = t.nodes_[self].grad;
                    t.accumulate(x, G);
                    t.accumulate(bias, G.rowwise().sum());
                });
}

int Tape::scale(int x, double c) {
    Matrix out = value(x) * c;
    return push(std::move(out), requires_grad(x), [x, c](Tape& t, int self) {
        t.accumulate(x, t.nodes_[self].grad * c);
    });
}

int Tape::relu(int x) {
    Matrix out = value(x).cwiseMax(0.0);
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& X = t.value(x);
        t.accumulate(x, (X.array() > 0.0).select(G, Matrix::Zero(G.rows(), G.cols())));
    });
}

int Tape::gelu(int x) {
    // tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))
    static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr double kA = 0.044715;
    const Matrix& X = value(x);
    Matrix inner = (kC * (X.array() + kA * X.array().cube())).matrix();
    Matrix out = (0.5 * X.array() * (1.0 + inner.array().tanh())).matrix();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const auto X = t.value(x).array();
        const auto u = kC * (X + kA * X.cube());
        const auto th = u.tanh();
        const auto d = 0.5 * (1.0 + th) + 0.5 * X * (1.0 - th.square()) * kC * (1.0 + 3.0 * kA * X.square());
        t.accumulate(x, (G.array() * d).matrix());
    });
}

int Tape::layer_norm_rows(int x, int gain, int bias, double eps) {
    const Matrix& X = value(x);
    const Matrix& Gm = value(gain);
    const Matrix& Bm = value(bias);
    if (Gm.rows() != 1 || Gm.cols() != X.cols() || Bm.rows() != 1 || Bm.cols() != X.cols())
        throw ShapeMismatch("layer_norm_rows: gain/bias must be 1xC");
    const long R = X.rows(), C = X.cols();
    Matrix xhat(R, C);
    Eigen::VectorXd inv_sigma(R);
    for (long r = 0; r < R; ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        inv_sigma(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = ((X.row(r).array() - mu) * inv_sigma(r)).matrix();
    }
    Matrix out = xhat * Gm.row(0).asDiagonal();
    out.rowwise() += Bm.row(0);
    return push(std::move(out), requires_grad(x) || requires_grad(gain) || requires_grad(bias),
                [x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                    Tape& t, int self) {
                    const Matrix& G = t.nodes_[self].grad;
                    const Matrix& Gn = t.value(gain);
                    const long R = G.rows(), C = G.cols();
                    t.accumulate(gain, (G.array() * xhat.array()).colwise().sum().matrix());
                    t.accumulate(bias, G.colwise().sum());
                    if (!t.requires_grad(x)) return;
                    Matrix dx(R, C);
                    for (long r = 0; r < R; ++r) {
                        const Eigen::RowVectorXd dxh =
                            (G.row(r).array() * Gn.row(0).array()).matrix();
                        const double m1 = dxh.mean();
                        const double m2 = (dxh.array() * xhat.row(r).array()).mean();
                        dx.row(r) = inv_sigma(r) *
                                    (dxh.array() - m1 - xhat.row(r).array() * m2).matrix();
                    }
                    t.accumulate(x, dx);
                });
}

int Tape::softmax_rows(int x) {
    const Matrix& X = value(x);
    Matrix out(X.rows(), X.cols());
    for (long r = 0; r < X.rows(); ++r) {
        const double mx = X.row(r).maxCoeff();
        Eigen::RowVectorXd e = (X.row(r).array() - mx).exp().matrix();
        out.row(r) = e / e.sum();
    }
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& Y = t.nodes_[self].value;
        Matrix dx(G.rows(), G.cols());
        for (long r = 0; r < G.rows(); ++r) {
            const double s = (G.row(r).array() * Y.row(r).array()).sum();
            dx.row(r) = (Y.row(r).array() * (G.row(r).array() - s)).matrix();
        }
        t.accumulate(x, dx);
    });
}

int Tape::transpose(int x) {
    Matrix out = value(x).transpose();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        t.accumulate(x, t.nodes_[self].grad.transpose());
    });
}

int Tape::concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw EmptyInput("concat_rows: no parts");
    long rows = 0;
    const long cols = value(parts[0]).cols();
    bool rg = false;
    for (int p : parts) {
        if (value(p).cols() != cols) throw ShapeMismatch("concat_rows: column counts differ");
        rows += value(p).rows();
        rg = rg || requires_grad(p);
    }
    Matrix out(rows, cols);
    long at = 0;
    for (int p : parts) {
        out.middleRows(at, value(p).rows()) = value(p);
        at += value(p).rows();
    }
    return push(std::move(out), rg, [parts](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        long at = 0;
        for (int p : parts) {
            const long n = t.value(p).rows();
            t.accumulate(p, G.middleRows(at, n));
            at += n;
        }
    });
}

int Tape::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw EmptyInput("concat_cols: no parts");
    long cols = 0;
    const long rows = value(parts[0]).rows();
    bool rg = false;
    for (int p : parts) {
        if (value(p).rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
        cols += value(p).cols();
        rg = rg || requires_grad(p);
    }
    Matrix out(rows, cols);
    long at = 0;
    for (int p : parts) {
        out.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    return push(std::move(out), rg, [parts](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        long at = 0;
        for (int p : parts) {
            const long n = t.value(p).cols();
            t.accumulate(p, G.middleCols(at, n));
            at += n;
        }
    });
}

int Tape::slice_rows(int x, int first, int count) {
    const Matrix& X = value(x);
    if (first < 0 || count < 0 || first + count > X.rows())
        throw ShapeMismatch("slice_rows: range out of bounds");
    Matrix out = X.middleRows(first, count);
    return push(std::move(out), requires_grad(x), [x, first, count](Tape& t, int self) {
        const Matrix& X = t.value(x);
        Matrix g = Matrix::Zero(X.rows(), X.cols());
        g.middleRows(first, count) = t.nodes_[self].grad;
        t.accumulate(x, g);
    });
}

int Tape::slice_cols(int x, int first, int count) {
    const Matrix& X = value(x);
    if (first < 0 || count < 0 || first + count > X.cols())
        throw ShapeMismatch("slice_cols: range out of bounds");
    Matrix out = X.middleCols(first, count);
    return push(std::move(out), requires_grad(x), [x, first, count](Tape& t, int self) {
        const Matrix& X = t.value(x);
        Matrix g = Matrix::Zero(X.rows(), X.cols());
        g.middleCols(first, count) = t.nodes_[self].grad;
        t.accumulate(x, g);
    });
}

int Tape::gather_rows(int x, std::vector<int> index) {
    const Matrix& X = value(x);
    Matrix out(static_cast<long>(index.size()), X.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= X.rows())
            throw ShapeMismatch("gather_rows: index out of range");
        out.row(static_cast<long>(i)) = X.row(index[i]);
    }
    return push(std::move(out), requires_grad(x),
                [x, index = std::move(index)](Tape& t, int self) {
                    const Matrix& G = t.nodes_[self].grad;
                    const Matrix& X = t.value(x);
                    Matrix g = Matrix::Zero(X.rows(), X.cols());
                    for (std::size_t i = 0; i < index.size(); ++i)
                        g.row(index[i]) += G.row(static_cast<long>(i));
                    t.accumulate(x, g);
                });
}

int Tape::gather_cols_zero(int x, std::vector<int> index) {
    const Matrix& X = value(x);
    Matrix out = Matrix::Zero(X.rows(), static_cast<long>(index.size()));
    for (std::size_t j = 0; j < index.size(); ++j) {
        if (index[j] >= X.cols()) throw ShapeMismatch("gather_cols_zero: index out of range");
        if (index[j] >= 0) out.col(static_cast<long>(j)) = X.col(index[j]);
    }
    return push(std::move(out), requires_grad(x),
                [x, index = std::move(index)](Tape& t, int self) {
                    const Matrix& G = t.nodes_[self].grad;
                    const Matrix& X = t.value(x);
                    Matrix g = Matrix::Zero(X.rows(), X.cols());
                    for (std::size_t j = 0; j < index.size(); ++j)
                        if (index[j] >= 0) g.col(index[j]) += G.col(static_cast<long>(j));
                    t.accumulate(x, g);
                });
}

int Tape::max_over_rows(int x) {
    const Matrix& X = value(x);
    if (X.rows() == 0) throw EmptyInput("max_over_rows: no rows");
    Matrix out(1, X.cols());
    std::vector<int> arg(static_cast<std::size_t>(X.cols()));
    for (long c = 0; c < X.cols(); ++c) {
        long best = 0;
        for (long r = 1; r < X.rows(); ++r)
            if (X(r, c) > X(best, c)) best = r;  // first max wins ties
        arg[static_cast<std::size_t>(c)] = static_cast<int>(best);
        out(0, c) = X(best, c);
    }
    return push(std::move(out), requires_grad(x), [x, arg = std::move(arg)](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& X = t.value(x);
        Matrix g = Matrix::Zero(X.rows(), X.cols());
        for (long c = 0; c < X.cols(); ++c) g(arg[static_cast<std::size_t>(c)], c) = G(0, c);
        t.accumulate(x, g);
    });
}

int Tape::mean_over_rows(int x) {
    const Matrix& X = value(x);
    if (X.rows() == 0) throw EmptyInput("mean_over_rows: no rows");
    Matrix out = X.colwise().mean();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& X = t.value(x);
        t.accumulate(x, G.replicate(X.rows(), 1) / static_cast<double>(X.rows()));
    });
}

int Tape::sum_squares(int x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).squaredNorm();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        t.accumulate(x, 2.0 * t.nodes_[self].grad(0, 0) * t.value(x));
    });
}

int Tape::sqrt_all(int x) {
    Matrix out = value(x).array().sqrt().matrix();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& Y = t.nodes_[self].value;
        t.accumulate(x, (G.array() * 0.5 / Y.array()).matrix());
    });
}

int Tape::abs_all(int x) {
    Matrix out = value(x).array().abs().matrix();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& X = t.value(x);
        t.accumulate(x, (G.array() * X.array().sign()).matrix());
    });
}

int Tape::clamp_all(int x, double lo, double hi) {
    Matrix out = value(x).cwiseMax(lo).cwiseMin(hi);
    return push(std::move(out), requires_grad(x), [x, lo, hi](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const auto X = t.value(x).array();
        const auto inside = (X > lo && X < hi).cast<double>();
        t.accumulate(x, (G.array() * inside).matrix());
    });
}

int Tape::acos_all(int x) {
    Matrix out = value(x).array().acos().matrix();
    return push(std::move(out), requires_grad(x), [x](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const auto X = t.value(x).array();
        t.accumulate(x, (-G.array() / (1.0 - X.square()).sqrt()).matrix());
    });
}

int Tape::div_by_scalar(int x, int s) {
    const Matrix& S = value(s);
    if (S.rows() != 1 || S.cols() != 1) throw ShapeMismatch("div_by_scalar: divisor must be 1x1");
    Matrix out = value(x) / S(0, 0);
    return push(std::move(out), requires_grad(x) || requires_grad(s), [x, s](Tape& t, int self) {
        const Matrix& G = t.nodes_[self].grad;
        const Matrix& Y = t.nodes_[self].value;
        const double sv = t.value(s)(0, 0);
        t.accumulate(x, G / sv);
        Matrix ds(1, 1);
        ds(0, 0) = -(G.array() * Y.array()).sum() / sv;
        t.accumulate(s, ds);
    });
}

void Tape::backward(int root) {
    check(root);
    if (backward_done_) throw Error("tape: backward already ran");
    backward_done_ = true;
    const Matrix& rv = nodes_[root].value;
    if (rv.rows() != 1 || rv.cols() != 1) throw ShapeMismatch("backward: root must be 1x1");
    if (!nodes_[root].requires_grad) return;  // nothing differentiable upstream
    nodes_[root].grad = Matrix::Ones(1, 1);
    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
        n.back(*this, id);
    }
}

}  // namespace optiview::nn
