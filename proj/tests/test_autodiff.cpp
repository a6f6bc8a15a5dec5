#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "optiview/autodiff.hpp"
#include "optiview/errors.hpp"
#include "optiview/rng.hpp"

using namespace optiview;
using nn::Matrix;
using nn::Tape;

namespace {

Matrix random_matrix(int rows, int cols, RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

// Central finite differences against the tape's analytic gradients. f
// rebuilds the whole graph from the given leaf values and returns the
// scalar output; grads come from one analytic backward pass.
void gradcheck(const std::vector<Matrix>& leaves,
               const std::function<int(Tape&, const std::vector<int>&)>& build,
               double tol = 1e-6) {
    Tape tape;
    std::vector<int> ids;
    for (const Matrix& m : leaves) ids.push_back(tape.leaf(m));
    const int root = build(tape, ids);
    REQUIRE(tape.value(root).rows() == 1);
    REQUIRE(tape.value(root).cols() == 1);
    tape.backward(root);

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const Matrix analytic = tape.grad(ids[li]);
        for (long r = 0; r < leaves[li].rows(); ++r) {
            for (long c = 0; c < leaves[li].cols(); ++c) {
                const double h = 1e-5 * std::max(1.0, std::abs(leaves[li](r, c)));
                std::vector<Matrix> plus = leaves, minus = leaves;
                plus[li](r, c) += h;
                minus[li](r, c) -= h;
                Tape tp, tm;
                std::vector<int> ip, im;
                for (const Matrix& m : plus) ip.push_back(tp.leaf(m));
                for (const Matrix& m : minus) im.push_back(tm.leaf(m));
                const double fp = tp.value(build(tp, ip))(0, 0);
                const double fm = tm.value(build(tm, im))(0, 0);
                const double numeric = (fp - fm) / (2.0 * h);
                const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic(r, c))});
                CHECK(std::abs(numeric - analytic(r, c)) / denom < tol);
            }
        }
    }
}

// Reduce any node to a scalar through fixed random projections so every
// entry influences the output with a generic (non-symmetric) weight.
int project(Tape& t, int x, std::uint64_t seed) {
    RngStream rng(seed);
    // Copy the dims up front: pushing nodes reallocates the tape, so a
    // reference obtained from value() must not be held across ops.
    const int rows = static_cast<int>(t.value(x).rows());
    const int cols = static_cast<int>(t.value(x).cols());
    const int left = t.constant(random_matrix(1, rows, rng));
    const int right = t.constant(random_matrix(cols, 1, rng));
    return t.matmul(t.matmul(left, x), right);
}

}  // namespace

TEST_CASE("forward values match Eigen for the linear ops") {
    RngStream rng(1);
    const Matrix A = random_matrix(3, 4, rng);
    const Matrix B = random_matrix(4, 2, rng);
    Tape t;
    const int a = t.leaf(A), b = t.leaf(B);
    CHECK((t.value(t.matmul(a, b)) - A * B).norm() == 0.0);
    CHECK((t.value(t.matmul(a, a, true, false)) - A.transpose() * A).norm() == 0.0);
    CHECK((t.value(t.matmul(a, a, false, true)) - A * A.transpose()).norm() == 0.0);
    CHECK((t.value(t.matmul(b, a, true, true)) - B.transpose() * A.transpose()).norm() == 0.0);
    CHECK((t.value(t.transpose(a)) - A.transpose()).norm() == 0.0);
    CHECK(t.value(t.sum_squares(a))(0, 0) == A.squaredNorm());
    CHECK_THROWS_AS(t.matmul(a, a), ShapeMismatch);
}

TEST_CASE("matmul gradients in all four transpose modes") {
    RngStream rng(2);
    for (int mode = 0; mode < 4; ++mode) {
        const bool ta = mode & 1, tb = mode & 2;
        const Matrix A = ta ? random_matrix(4, 3, rng) : random_matrix(3, 4, rng);
        const Matrix B = tb ? random_matrix(2, 4, rng) : random_matrix(4, 2, rng);
        gradcheck({A, B}, [=](Tape& t, const std::vector<int>& ids) {
            return project(t, t.matmul(ids[0], ids[1], ta, tb), 10 + mode);
        });
    }
}

TEST_CASE("add, sub and broadcast bias gradients") {
    RngStream rng(3);
    const Matrix X = random_matrix(4, 5, rng);
    const Matrix Y = random_matrix(4, 5, rng);
    gradcheck({X, Y}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.add(ids[0], ids[1]), 20);
    });
    gradcheck({X, Y}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.sub(ids[0], ids[1]), 21);
    });
    const Matrix row_bias = random_matrix(1, 5, rng);
    gradcheck({X, row_bias}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.add_row_vector(ids[0], ids[1]), 22);
    });
    const Matrix col_bias = random_matrix(4, 1, rng);
    gradcheck({X, col_bias}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.add_col_vector(ids[0], ids[1]), 23);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.scale(ids[0], -2.5), 24);
    });
}

TEST_CASE("activation gradients away from kinks") {
    RngStream rng(4);
    // Shift values away from zero so the finite difference never brackets
    // the ReLU kink.
    Matrix X = random_matrix(4, 6, rng);
    for (long r = 0; r < X.rows(); ++r)
        for (long c = 0; c < X.cols(); ++c)
            if (std::abs(X(r, c)) < 1e-3) X(r, c) = 0.5;
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.relu(ids[0]), 30);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.gelu(ids[0]), 31);
    });
}

TEST_CASE("layer norm matches a from-scratch forward and its gradients check out") {
    RngStream rng(5);
    const Matrix X = random_matrix(3, 8, rng);
    const Matrix G = random_matrix(1, 8, rng);
    const Matrix B = random_matrix(1, 8, rng);
    const double eps = 1e-5;

    Tape t;
    const int y = t.layer_norm_rows(t.leaf(X), t.leaf(G), t.leaf(B), eps);
    for (long r = 0; r < 3; ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        for (long c = 0; c < 8; ++c) {
            const double want = (X(r, c) - mu) / std::sqrt(var + eps) * G(0, c) + B(0, c);
            CHECK(t.value(y)(r, c) == doctest::Approx(want).epsilon(1e-12));
        }
    }

    gradcheck({X, G, B}, [eps](Tape& t, const std::vector<int>& ids) {
        return project(t, t.layer_norm_rows(ids[0], ids[1], ids[2], eps), 40);
    });
}

TEST_CASE("softmax rows sum to one and gradients check out") {
    RngStream rng(6);
    const Matrix X = random_matrix(4, 7, rng, 2.0);
    Tape t;
    const int y = t.softmax_rows(t.leaf(X));
    for (long r = 0; r < 4; ++r) {
        CHECK(t.value(y).row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(t.value(y).row(r).minCoeff() > 0.0);
    }
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.softmax_rows(ids[0]), 50);
    });
}

TEST_CASE("shape ops route gradients to the right places") {
    RngStream rng(7);
    const Matrix A = random_matrix(3, 4, rng);
    const Matrix B = random_matrix(2, 4, rng);
    const Matrix C = random_matrix(3, 2, rng);
    gradcheck({A, B}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.concat_rows({ids[0], ids[1]}), 60);
    });
    gradcheck({A, C}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.concat_cols({ids[0], ids[1]}), 61);
    });
    gradcheck({A}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.slice_rows(ids[0], 1, 2), 62);
    });
    gradcheck({A}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.slice_cols(ids[0], 1, 3), 63);
    });
    gradcheck({A}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.transpose(ids[0]), 64);
    });
    // Repeated and permuted indices: gradients must scatter-add.
    gradcheck({A}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.gather_rows(ids[0], {2, 0, 0, 1, 2}), 65);
    });
    gradcheck({A}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.gather_cols_zero(ids[0], {3, -1, 0, 0, -1, 2}), 66);
    });

    Tape t;
    const int a = t.leaf(A);
    CHECK_THROWS_AS(t.slice_rows(a, 2, 5), ShapeMismatch);
    CHECK_THROWS_AS(t.gather_rows(a, {0, 3}), ShapeMismatch);
    CHECK_THROWS_AS(t.concat_rows({}), EmptyInput);
    // Negative indices read zero columns and drop their gradient.
    const int g = t.gather_cols_zero(a, {-1, 1});
    CHECK(t.value(g).col(0).norm() == 0.0);
    CHECK((t.value(g).col(1) - A.col(1)).norm() == 0.0);
}

TEST_CASE("reductions: max, mean, sum of squares") {
    RngStream rng(8);
    // Perturb any near-ties so the argmax is stable under the FD step.
    Matrix X = random_matrix(5, 4, rng);
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.max_over_rows(ids[0]), 70);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.mean_over_rows(ids[0]), 71);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return t.sum_squares(ids[0]);
    });

    Tape t;
    Matrix ties(3, 1);
    ties << 2.0, 2.0, 1.0;
    const int x = t.leaf(ties);
    const int m = t.max_over_rows(x);
    t.backward(t.sum_squares(m));
    // First maximal row takes the whole gradient on a tie.
    CHECK(t.grad(x)(0, 0) == 4.0);
    CHECK(t.grad(x)(1, 0) == 0.0);
}

TEST_CASE("scalar chain: sqrt, abs, clamp, acos, divide") {
    RngStream rng(9);
    Matrix X(1, 3);
    X << 0.7, -0.4, 0.2;  // inside every domain, away from clamp edges
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.abs_all(ids[0]), 80);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.clamp_all(ids[0], -0.9, 0.9), 81);
    });
    gradcheck({X}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.acos_all(ids[0]), 82);
    });
    Matrix P(1, 3);
    P << 0.9, 2.0, 0.3;  // strictly positive for sqrt
    gradcheck({P}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.sqrt_all(ids[0]), 83);
    });
    Matrix S(1, 1);
    S << 1.7;
    gradcheck({X, S}, [](Tape& t, const std::vector<int>& ids) {
        return project(t, t.div_by_scalar(ids[0], ids[1]), 84);
    });

    // Clamp saturates and kills the gradient outside the window.
    Tape t;
    Matrix far(1, 1);
    far << 5.0;
    const int x = t.leaf(far);
    const int y = t.clamp_all(x, -1.0, 1.0);
    CHECK(t.value(y)(0, 0) == 1.0);
    t.backward(t.sum_squares(y));
    CHECK(t.grad(x)(0, 0) == 0.0);
}

TEST_CASE("constants absorb no gradient and shared nodes accumulate") {
    RngStream rng(10);
    const Matrix A = random_matrix(2, 2, rng);
    Tape t;
    const int a = t.leaf(A);
    const int c = t.constant(Matrix::Identity(2, 2));
    const int prod = t.matmul(a, c);
    // a feeds the root twice: once through prod, once directly.
    const int root = t.add(t.sum_squares(prod), t.sum_squares(a));
    t.backward(root);
    CHECK((t.grad(a) - 4.0 * A).norm() < 1e-12);
    CHECK(!t.requires_grad(c));

    Tape t2;
    const int x = t2.leaf(A);
    CHECK_THROWS_AS(t2.backward(x), ShapeMismatch);  // root not scalar
}

TEST_CASE("a small composite network gradchecks end to end") {
    RngStream rng(11);
    const Matrix X = random_matrix(6, 3, rng);      // six tokens of width 3
    const Matrix W1 = random_matrix(3, 8, rng, 0.5);
    const Matrix b1 = random_matrix(1, 8, rng, 0.1);
    const Matrix G = Matrix::Ones(1, 8);
    const Matrix Bn = Matrix::Zero(1, 8);
    const Matrix W2 = random_matrix(8, 1, rng, 0.5);
    gradcheck({X, W1, b1, G, Bn, W2}, [](Tape& t, const std::vector<int>& ids) {
        const int h = t.gelu(t.add_row_vector(t.matmul(ids[0], ids[1]), ids[2]));
        const int n = t.layer_norm_rows(h, ids[3], ids[4]);
        const int att = t.matmul(t.softmax_rows(t.matmul(n, n, false, true)), n);
        const int pooled = t.max_over_rows(att);
        return t.sum_squares(t.matmul(pooled, ids[5]));
    }, 1e-5);
}
