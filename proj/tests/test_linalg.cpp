#include <catch2/catch.hpp>

#include <cmath>

#include "comp/linalg.hpp"
#include "comp/rng.hpp"
#include "oracles.hpp"

using namespace comp;
using namespace comp::linalg;

namespace {

double rel_frob_diff(const Matrix& a, const Matrix& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double d = a(i, j) - b(i, j);
            num += d * d;
            den += b(i, j) * b(i, j);
        }
    return std::sqrt(num) / std::sqrt(std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    Rng rng(17);
    Matrix m = oracles::random_matrix(rng, 2, 2);
    Matrix i2 = Matrix::identity(2);
    Matrix prod = matmul(i2, m);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) REQUIRE(prod(r, c) == m(r, c));

    Matrix a = Matrix::from_data(2, 2, {1, 2, 3, 4});
    Matrix b = Matrix::from_data(2, 1, {0, 1});
    Matrix ab = matmul(a, b);
    REQUIRE(ab(0, 0) == 2.0);
    REQUIRE(ab(1, 0) == 4.0);
}

TEST_CASE("matmul matches naive oracle on random 8x8") {
    Rng rng(23);
    Matrix a = oracles::random_matrix(rng, 8, 8);
    Matrix b = oracles::random_matrix(rng, 8, 8);
    Matrix got = matmul(a, b);
    Matrix want = oracles::naive_matmul(a, b);
    REQUIRE(rel_frob_diff(got, want) < 1e-13);
}

TEST_CASE("matmul rejects dimension mismatch") {
    Matrix a(2, 3), b(2, 2);
    REQUIRE_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matrix construction rejects non-finite data") {
    REQUIRE_THROWS_AS(Matrix::from_data(1, 2, {1.0, std::nan("")}), Error);
    REQUIRE_THROWS_AS(Vector::from_data({std::numeric_limits<double>::infinity()}), Error);
    REQUIRE_THROWS_AS(Matrix::from_data(2, 2, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("cholesky of diagonal and hand 2x2") {
    Matrix d = Matrix::from_data(2, 2, {4, 0, 0, 9});
    Matrix l = cholesky_factor(d);
    REQUIRE(l(0, 0) == Approx(2.0));
    REQUIRE(l(1, 1) == Approx(3.0));
    REQUIRE(l(0, 1) == 0.0);
    REQUIRE(l(1, 0) == 0.0);

    Matrix m = Matrix::from_data(2, 2, {4, 2, 2, 3});
    Matrix lm = cholesky_factor(m);
    REQUIRE(lm(0, 0) == Approx(2.0));
    REQUIRE(lm(1, 0) == Approx(1.0));
    REQUIRE(lm(1, 1) == Approx(std::sqrt(2.0)));
    REQUIRE(lm(0, 1) == 0.0);
}

TEST_CASE("cholesky reconstructs random SPD 16x16") {
    Rng rng(5);
    Matrix m = oracles::random_spd(rng, oracles::log_uniform_eigs(rng, 16, 1e-2, 1e2));
    Matrix l = cholesky_factor(m);
    Matrix rec = matmul(l, transpose(l));
    REQUIRE(rel_frob_diff(rec, m) < 1e-10);
}

TEST_CASE("cholesky reports failing pivot") {
    Matrix m = Matrix::from_data(3, 3, {1, 0, 0, 0, 1, 2, 0, 2, 1});  // trailing block indefinite
    try {
        cholesky_factor(m);
        FAIL("expected NotPositiveDefiniteError");
    } catch (const NotPositiveDefiniteError& e) {
        REQUIRE(e.pivot == 2);
    }
}

TEST_CASE("cholesky rejects asymmetric input") {
    Matrix m = Matrix::from_data(2, 2, {1, 0.5, 0.2, 1});
    REQUIRE_THROWS_AS(cholesky_factor(m), Error);
}

TEST_CASE("cholesky_solve identity and diagonal") {
    Matrix i3 = Matrix::identity(3);
    Vector v{1.5, -2.0, 0.25};
    Vector x = cholesky_solve(i3, v);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(x[i] == Approx(v[i]));

    Matrix l = cholesky_factor(Matrix::from_data(2, 2, {4, 0, 0, 9}));
    Vector rhs{4, 9};
    Vector sol = cholesky_solve(l, rhs);
    REQUIRE(sol[0] == Approx(1.0));
    REQUIRE(sol[1] == Approx(1.0));
}

TEST_CASE("cholesky_solve residual on random SPD system") {
    Rng rng(7);
    Matrix m = oracles::random_spd(rng, oracles::log_uniform_eigs(rng, 12, 1e-1, 1e2));
    Vector rhs = oracles::random_vector(rng, 12);
    Matrix l = cholesky_factor(m);
    Vector x = cholesky_solve(l, rhs);
    Vector mx = matvec(m, x);
    double num = 0.0;
    for (std::size_t i = 0; i < 12; ++i) num += (mx[i] - rhs[i]) * (mx[i] - rhs[i]);
    REQUIRE(std::sqrt(num) / norm2(rhs) < 1e-9);
}

TEST_CASE("cholesky_solve rejects zero diagonal") {
    Matrix l(2, 2);
    l(0, 0) = 1.0;  // l(1,1) stays zero
    REQUIRE_THROWS_AS(cholesky_solve(l, Vector{1, 1}), SingularError);
}

TEST_CASE("extreme eigenpairs of a diagonal matrix") {
    Matrix d = Matrix::from_data(2, 2, {4, 0, 0, 1});
    EigPair mx = extreme_eigpair(d, Extreme::Max);
    EigPair mn = extreme_eigpair(d, Extreme::Min);
    REQUIRE(mx.value == Approx(4.0).epsilon(1e-9));
    REQUIRE(mn.value == Approx(1.0).epsilon(1e-9));
    REQUIRE(std::abs(mx.vector[0]) == Approx(1.0).margin(1e-8));
    REQUIRE(std::abs(mn.vector[1]) == Approx(1.0).margin(1e-8));
    REQUIRE(norm2(mx.vector) == Approx(1.0));
}

TEST_CASE("extreme eigenpairs match Jacobi oracle on random SPD 32x32") {
    Rng rng(11);
    Matrix m = oracles::random_spd(rng, oracles::log_uniform_eigs(rng, 32, 1e-2, 1e2));
    auto jac = oracles::jacobi_eigensolve(m);
    EigPair mx = extreme_eigpair(m, Extreme::Max, 1e-12, 200000);
    EigPair mn = extreme_eigpair(m, Extreme::Min, 1e-12, 200000);
    REQUIRE(mx.value == Approx(jac.values.back()).epsilon(1e-8));
    REQUIRE(mn.value == Approx(jac.values.front()).epsilon(1e-8));
}

TEST_CASE("extreme eigenpair reports non-convergence") {
    Rng rng(13);
    Matrix m = oracles::random_spd(rng, {1.0, 1.2, 5.0, 5.1});
    try {
        extreme_eigpair(m, Extreme::Max, 1e-14, 2);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        REQUIRE(e.iterations == 2);
        REQUIRE(e.residual > 0.0);
    }
}

TEST_CASE("lsq identity and overdetermined mean") {
    Matrix i3 = Matrix::identity(3);
    Vector v{0.5, -1.0, 2.0};
    Vector x = lsq_solve_iterative(i3, v, 0.0);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(x[i] == Approx(v[i]).margin(1e-10));

    Matrix a = Matrix::from_data(2, 1, {1, 1});
    Vector y{1, 3};
    Vector sol = lsq_solve_iterative(a, y, 0.0);
    REQUIRE(sol[0] == Approx(2.0).margin(1e-10));
}

TEST_CASE("lsq matches direct regularized normal equations") {
    Rng rng(19);
    Matrix a = oracles::random_matrix(rng, 64, 16);
    Vector y = oracles::random_vector(rng, 64);
    const double damping = 1e-6;

    Vector x_it = lsq_solve_iterative(a, y, damping, 1e-12, 5000);

    Matrix ata = matmul(transpose(a), a);
    for (std::size_t i = 0; i < 16; ++i) ata(i, i) += damping;
    Vector aty = matvec_t(a, y);
    Vector x_direct = cholesky_solve(cholesky_factor(ata), aty);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        num += (x_it[i] - x_direct[i]) * (x_it[i] - x_direct[i]);
        den += x_direct[i] * x_direct[i];
    }
    REQUIRE(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("lsq reports non-convergence with iteration count") {
    Rng rng(29);
    Matrix a = oracles::random_matrix(rng, 20, 10);
    Vector y = oracles::random_vector(rng, 20);
    try {
        lsq_solve_iterative(a, y, 0.0, 1e-14, 2);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        REQUIRE(e.iterations == 2);
    }
}

TEST_CASE("sample variance basics") {
    REQUIRE(sample_variance(Vector{1, 1, 1}) == 0.0);
    REQUIRE(sample_variance(Vector{0, 2}) == Approx(1.0));
    REQUIRE(sample_variance(Vector{42.0}) == 0.0);
    REQUIRE_THROWS_AS(sample_variance(Vector{}), Error);
}

TEST_CASE("sample variance matches online oracle on random data") {
    Rng rng(31);
    Vector v = oracles::random_vector(rng, 100, 3.0);
    REQUIRE(sample_variance(v) == Approx(oracles::welford_variance(v)).margin(1e-12));
}

// ---------------------------------------------------------------------------
// Property suites
// ---------------------------------------------------------------------------

TEST_CASE("property: cholesky round-trips SPD matrices with condition <= 1e6") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(15);
        auto eigs = oracles::log_uniform_eigs(rng, n, 1e-3, 1e3);  // condition <= 1e6
        Matrix m = oracles::random_spd(rng, eigs);
        Matrix l = cholesky_factor(m);
        Matrix rec = matmul(l, transpose(l));
        REQUIRE(rel_frob_diff(rec, m) < 1e-9);
    }
}

TEST_CASE("property: lambda_max >= lambda_min and diagonal exactness") {
    Rng rng(103);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(10);
        Matrix m = oracles::random_spd(rng, oracles::log_uniform_eigs(rng, n, 1e-1, 1e2));
        EigPair mx = extreme_eigpair(m, Extreme::Max, 1e-10, 100000);
        EigPair mn = extreme_eigpair(m, Extreme::Min, 1e-10, 100000);
        REQUIRE(mx.value >= mn.value);
        REQUIRE(mn.value > 0.0);
    }
    // Diagonal case: exact extremes.
    Matrix d(5, 5);
    const double vals[5] = {3.0, 0.5, 7.0, 1.5, 2.0};
    for (std::size_t i = 0; i < 5; ++i) d(i, i) = vals[i];
    REQUIRE(extreme_eigpair(d, Extreme::Max).value == Approx(7.0).epsilon(1e-10));
    REQUIRE(extreme_eigpair(d, Extreme::Min).value == Approx(0.5).epsilon(1e-10));
}

TEST_CASE("property: iterative and direct least squares agree on full-rank systems") {
    Rng rng(107);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t cols = 2 + rng.uniform_below(8);
        const std::size_t rows = cols + 2 + rng.uniform_below(20);
        Matrix a = oracles::random_matrix(rng, rows, cols);
        Vector y = oracles::random_vector(rng, rows);
        const double damping = 1e-8 + rng.uniform() * 1e-4;

        Vector x_it = lsq_solve_iterative(a, y, damping, 1e-12, 20000);
        Matrix ata = matmul(transpose(a), a);
        for (std::size_t i = 0; i < cols; ++i) ata(i, i) += damping;
        Vector x_d = cholesky_solve(cholesky_factor(ata), matvec_t(a, y));

        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < cols; ++i) {
            num += (x_it[i] - x_d[i]) * (x_it[i] - x_d[i]);
            den += x_d[i] * x_d[i];
        }
        REQUIRE(std::sqrt(num / std::max(den, 1e-300)) < 1e-6);
    }
}

TEST_CASE("property: kernels are deterministic across repeated calls") {
    Rng rng(109);
    Matrix a = oracles::random_matrix(rng, 24, 24);
    Matrix spd = oracles::random_spd(rng, oracles::log_uniform_eigs(rng, 24, 1e-1, 1e1));
    Vector y = oracles::random_vector(rng, 24);

    Matrix p1 = matmul(a, spd), p2 = matmul(a, spd);
    for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1.data()[i] == p2.data()[i]);

    Matrix l1 = cholesky_factor(spd), l2 = cholesky_factor(spd);
    for (std::size_t i = 0; i < l1.size(); ++i) REQUIRE(l1.data()[i] == l2.data()[i]);

    EigPair e1 = extreme_eigpair(spd, Extreme::Max, 1e-10, 100000);
    EigPair e2 = extreme_eigpair(spd, Extreme::Max, 1e-10, 100000);
    REQUIRE(e1.value == e2.value);
    for (std::size_t i = 0; i < 24; ++i) REQUIRE(e1.vector[i] == e2.vector[i]);

    Vector s1 = lsq_solve_iterative(a, y, 1e-6, 1e-10, 20000);
    Vector s2 = lsq_solve_iterative(a, y, 1e-6, 1e-10, 20000);
    for (std::size_t i = 0; i < 24; ++i) REQUIRE(s1[i] == s2[i]);
}
