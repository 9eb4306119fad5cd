#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "hbvm/linalg.hpp"
#include "oracles.hpp"

using namespace hbvm;
using cd = std::complex<double>;

TEST(LuFactor, IdentityHasTrivialFactors) {
    const LUFactors f = lu_factor(DenseMatrix::identity(4));
    EXPECT_EQ(max_abs_diff(f.lower(), DenseMatrix::identity(4)), 0.0);
    EXPECT_EQ(max_abs_diff(f.upper(), DenseMatrix::identity(4)), 0.0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(f.perm[i], i);
}

TEST(LuFactor, AntiDiagonalForcesRowSwap) {
    const DenseMatrix a{{0, 1}, {1, 0}};
    const LUFactors f = lu_factor(a);
    EXPECT_EQ(f.perm[0], 1u);
    EXPECT_EQ(f.perm[1], 0u);
    EXPECT_EQ(max_abs_diff(f.lower(), DenseMatrix::identity(2)), 0.0);
    EXPECT_EQ(max_abs_diff(f.upper(), DenseMatrix::identity(2)), 0.0);
    EXPECT_EQ(f.sign, -1);
}

TEST(LuFactor, RandomReconstruction) {
    std::mt19937_64 rng(1);
    const DenseMatrix a = oracle::random_matrix(rng, 10, 10);
    const LUFactors f = lu_factor(a);
    EXPECT_LT(max_abs_diff(f.permuted(a), f.lower() * f.upper()), 1e-13);
}

TEST(LuFactor, SingularThrows) {
    EXPECT_THROW(lu_factor(DenseMatrix{{1, 2}, {2, 4}}), SingularMatrixError);
    EXPECT_THROW(lu_factor(DenseMatrix(3, 3)), SingularMatrixError);
    EXPECT_THROW(lu_factor(DenseMatrix(2, 3)), DimensionError);
}

TEST(LuSolve, IdentityReturnsRhs) {
    const LUFactors f = lu_factor(DenseMatrix::identity(3));
    const Vector b{1.5, -2.0, 7.0};
    EXPECT_EQ(lu_solve(f, b), b);
}

TEST(LuSolve, Diagonal) {
    const Vector x = lu_solve(lu_factor(DenseMatrix{{2, 0}, {0, 4}}), Vector{2, 8});
    EXPECT_DOUBLE_EQ(x[0], 1.0);
    EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(LuSolve, SpdConstructedSolution) {
    std::mt19937_64 rng(2);
    const DenseMatrix b = oracle::random_matrix(rng, 8, 8);
    DenseMatrix a = b.transpose() * b;
    for (std::size_t i = 0; i < 8; ++i) a(i, i) += 8.0;
    const Vector ones(8, 1.0);
    const Vector x = lu_solve(lu_factor(a), a.apply(ones));
    for (double v : x) EXPECT_NEAR(v, 1.0, 1e-11);
}

TEST(LuSolve, BackwardErrorCorpus) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dim(1, 12);
    int checked = 0;
    for (int c = 0; c < 500; ++c) {
        const auto n = static_cast<std::size_t>(dim(rng));
        const DenseMatrix a = oracle::random_matrix(rng, n, n);
        if (condition_number(a) > 1e8) continue;
        const Vector b = oracle::random_vector(rng, n);
        const Vector x = lu_solve(lu_factor(a), b);
        const Vector ax = a.apply(x);
        const double lhs = max_abs_diff(std::span<const double>(ax), std::span<const double>(b));
        EXPECT_LE(lhs, 1e-10 * (a.norm_inf() * norm_inf(x) + norm_inf(b)));
        ++checked;
    }
    EXPECT_GT(checked, 400);
}

TEST(LuSolve, MultiColumnAndMismatch) {
    std::mt19937_64 rng(4);
    const DenseMatrix a = oracle::random_matrix(rng, 5, 5);
    const DenseMatrix b = oracle::random_matrix(rng, 5, 3);
    const DenseMatrix x = lu_solve(lu_factor(a), b);
    EXPECT_LT(max_abs_diff(a * x, b), 1e-12);
    EXPECT_THROW(lu_solve(lu_factor(a), Vector(4, 1.0)), DimensionError);
}

TEST(Eigenvalues, Diagonal) {
    auto ev = eigenvalues_small(DenseMatrix::diagonal(Vector{1, 2, 3}));
    EXPECT_LT(oracle::match_distance(ev, {1.0, 2.0, 3.0}), 1e-14);
}

TEST(Eigenvalues, Rotation) {
    auto ev = eigenvalues_small(DenseMatrix{{0, -1}, {1, 0}});
    EXPECT_LT(oracle::match_distance(ev, {cd(0, 1), cd(0, -1)}), 1e-14);
}

TEST(Eigenvalues, RandomSixBySixAgainstCharacteristicPolynomial) {
    std::mt19937_64 rng(5);
    for (int c = 0; c < 20; ++c) {
        const DenseMatrix a = oracle::random_matrix(rng, 6, 6);
        const auto ev = eigenvalues_small(a);
        const auto roots = oracle::poly_roots(oracle::char_poly(a));
        EXPECT_LT(oracle::match_distance(ev, roots), 1e-8);
    }
}

TEST(Eigenvalues, ConjugatePairs) {
    std::mt19937_64 rng(6);
    for (int c = 0; c < 50; ++c) {
        const auto ev = eigenvalues_small(oracle::random_matrix(rng, 7, 7));
        std::vector<cd> conj;
        for (auto z : ev) conj.push_back(std::conj(z));
        EXPECT_LT(oracle::match_distance(ev, conj), 1e-12);
    }
}

TEST(Eigenvalues, TraceAndDeterminantCorpus) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> dim(1, 12);
    for (int c = 0; c < 200; ++c) {
        const auto n = static_cast<std::size_t>(dim(rng));
        const DenseMatrix a = oracle::random_matrix(rng, n, n);
        const auto ev = eigenvalues_small(a);
        cd sum = 0.0, prod = 1.0;
        for (auto z : ev) {
            sum += z;
            prod *= z;
        }
        const double tr = a.trace();
        EXPECT_LT(std::abs(sum - tr), 1e-9 * std::max(1.0, std::abs(tr)));
        const double det = determinant(a);
        EXPECT_LT(std::abs(prod - det), 1e-8 * std::max(1.0, std::abs(det)));
    }
}

TEST(Eigenvalues, SizeLimit) { EXPECT_THROW(eigenvalues_small(DenseMatrix::identity(17)), ConfigError); }

TEST(SpectralRadius, ZeroAndNonNormal) {
    EXPECT_EQ(spectral_radius(DenseMatrix(3, 3)), 0.0);
    EXPECT_NEAR(spectral_radius(DenseMatrix{{0.5, 100}, {0, 0.5}}), 0.5, 1e-12);
}

TEST(KronApply, IdentityIdentity) {
    const Vector v{1, 2, 3, 4, 5, 6};
    EXPECT_EQ(kron_apply(DenseMatrix::identity(2), DenseMatrix::identity(3), v), v);
    EXPECT_EQ(kron_apply(DenseMatrix::identity(3), 2, v), v);
}

TEST(KronApply, BlockSwap) {
    const Vector v{1, 2, 3, 10, 20, 30};
    const Vector w = kron_apply(DenseMatrix{{0, 1}, {1, 0}}, 3, v);
    EXPECT_EQ(w, (Vector{10, 20, 30, 1, 2, 3}));
}

TEST(KronApply, MatchesExplicitProduct) {
    std::mt19937_64 rng(8);
    const DenseMatrix b = oracle::random_matrix(rng, 3, 3);
    const DenseMatrix h = oracle::random_matrix(rng, 5, 5);
    const Vector v = oracle::random_vector(rng, 15);
    const Vector w = kron_apply(b, h, v);
    const Vector ref = oracle::matvec(oracle::kron(b, h), v);
    EXPECT_LT(max_abs_diff(std::span<const double>(w), std::span<const double>(ref)), 1e-12);
}

TEST(KronApply, RectangularAndMismatch) {
    std::mt19937_64 rng(9);
    const DenseMatrix b = oracle::random_matrix(rng, 4, 2);
    const Vector v = oracle::random_vector(rng, 6);
    const Vector w = kron_apply(b, 3, v);
    const Vector ref = oracle::matvec(oracle::kron(b, DenseMatrix::identity(3)), v);
    EXPECT_LT(max_abs_diff(std::span<const double>(w), std::span<const double>(ref)), 1e-14);
    EXPECT_THROW(kron_apply(b, 3, Vector(5)), DimensionError);
}

namespace {

DenseMatrix random_lower_constant_diag(std::mt19937_64& rng, std::size_t s, double d) {
    DenseMatrix l = oracle::random_matrix(rng, s, s);
    for (std::size_t i = 0; i < s; ++i) {
        l(i, i) = d;
        for (std::size_t j = i + 1; j < s; ++j) l(i, j) = 0.0;
    }
    return l;
}

DenseMatrix random_symmetric(std::mt19937_64& rng, std::size_t m) {
    const DenseMatrix a = oracle::random_matrix(rng, m, m);
    return 0.5 * (a + a.transpose());
}

LUFactors d_factors(const DenseMatrix& h, double h2, double d) {
    DenseMatrix m = DenseMatrix::identity(h.rows());
    m += (h2 * d) * h;
    return lu_factor(m);
}

}  // namespace

TEST(BlockSolve, ZeroStepReturnsRhs) {
    std::mt19937_64 rng(10);
    const DenseMatrix l = random_lower_constant_diag(rng, 3, 0.2);
    const DenseMatrix h = random_symmetric(rng, 4);
    const Vector rhs = oracle::random_vector(rng, 12);
    const Vector x = block_lower_triangular_solve(l, h, d_factors(h, 0.0, 0.2), 0.0, rhs);
    EXPECT_LT(max_abs_diff(std::span<const double>(x), std::span<const double>(rhs)), 1e-15);
}

TEST(BlockSolve, SingleBlockMatchesLuSolve) {
    std::mt19937_64 rng(11);
    const DenseMatrix h = random_symmetric(rng, 5);
    const double h2 = 0.3, d = 0.25;
    const Vector rhs = oracle::random_vector(rng, 5);
    const LUFactors f = d_factors(h, h2, d);
    const Vector x = block_lower_triangular_solve(DenseMatrix{{d}}, h, f, h2, rhs);
    const Vector ref = lu_solve(f, rhs);
    EXPECT_LT(max_abs_diff(std::span<const double>(x), std::span<const double>(ref)), 1e-14);
}

TEST(BlockSolve, MatchesDenseAssemblyCorpus) {
    std::mt19937_64 rng(12);
    for (std::size_t s = 1; s <= 6; ++s) {
        for (std::size_t m = 1; m <= 8; ++m) {
            const double d = 0.05 + 0.1 * static_cast<double>(s);
            const double h2 = 0.7;
            const DenseMatrix l = random_lower_constant_diag(rng, s, d);
            const DenseMatrix h = random_symmetric(rng, m);
            const Vector rhs = oracle::random_vector(rng, s * m);
            const Vector x = block_lower_triangular_solve(l, h, d_factors(h, h2, d), h2, rhs);
            DenseMatrix big = DenseMatrix::identity(s * m);
            big += h2 * oracle::kron(l, h);
            const Vector ref = oracle::dense_solve(big, rhs);
            EXPECT_LT(max_abs_diff(std::span<const double>(x), std::span<const double>(ref)), 1e-10)
                << "s=" << s << " m=" << m;
        }
    }
}

TEST(BlockSolve, DimensionChecks) {
    const DenseMatrix h = DenseMatrix::identity(2);
    const LUFactors f = lu_factor(DenseMatrix::identity(3));
    EXPECT_THROW(block_lower_triangular_solve(DenseMatrix::identity(2), h, f, 1.0, Vector(4)), DimensionError);
}
