#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"

namespace hbvm {

/// Off-diagonal entry of the Jacobi matrix of the shifted orthonormal
/// Legendre family: xi_j = 1 / (2 sqrt(4 j^2 - 1)).
inline double xi(int j) {
    if (j <= 0) throw DomainError("xi: index must be positive, got " + std::to_string(j));
    const double jj = static_cast<double>(j);
    return 1.0 / (2.0 * std::sqrt(4.0 * jj * jj - 1.0));
}

namespace detail {

inline void check_unit_interval(double x, const char* who) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError(std::string(who) + ": argument outside [0,1]");
    }
}

}  // namespace detail

/// P_0(x), ..., P_r(x) for the Legendre polynomials orthonormal on [0,1].
///
/// Uses the three-term recurrence
///   (x - 1/2) P_j = (j+1) xi_{j+1} P_{j+1} + j xi_j P_{j-1}.
inline Vector legendre_values(int r, double x) {
    if (r < 0) throw DomainError("legendre_values: negative degree");
    detail::check_unit_interval(x, "legendre_values");
    Vector p(static_cast<std::size_t>(r) + 1);
    p[0] = 1.0;
    if (r >= 1) p[1] = (x - 0.5) / xi(1);
    for (int j = 1; j < r; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        p[uj + 1] = ((x - 0.5) * p[uj] - j * xi(j) * p[uj - 1]) / ((j + 1) * xi(j + 1));
    }
    return p;
}

inline double eval_legendre(int j, double x) {
    if (j < 0) throw DomainError("eval_legendre: negative degree");
    return legendre_values(j, x).back();
}

/// Integral of P_j over [0, c], in closed form.
inline double integrate_legendre(int j, double c) {
    if (j < 0) throw DomainError("integrate_legendre: negative degree");
    detail::check_unit_interval(c, "integrate_legendre");
    if (j == 0) return c;
    const Vector p = legendre_values(j + 1, c);
    const auto uj = static_cast<std::size_t>(j);
    return xi(j + 1) * p[uj + 1] - xi(j) * p[uj - 1];
}

/// Gauss-Legendre rule on [0,1].
struct QuadratureRule {
    int k = 0;
    Vector c;  // abscissae, strictly increasing
    Vector b;  // weights

    DenseMatrix omega() const { return DenseMatrix::diagonal(b); }
};

inline constexpr int kMaxGaussNodes = 64;

/// k-point Gauss-Legendre rule on [0,1], 1 <= k <= 64.
///
/// Newton iteration on the classical Legendre polynomial over [-1,1] from
/// Chebyshev-like initial guesses; weights from the derivative formula.
inline QuadratureRule gauss_rule(int k) {
    if (k < 1 || k > kMaxGaussNodes) {
        throw ConfigError("gauss_rule: k must be in [1, 64], got " + std::to_string(k));
    }
    QuadratureRule rule{k, Vector(static_cast<std::size_t>(k)), Vector(static_cast<std::size_t>(k))};
    const int half = (k + 1) / 2;
    const double n = k;
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= k; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) <= 1e-15) break;
        }
        // Re-evaluate the derivative at the converged node for the weight.
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= k; ++j) {
            const double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double w = 1.0 / ((1.0 - z * z) * dp * dp);  // half of the [-1,1] weight

        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(k - 1 - i);
        rule.c[lo] = 0.5 * (1.0 - z);
        rule.c[hi] = 0.5 * (1.0 + z);
        rule.b[lo] = w;
        rule.b[hi] = w;
    }
    if (k % 2 == 1) rule.c[static_cast<std::size_t>(k / 2)] = 0.5;
    return rule;
}

/// r x n matrix with entries P_{j}(x_i), j = 0..n-1.
inline DenseMatrix legendre_matrix(const Vector& x, int n) {
    DenseMatrix p(x.size(), static_cast<std::size_t>(n));
    if (n <= 0) return p;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Vector v = legendre_values(n - 1, x[i]);
        for (int j = 0; j < n; ++j) p(i, static_cast<std::size_t>(j)) = v[static_cast<std::size_t>(j)];
    }
    return p;
}

}  // namespace hbvm
