#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"
#include "hbvm/legendre.hpp"
#include "hbvm/linalg.hpp"

namespace hbvm {

/// Coefficient data of the HBVM(k,s) method: a k-stage Runge-Kutta method on
/// the Gauss-Legendre abscissae whose Butcher matrix is I_s P_s^T Omega.
struct TableauSet {
    int k = 0;
    int s = 0;
    QuadratureRule rule;
    DenseMatrix P_s;        // k x s,     P_{j-1}(c_i)
    DenseMatrix P_s1;       // k x (s+1)
    DenseMatrix I_s;        // k x s,     int_0^{c_i} P_{j-1}
    DenseMatrix X_s;        // s x s
    DenseMatrix Xhat_s;     // (s+1) x s
    DenseMatrix butcher_A;  // k x k

    /// P_s^T Omega, the s x k projection onto the Legendre basis.
    DenseMatrix projection() const {
        DenseMatrix w = P_s.transpose();
        for (std::size_t j = 0; j < w.rows(); ++j)
            for (std::size_t i = 0; i < w.cols(); ++i) w(j, i) *= rule.b[i];
        return w;
    }

    /// P_{s+1} Xhat_s X_s, the k x s map from gamma to the stage correction.
    DenseMatrix stage_coefficients() const { return P_s1 * Xhat_s * X_s; }
};

/// The s x s tridiagonal matrix X_s.
inline DenseMatrix make_X(int s) {
    if (s < 1) throw ConfigError("make_X: s must be positive");
    const auto n = static_cast<std::size_t>(s);
    DenseMatrix x(n, n);
    x(0, 0) = 0.5;
    for (std::size_t j = 1; j < n; ++j) {
        const double v = xi(static_cast<int>(j));
        x(j - 1, j) = -v;
        x(j, j - 1) = v;
    }
    return x;
}

/// X_s with the extra row (0, ..., 0, xi_s) appended.
inline DenseMatrix make_Xhat(int s) {
    const DenseMatrix x = make_X(s);
    const auto n = static_cast<std::size_t>(s);
    DenseMatrix xh(n + 1, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) xh(i, j) = x(i, j);
    xh(n, n - 1) = xi(s);
    return xh;
}

/// d_s = (det X_s^2)^(1/s), the common diagonal entry of the Crout factor L_s.
inline double diagonal_entry(int s) {
    const double det = determinant(make_X(s));
    return std::pow(det * det, 1.0 / s);
}

inline TableauSet build_tableau(int k, int s) {
    if (s < 1 || k < 1 || k > kMaxGaussNodes) {
        throw ConfigError("build_tableau: need 1 <= s <= k <= 64, got k=" + std::to_string(k) +
                          ", s=" + std::to_string(s));
    }
    if (s > k) {
        throw ConfigError("build_tableau: s > k (k=" + std::to_string(k) + ", s=" + std::to_string(s) + ")");
    }
    TableauSet t;
    t.k = k;
    t.s = s;
    t.rule = gauss_rule(k);
    t.P_s = legendre_matrix(t.rule.c, s);
    t.P_s1 = legendre_matrix(t.rule.c, s + 1);
    t.I_s = DenseMatrix(static_cast<std::size_t>(k), static_cast<std::size_t>(s));
    for (std::size_t i = 0; i < t.I_s.rows(); ++i)
        for (std::size_t j = 0; j < t.I_s.cols(); ++j)
            t.I_s(i, j) = integrate_legendre(static_cast<int>(j), t.rule.c[i]);
    t.X_s = make_X(s);
    t.Xhat_s = make_Xhat(s);
    t.butcher_A = t.I_s * t.projection();
    return t;
}

/// Maximum absolute residual of each structural identity of a tableau.
struct IdentityReport {
    double integral_factorization = 0.0;  // I_s - P_{s+1} Xhat_s
    double orthonormality = 0.0;          // P_s^T Omega P_s - I
    double projection = 0.0;              // P_s^T Omega I_s - X_s
    double row_sums = 0.0;                // I_s P_s^T Omega e - c
    double x_structure = 0.0;             // X_s, Xhat_s against their closed forms

    double max() const {
        return std::max({integral_factorization, orthonormality, projection, row_sums, x_structure});
    }
};

inline IdentityReport verify_identities(const TableauSet& t) {
    IdentityReport r;
    const DenseMatrix w = t.projection();
    const auto s = static_cast<std::size_t>(t.s);
    r.integral_factorization = max_abs_diff(t.I_s, t.P_s1 * t.Xhat_s);
    r.orthonormality = max_abs_diff(w * t.P_s, DenseMatrix::identity(s));
    r.projection = max_abs_diff(w * t.I_s, t.X_s);
    const Vector ones(static_cast<std::size_t>(t.k), 1.0);
    r.row_sums = max_abs_diff(std::span<const double>(t.butcher_A.apply(ones)), std::span<const double>(t.rule.c));
    r.x_structure = std::max(max_abs_diff(t.X_s, make_X(t.s)), max_abs_diff(t.Xhat_s, make_Xhat(t.s)));
    return r;
}

}  // namespace hbvm
