#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"

namespace hbvm {

/// Row-pivoted LU factors, PA = LU, with L unit lower triangular stored below
/// the diagonal of `lu` and U on and above it.
struct LUFactors {
    DenseMatrix lu;
    std::vector<std::size_t> perm;  // row i of PA is row perm[i] of A
    int sign = 1;

    std::size_t size() const noexcept { return lu.rows(); }

    DenseMatrix lower() const {
        const std::size_t n = size();
        DenseMatrix l = DenseMatrix::identity(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) l(i, j) = lu(i, j);
        return l;
    }

    DenseMatrix upper() const {
        const std::size_t n = size();
        DenseMatrix u(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) u(i, j) = lu(i, j);
        return u;
    }

    DenseMatrix permuted(const DenseMatrix& a) const {
        DenseMatrix pa(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) pa(i, j) = a(perm[i], j);
        return pa;
    }
};

inline LUFactors lu_factor(const DenseMatrix& a) {
    if (!a.square()) throw DimensionError("lu_factor: matrix is not square");
    if (!a.all_finite()) throw DomainError("lu_factor: non-finite entries");
    const std::size_t n = a.rows();
    LUFactors f{a, std::vector<std::size_t>(n), 1};
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    DenseMatrix& m = f.lu;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(m(i, k)) > best) {
                best = std::abs(m(i, k));
                piv = i;
            }
        }
        if (best == 0.0) {
            throw SingularMatrixError("lu_factor: zero pivot column " + std::to_string(k));
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(f.perm[k], f.perm[piv]);
            f.sign = -f.sign;
        }
        const double inv = 1.0 / m(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double lik = m(i, k) * inv;
            m(i, k) = lik;
            if (lik == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= lik * m(k, j);
        }
    }
    return f;
}

/// Solves A x = rhs in place.
inline void lu_solve_in_place(const LUFactors& f, std::span<double> x) {
    const std::size_t n = f.size();
    if (x.size() != n) throw DimensionError("lu_solve: right-hand side length mismatch");
    Vector b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = x[f.perm[i]];
    for (std::size_t i = 0; i < n; ++i) {
        double acc = b[i];
        for (std::size_t j = 0; j < i; ++j) acc -= f.lu(i, j) * b[j];
        b[i] = acc;
    }
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= f.lu(i, j) * b[j];
        b[i] = acc / f.lu(i, i);
    }
    std::copy(b.begin(), b.end(), x.begin());
}

inline Vector lu_solve(const LUFactors& f, std::span<const double> rhs) {
    Vector x(rhs.begin(), rhs.end());
    lu_solve_in_place(f, x);
    return x;
}

/// Multi-column solve, one column of `rhs` at a time.
inline DenseMatrix lu_solve(const LUFactors& f, const DenseMatrix& rhs) {
    if (rhs.rows() != f.size()) throw DimensionError("lu_solve: right-hand side rows mismatch");
    DenseMatrix x(rhs.rows(), rhs.cols());
    Vector col(rhs.rows());
    for (std::size_t j = 0; j < rhs.cols(); ++j) {
        for (std::size_t i = 0; i < rhs.rows(); ++i) col[i] = rhs(i, j);
        lu_solve_in_place(f, col);
        for (std::size_t i = 0; i < rhs.rows(); ++i) x(i, j) = col[i];
    }
    return x;
}

inline double determinant(const LUFactors& f) {
    double d = f.sign;
    for (std::size_t i = 0; i < f.size(); ++i) d *= f.lu(i, i);
    return d;
}

inline double determinant(const DenseMatrix& a) {
    try {
        return determinant(lu_factor(a));
    } catch (const SingularMatrixError&) {
        return 0.0;
    }
}

inline DenseMatrix inverse(const LUFactors& f) {
    return lu_solve(f, DenseMatrix::identity(f.size()));
}

/// 1-norm condition number of A, from an explicit inverse (small matrices only).
inline double condition_number(const DenseMatrix& a) {
    try {
        return a.norm_one() * inverse(lu_factor(a)).norm_one();
    } catch (const SingularMatrixError&) {
        return std::numeric_limits<double>::infinity();
    }
}

namespace detail {

// Parlett-Reinsch balancing by powers of two; preserves the spectrum exactly.
inline void balance(DenseMatrix& a) {
    constexpr double radix = 2.0;
    constexpr double sqrdx = radix * radix;
    const std::size_t n = a.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                g = 1.0 / f;
                for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
                for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

// Householder reduction to upper Hessenberg form (similarity transform).
inline void hessenberg(DenseMatrix& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    Vector v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::abs(a(i, k));
        if (scale == 0.0) continue;
        double sigma = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = a(i, k) / scale;
            sigma += v[i] * v[i];
        }
        double alpha = std::sqrt(sigma);
        if (v[k + 1] > 0.0) alpha = -alpha;
        v[k + 1] -= alpha;
        double vtv = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        const double beta = 2.0 / vtv;
        for (std::size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) dot += v[i] * a(i, j);
            dot *= beta;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= dot * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) dot += a(i, j) * v[j];
            dot *= beta;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= dot * v[j];
        }
        a(k + 1, k) = alpha * scale;
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix.
inline std::vector<std::complex<double>> hessenberg_qr(DenseMatrix& a) {
    const int n = static_cast<int>(a.rows());
    std::vector<std::complex<double>> eig(static_cast<std::size_t>(n));
    auto H = [&a](int i, int j) -> double& {
        return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    };

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(H(i, j));
    const double deflate_abs = 1e-14 * anorm;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const int max_sweeps = 30 * n;
    int sweeps = 0;

    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l > 0; --l) {
                double s = std::abs(H(l - 1, l - 1)) + std::abs(H(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(H(l, l - 1)) <= eps * s || std::abs(H(l, l - 1)) <= deflate_abs) {
                    H(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = H(nn, nn);
            if (l == nn) {
                eig[static_cast<std::size_t>(nn)] = {x + t, 0.0};
                --nn;
                continue;
            }
            double y = H(nn - 1, nn - 1);
            double w = H(nn, nn - 1) * H(nn - 1, nn);
            if (l == nn - 1) {
                const double p = 0.5 * (y - x);
                const double q = p * p + w;
                double z = std::sqrt(std::abs(q));
                x += t;
                if (q >= 0.0) {
                    z = p + sign_of(z, p);
                    double lo = x + z;
                    double hi = (z != 0.0) ? x - w / z : x + z;
                    eig[static_cast<std::size_t>(nn - 1)] = {lo, 0.0};
                    eig[static_cast<std::size_t>(nn)] = {hi, 0.0};
                } else {
                    eig[static_cast<std::size_t>(nn - 1)] = {x + p, z};
                    eig[static_cast<std::size_t>(nn)] = {x + p, -z};
                }
                nn -= 2;
                continue;
            }

            if (++sweeps > max_sweeps) {
                throw EigensolverError("eigenvalues_small: QR iteration did not converge");
            }
            if (its == 10 || its == 20) {
                t += x;
                for (int i = 0; i <= nn; ++i) H(i, i) -= x;
                const double s = std::abs(H(nn, nn - 1)) + std::abs(H(nn - 1, nn - 2));
                y = x = 0.75 * s;
                w = -0.4375 * s * s;
            }
            ++its;

            int m = nn - 2;
            double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
            for (; m >= l; --m) {
                z = H(m, m);
                r = x - z;
                double s = y - z;
                p = (r * s - w) / H(m + 1, m) + H(m, m + 1);
                q = H(m + 1, m + 1) - z - r - s;
                r = H(m + 2, m + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l) break;
                const double u = std::abs(H(m, m - 1)) * (std::abs(q) + std::abs(r));
                const double v =
                    std::abs(p) * (std::abs(H(m - 1, m - 1)) + std::abs(z) + std::abs(H(m + 1, m + 1)));
                if (u <= eps * v) break;
            }
            for (int i = m; i < nn - 1; ++i) {
                H(i + 2, i) = 0.0;
                if (i != m) H(i + 2, i - 1) = 0.0;
            }
            for (int k = m; k < nn; ++k) {
                if (k != m) {
                    p = H(k, k - 1);
                    q = H(k + 1, k - 1);
                    r = 0.0;
                    if (k + 1 != nn) r = H(k + 2, k - 1);
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x != 0.0) {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
                if (s == 0.0) continue;
                if (k == m) {
                    if (l != m) H(k, k - 1) = -H(k, k - 1);
                } else {
                    H(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for (int j = k; j <= nn; ++j) {
                    p = H(k, j) + q * H(k + 1, j);
                    if (k + 1 != nn) {
                        p += r * H(k + 2, j);
                        H(k + 2, j) -= p * z;
                    }
                    H(k + 1, j) -= p * y;
                    H(k, j) -= p * x;
                }
                const int mmin = nn < k + 3 ? nn : k + 3;
                for (int i = l; i <= mmin; ++i) {
                    p = x * H(i, k) + y * H(i, k + 1);
                    if (k + 1 != nn) {
                        p += z * H(i, k + 2);
                        H(i, k + 2) -= p * r;
                    }
                    H(i, k + 1) -= p * q;
                    H(i, k) -= p;
                }
            }
        } while (l + 1 < nn);
    }
    return eig;
}

}  // namespace detail

/// All eigenvalues of a small real matrix (n <= 16): balancing, Householder
/// Hessenberg reduction, then Francis double-shift QR.
inline std::vector<std::complex<double>> eigenvalues_small(const DenseMatrix& a) {
    if (!a.square()) throw DimensionError("eigenvalues_small: matrix is not square");
    if (a.rows() > 16) throw ConfigError("eigenvalues_small: n > 16 is not supported");
    if (!a.all_finite()) throw DomainError("eigenvalues_small: non-finite entries");
    if (a.rows() == 0) return {};
    DenseMatrix h = a;
    detail::balance(h);
    detail::hessenberg(h);
    return detail::hessenberg_qr(h);
}

inline double spectral_radius(const DenseMatrix& a) {
    double r = 0.0;
    for (const auto& z : eigenvalues_small(a)) r = std::max(r, std::abs(z));
    return r;
}

/// (B (x) H) v without forming the Kronecker product. `h_action(in, out)`
/// writes H*in into out for m-vectors; B is r x c, v has c*m entries.
template <typename HAction>
Vector kron_apply(const DenseMatrix& b, HAction&& h_action, std::size_t m, std::span<const double> v) {
    if (v.size() != b.cols() * m) throw DimensionError("kron_apply: vector length mismatch");
    Vector hv(v.size());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        h_action(v.subspan(j * m, m), std::span<double>(hv).subspan(j * m, m));
    }
    Vector out(b.rows() * m, 0.0);
    for (std::size_t i = 0; i < b.rows(); ++i) {
        double* oi = out.data() + i * m;
        for (std::size_t j = 0; j < b.cols(); ++j) {
            const double bij = b(i, j);
            if (bij == 0.0) continue;
            const double* hj = hv.data() + j * m;
            for (std::size_t t = 0; t < m; ++t) oi[t] += bij * hj[t];
        }
    }
    return out;
}

/// (B (x) I_m) v.
inline Vector kron_apply(const DenseMatrix& b, std::size_t m, std::span<const double> v) {
    return kron_apply(
        b, [](std::span<const double> in, std::span<double> out) { std::copy(in.begin(), in.end(), out.begin()); },
        m, v);
}

/// (B (x) H) v for an explicit m x m matrix H.
inline Vector kron_apply(const DenseMatrix& b, const DenseMatrix& h, std::span<const double> v) {
    if (!h.square()) throw DimensionError("kron_apply: H is not square");
    const std::size_t m = h.rows();
    return kron_apply(
        b,
        [&h, m](std::span<const double> in, std::span<double> out) {
            for (std::size_t i = 0; i < m; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += h(i, j) * in[j];
                out[i] = acc;
            }
        },
        m, v);
}

/// Explicit Kronecker product; used by tests and the direct Newton solver.
inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            for (std::size_t p = 0; p < b.rows(); ++p)
                for (std::size_t q = 0; q < b.cols(); ++q)
                    k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
    return k;
}

/// Solves [I + h2 * Ls (x) H] x = rhs by block forward substitution. Every
/// diagonal block is I + h2*d*H, whose factors are passed in `d_factors`, so a
/// single m x m factorization serves all s blocks.
inline Vector block_lower_triangular_solve(const DenseMatrix& ls, const DenseMatrix& h,
                                           const LUFactors& d_factors, double h2,
                                           std::span<const double> rhs) {
    const std::size_t s = ls.rows();
    const std::size_t m = h.rows();
    if (!ls.square() || !h.square()) throw DimensionError("block_lower_triangular_solve: non-square input");
    if (d_factors.size() != m) throw DimensionError("block_lower_triangular_solve: D_s size mismatch");
    if (rhs.size() != s * m) throw DimensionError("block_lower_triangular_solve: rhs length mismatch");

    Vector x(rhs.begin(), rhs.end());
    Vector hx(s * m, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
        std::span<double> xi(x.data() + i * m, m);
        for (std::size_t l = 0; l < i; ++l) {
            const double c = h2 * ls(i, l);
            if (c == 0.0) continue;
            const double* hl = hx.data() + l * m;
            for (std::size_t t = 0; t < m; ++t) xi[t] -= c * hl[t];
        }
        lu_solve_in_place(d_factors, xi);
        if (i + 1 < s) {
            for (std::size_t p = 0; p < m; ++p) {
                double acc = 0.0;
                for (std::size_t q = 0; q < m; ++q) acc += h(p, q) * xi[q];
                hx[i * m + p] = acc;
            }
        }
    }
    return x;
}

}  // namespace hbvm
