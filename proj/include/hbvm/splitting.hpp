#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"
#include "hbvm/legendre.hpp"
#include "hbvm/linalg.hpp"
#include "hbvm/tableau.hpp"

namespace hbvm {

struct CroutFactors {
    DenseMatrix L;  // lower triangular
    DenseMatrix U;  // upper triangular, unit diagonal
};

/// Crout factorization A = L U without pivoting, so the triangular structure
/// is that of A itself. Throws FactorizationError on a pivot below
/// 1e-14 * ||A||.
inline CroutFactors crout(const DenseMatrix& a) {
    if (!a.square()) throw DimensionError("crout: matrix is not square");
    const std::size_t n = a.rows();
    CroutFactors f{DenseMatrix(n, n), DenseMatrix::identity(n)};
    const double small = 1e-14 * a.norm_inf();
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = j; i < n; ++i) {
            double acc = a(i, j);
            for (std::size_t p = 0; p < j; ++p) acc -= f.L(i, p) * f.U(p, j);
            f.L(i, j) = acc;
        }
        const double pivot = f.L(j, j);
        if (!(std::abs(pivot) > small)) {
            throw FactorizationError("crout: vanishing pivot at row " + std::to_string(j));
        }
        for (std::size_t q = j + 1; q < n; ++q) {
            double acc = a(j, q);
            for (std::size_t p = 0; p < j; ++p) acc -= f.L(j, p) * f.U(p, q);
            f.U(j, q) = acc / pivot;
        }
    }
    return f;
}

/// Modified triangular splitting: A = Phat X_s^2 Phat^{-1} = L U with, for a
/// well-chosen set of auxiliary abscissae, every L_ii equal to d.
struct SplittingScheme {
    int s = 0;
    Vector chat;      // auxiliary abscissae, order significant
    DenseMatrix Phat;  // P_{j-1}(chat_i)
    DenseMatrix A;
    DenseMatrix L;
    DenseMatrix U;
    double d = 0.0;  // (det X_s^2)^(1/s)

    /// max_i |L_ii - d|
    double diagonal_deviation() const {
        double m = 0.0;
        for (std::size_t i = 0; i < L.rows(); ++i) m = std::max(m, std::abs(L(i, i) - d));
        return m;
    }
};

namespace detail {

// Orthonormal shifted Legendre values without the [0,1] guard; root-finding
// iterates may step outside the interval before coming back.
inline Vector legendre_values_any(int r, double x) {
    Vector p(static_cast<std::size_t>(r) + 1);
    p[0] = 1.0;
    if (r >= 1) p[1] = (x - 0.5) / xi(1);
    for (int j = 1; j < r; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        p[uj + 1] = ((x - 0.5) * p[uj] - j * xi(j) * p[uj - 1]) / ((j + 1) * xi(j + 1));
    }
    return p;
}

inline SplittingScheme assemble_scheme(int s, const Vector& chat) {
    const auto n = static_cast<std::size_t>(s);
    SplittingScheme sc;
    sc.s = s;
    sc.chat = chat;
    sc.Phat = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(chat[i])) throw DegenerateAbscissaeError("build_scheme: non-finite abscissa");
        const Vector v = legendre_values_any(s - 1, chat[i]);
        for (std::size_t j = 0; j < n; ++j) sc.Phat(i, j) = v[j];
    }
    LUFactors phat_t;
    try {
        phat_t = lu_factor(sc.Phat.transpose());
    } catch (const SingularMatrixError&) {
        throw DegenerateAbscissaeError("build_scheme: auxiliary Legendre matrix is singular");
    }
    // 1-norm of Phat^{-1} equals the inf-norm of Phat^{-T}.
    const double cond = sc.Phat.norm_one() * inverse(phat_t).norm_inf();
    if (!(cond <= 1e12)) {
        throw DegenerateAbscissaeError("build_scheme: auxiliary abscissae are nearly coincident");
    }
    const DenseMatrix x = make_X(s);
    const DenseMatrix x2 = x * x;
    // A^T = Phat^{-T} (Phat X^2)^T
    sc.A = lu_solve(phat_t, (sc.Phat * x2).transpose()).transpose();
    CroutFactors f = crout(sc.A);
    sc.L = std::move(f.L);
    sc.U = std::move(f.U);
    sc.d = diagonal_entry(s);
    return sc;
}

}  // namespace detail

/// Builds A_s and its Crout factors for an arbitrary ordered set of auxiliary
/// abscissae in [0,1]. The constant-diagonal property is not enforced.
inline SplittingScheme build_scheme(int s, const Vector& chat) {
    if (s < 1) throw ConfigError("build_scheme: s must be positive");
    if (chat.size() != static_cast<std::size_t>(s)) {
        throw DimensionError("build_scheme: expected " + std::to_string(s) + " abscissae");
    }
    for (double c : chat) detail::check_unit_interval(c, "build_scheme");
    return detail::assemble_scheme(s, chat);
}

inline constexpr int kMinBuiltinStages = 2;
inline constexpr int kMaxBuiltinStages = 6;

/// Published optimal auxiliary abscissae, in their defining order.
inline Vector published_abscissae(int s) {
    switch (s) {
        case 2:
            return {0.3, 1.0};
        case 3:
            return {0.184464928775305737265558103045646778, 0.355206619967670337592124663758030473, 0.11};
        case 4:
            return {0.121426360154302109549573710053503842, 0.321983015309146534767025518371538042,
                    0.556746651956821737853056260425394287, 0.0669};
        case 5:
            return {0.112021061643484468967447207878165951, 0.250642318747930116818386585660135569,
                    0.468530060432028509730164673409742649, 0.549585424388219061926710294932774144, 0.8432};
        case 6:
            return {0.0248310778562588151037629089054186400, 0.0810927467455591556136430071800859819,
                    0.164842169836300745621531627379110494,  0.286473972582812178906454295119846077,
                    0.822252930294509663636743142004393542,  0.43621};
        default:
            throw ConfigError("builtin scheme: s must be in 2..6, got " + std::to_string(s));
    }
}

/// Published diagonal entry d_s of L_s.
inline double published_diagonal(int s) {
    switch (s) {
        case 2: return 1.0 / 12.0;
        case 3: return 0.0411035345721745016915268553859098174;
        case 4: return 0.0243975018237133294838596159060025047;
        case 5: return 0.0161349374182782642725304938088289256;
        case 6: return 0.0114550901343208942220264712822213470;
        default:
            throw ConfigError("builtin scheme: s must be in 2..6, got " + std::to_string(s));
    }
}

inline SplittingScheme builtin_scheme(int s) { return build_scheme(s, published_abscissae(s)); }

// --------------------------------------------------------------------------
// Auxiliary abscissae as a function of the last one

struct RootFindOptions {
    int max_iterations = 100;
    double fd_step = 1e-7;
    int max_halvings = 30;
    double accept_tol = 1e-12;   // required max |L_ii - d|, i < s
    double target_tol = 1e-14;   // stop early once below this
};

namespace detail {

inline double diagonal_residual(int s, const Vector& leading, double chat_last, double d, Vector& out) {
    Vector chat(leading);
    chat.push_back(chat_last);
    try {
        const SplittingScheme sc = assemble_scheme(s, chat);
        for (std::size_t i = 0; i + 1 < static_cast<std::size_t>(s); ++i) out[i] = sc.L(i, i) - d;
    } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
    }
    const double n = norm_inf(out);
    return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Solves for chat_1..chat_{s-1} so that the first s-1 diagonal entries of the
/// Crout factor L equal d_s; the last one then follows from det A = d_s^s.
/// Damped Newton with a forward-difference Jacobian.
inline Vector solve_auxiliary_abscissae(int s, double chat_last, const Vector& guess,
                                        const RootFindOptions& opt = {}) {
    if (s < 1) throw ConfigError("solve_auxiliary_abscissae: s must be positive");
    const auto n = static_cast<std::size_t>(s - 1);
    if (guess.size() != n) {
        throw DimensionError("solve_auxiliary_abscissae: guess must have s-1 entries");
    }
    if (n == 0) return {};
    const double d = diagonal_entry(s);

    Vector x = guess;
    Vector r(n);
    double nr = detail::diagonal_residual(s, x, chat_last, d, r);
    if (!std::isfinite(nr)) {
        throw RootFindingError("solve_auxiliary_abscissae: initial guess gives no valid scheme", nr);
    }

    Vector rt(n), xt(n), col(n);
    DenseMatrix jac(n, n);
    for (int it = 0; it < opt.max_iterations && nr > opt.target_tol; ++it) {
        bool jac_ok = true;
        for (std::size_t j = 0; j < n && jac_ok; ++j) {
            xt = x;
            const double step = opt.fd_step * std::max(1.0, std::abs(x[j]));
            xt[j] += step;
            if (!std::isfinite(detail::diagonal_residual(s, xt, chat_last, d, col))) {
                jac_ok = false;
                break;
            }
            for (std::size_t i = 0; i < n; ++i) jac(i, j) = (col[i] - r[i]) / step;
        }
        if (!jac_ok) break;

        Vector dx;
        try {
            dx = lu_solve(lu_factor(jac), r);
        } catch (const SingularMatrixError&) {
            break;
        }
        double lambda = 1.0;
        bool accepted = false;
        for (int hv = 0; hv <= opt.max_halvings; ++hv, lambda *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] - lambda * dx[i];
            const double nt = detail::diagonal_residual(s, xt, chat_last, d, rt);
            if (nt < nr) {
                x = xt;
                r = rt;
                nr = nt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (!(nr <= opt.accept_tol)) {
        throw RootFindingError("solve_auxiliary_abscissae: no convergence, residual " + std::to_string(nr), nr);
    }
    return x;
}

// --------------------------------------------------------------------------
// Linear convergence analysis on y'' = -mu^2 y, x = h mu

/// M(x^2) = x^2 (I + x^2 L)^{-1} L (I - U), by forward substitution.
inline DenseMatrix amplification_matrix(const SplittingScheme& sc, double x2) {
    if (!(x2 >= 0.0)) throw DomainError("amplification_matrix: x^2 must be nonnegative");
    const std::size_t n = sc.L.rows();
    const DenseMatrix rhs = x2 * (sc.L * (DenseMatrix::identity(n) - sc.U));
    DenseMatrix m(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = rhs(i, col);
            for (std::size_t p = 0; p < i; ++p) acc -= x2 * sc.L(i, p) * m(p, col);
            m(i, col) = acc / (1.0 + x2 * sc.L(i, i));
        }
    }
    return m;
}

/// rho(x^2), spectral radius of the amplification matrix.
inline double amplification_factor(const SplittingScheme& sc, double x2) {
    return spectral_radius(amplification_matrix(sc, x2));
}

struct ConvergenceProfile {
    double rho_star = 0.0;       // max over x >= 0 of rho(x^2)
    double rho_tilde = 0.0;      // rho(x^2) ~ rho_tilde x^2 as x -> 0
    double rho_tilde_inf = 0.0;  // rho(x^2) ~ rho_tilde_inf |x|^{-2/(s-1)} as |x| -> inf
    double x_star = 0.0;
};

struct ProfileOptions {
    double x_min = 1e-3;
    double x_max = 1e4;
    int grid_points = 2000;
    double refine_tol = 1e-10;
};

/// Log-spaced sample points in [x_min, x_max].
inline Vector log_grid(double x_min, double x_max, int points) {
    Vector xs(static_cast<std::size_t>(points));
    const double a = std::log(x_min), b = std::log(x_max);
    for (int i = 0; i < points; ++i) {
        xs[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / std::max(1, points - 1));
    }
    return xs;
}

namespace detail {

// Golden-section search for a maximum of f on [a, b].
template <typename F>
std::pair<double, double> golden_max(F&& f, double a, double b, double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

}  // namespace detail

inline ConvergenceProfile convergence_profile(const SplittingScheme& sc, const ProfileOptions& opt = {}) {
    ConvergenceProfile prof;
    const std::size_t n = sc.L.rows();
    prof.rho_tilde = spectral_radius(sc.L * (DenseMatrix::identity(n) - sc.U));

    const Vector xs = log_grid(opt.x_min, opt.x_max, opt.grid_points);
    std::size_t best = 0;
    double best_rho = -1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = amplification_factor(sc, xs[i] * xs[i]);
        if (r > best_rho) {
            best_rho = r;
            best = i;
        }
    }
    prof.rho_star = best_rho;
    prof.x_star = xs[best];
    const double lo = xs[best == 0 ? 0 : best - 1];
    const double hi = xs[std::min(best + 1, xs.size() - 1)];
    if (hi > lo) {
        const auto [xr, rr] =
            detail::golden_max([&](double x) { return amplification_factor(sc, x * x); }, lo, hi, opt.refine_tol);
        if (rr > prof.rho_star) {
            prof.rho_star = rr;
            prof.x_star = xr;
        }
    }

    if (sc.s >= 2) {
        const double expo = 2.0 / (sc.s - 1);
        std::array<double, 3> tail{};
        const std::array<double, 3> xt{1e5, 1e6, 1e7};
        for (std::size_t i = 0; i < 3; ++i) tail[i] = std::pow(xt[i], expo) * amplification_factor(sc, xt[i] * xt[i]);
        std::sort(tail.begin(), tail.end());
        prof.rho_tilde_inf = tail[1];
    }
    return prof;
}

/// Max of rho(x^2) over a coarse log grid; a cheap screen for root selection.
inline double coarse_rho_star(const SplittingScheme& sc, int points = 200) {
    double r = 0.0;
    for (double x : log_grid(1e-3, 1e4, points)) r = std::max(r, amplification_factor(sc, x * x));
    return r;
}

// --------------------------------------------------------------------------
// Choice of the last auxiliary abscissa

struct OptimizeOptions {
    double grid_step = 1e-3;
    double refine_tol = 1e-5;
    int random_seeds = 16;
    std::uint64_t seed = 20130601;
    RootFindOptions cold_root{40, 1e-7, 20, 1e-12, 1e-14};
};

struct OptimizedScheme {
    double chat_last = 0.0;
    SplittingScheme scheme;
    ConvergenceProfile profile;
    int candidates = 0;
    int skipped = 0;
};

namespace detail {

// Abscissae are accepted when they lie in [0,1], are pairwise distinct, and
// the first s-1 are increasing; only the last one may be out of order.
inline bool admissible(const Vector& leading, double last) {
    for (std::size_t i = 0; i < leading.size(); ++i) {
        if (!(leading[i] >= 0.0 && leading[i] <= 1.0)) return false;
        if (std::abs(leading[i] - last) < 1e-6) return false;
        if (i > 0 && !(leading[i] - leading[i - 1] > 1e-6)) return false;
    }
    return true;
}

inline std::vector<Vector> starting_guesses(int s, const OptimizeOptions& opt) {
    const auto n = static_cast<std::size_t>(s - 1);
    std::vector<Vector> seeds;
    if (n == 0) return seeds;
    seeds.push_back(gauss_rule(s - 1).c);
    Vector uniform(n);
    for (std::size_t i = 0; i < n; ++i) uniform[i] = (i + 1.0) / (n + 1.0);
    seeds.push_back(uniform);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int k = 0; k < opt.random_seeds; ++k) {
        Vector v(n);
        for (auto& x : v) x = u(rng);
        std::sort(v.begin(), v.end());
        seeds.push_back(v);
    }
    return seeds;
}

}  // namespace detail

/// Distinct admissible constant-diagonal schemes with the given last abscissa,
/// reached from `extra` guesses first and then the standard seed set.
inline std::vector<SplittingScheme> auxiliary_roots(int s, double chat_last, const std::vector<Vector>& extra = {},
                                                    const OptimizeOptions& opt = {}) {
    std::vector<Vector> found;
    std::vector<SplittingScheme> out;
    auto try_guess = [&](const Vector& g, const RootFindOptions& ro) {
        try {
            Vector sol = solve_auxiliary_abscissae(s, chat_last, g, ro);
            if (!detail::admissible(sol, chat_last)) return;
            for (const auto& f : found)
                if (max_abs_diff(std::span<const double>(f), std::span<const double>(sol)) < 1e-8) return;
            Vector chat = sol;
            chat.push_back(chat_last);
            SplittingScheme sc = build_scheme(s, chat);
            found.push_back(std::move(sol));
            out.push_back(std::move(sc));
        } catch (const Error&) {
        }
    };
    for (const auto& g : extra) try_guess(g, RootFindOptions{});
    for (const auto& g : detail::starting_guesses(s, opt)) try_guess(g, opt.cold_root);
    return out;
}

/// Recomputes the auxiliary abscissae for a given last one from cold starts
/// only, keeping the root with the smallest maximum amplification factor.
inline SplittingScheme regenerate_scheme(int s, double chat_last, int random_seeds = 400) {
    if (s < 1) throw ConfigError("regenerate_scheme: s must be positive");
    if (s == 1) return build_scheme(1, {chat_last});
    OptimizeOptions opt;
    opt.random_seeds = random_seeds;
    auto roots = auxiliary_roots(s, chat_last, {}, opt);
    if (roots.empty()) {
        throw RootFindingError("regenerate_scheme: no admissible abscissae found",
                               std::numeric_limits<double>::infinity());
    }
    std::size_t best = 0;
    double best_rho = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double r = coarse_rho_star(roots[i]);
        if (r < best_rho) {
            best_rho = r;
            best = i;
        }
    }
    return roots[best];
}

namespace detail {

struct Candidate {
    double chat_last;
    SplittingScheme scheme;
    double rho_star;
};

inline std::optional<Candidate> best_candidate(int s, double cs, const std::vector<Vector>& warm,
                                               const OptimizeOptions& opt) {
    auto roots = auxiliary_roots(s, cs, warm, opt);
    if (roots.empty()) return std::nullopt;
    std::size_t best = 0;
    double best_r = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double r = coarse_rho_star(roots[i]);
        if (r < best_r) {
            best_r = r;
            best = i;
        }
    }
    const double rho = convergence_profile(roots[best]).rho_star;
    return Candidate{cs, std::move(roots[best]), rho};
}

inline Vector leading_of(const SplittingScheme& sc) {
    return Vector(sc.chat.begin(), sc.chat.end() - 1);
}

}  // namespace detail

/// Scans the last auxiliary abscissa over (0,1] and returns the scheme that
/// minimizes the maximum amplification factor. Each grid point solves for the
/// remaining abscissae from the previous optimum and from a fixed seed set,
/// keeping the best admissible root; the grid minimum is then refined by
/// golden section along its root branch.
inline OptimizedScheme optimize_last_abscissa(int s, const OptimizeOptions& opt = {}) {
    if (s < kMinBuiltinStages || s > kMaxBuiltinStages) {
        throw ConfigError("optimize_last_abscissa: s must be in 2..6, got " + std::to_string(s));
    }
    OptimizedScheme res;
    std::optional<detail::Candidate> best;
    std::vector<Vector> warm;
    // Scan downward from chat_s = 1; a candidate replaces the incumbent only on
    // a relative improvement above 1e-9, so exact ties keep the larger chat_s.
    const int steps = static_cast<int>(std::lround(1.0 / opt.grid_step));
    for (int j = steps; j >= 1; --j) {
        const double cs = j * opt.grid_step;
        ++res.candidates;
        auto cand = detail::best_candidate(s, cs, warm, opt);
        if (!cand) {
            ++res.skipped;
            continue;
        }
        warm = {detail::leading_of(cand->scheme)};
        if (!best || cand->rho_star < best->rho_star * (1.0 - 1e-9)) best = std::move(cand);
    }
    if (!best) throw OptimizationError("optimize_last_abscissa: no admissible scheme on the grid");

    const Vector branch = detail::leading_of(best->scheme);
    auto rho_at = [&](double cs) {
        if (!(cs > 0.0 && cs <= 1.0)) return std::numeric_limits<double>::infinity();
        try {
            Vector lead = solve_auxiliary_abscissae(s, cs, branch);
            if (!detail::admissible(lead, cs)) return std::numeric_limits<double>::infinity();
            lead.push_back(cs);
            return convergence_profile(build_scheme(s, lead)).rho_star;
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const double lo = std::max(best->chat_last - opt.grid_step, 1e-12);
    const double hi = std::min(best->chat_last + opt.grid_step, 1.0);
    const auto [c_ref, neg_rho] = detail::golden_max([&](double c) { return -rho_at(c); }, lo, hi, opt.refine_tol);
    double chosen = best->chat_last;
    if (-neg_rho < best->rho_star * (1.0 - 1e-9)) chosen = c_ref;

    Vector lead = solve_auxiliary_abscissae(s, chosen, branch);
    lead.push_back(chosen);
    res.chat_last = chosen;
    res.scheme = build_scheme(s, lead);
    res.profile = convergence_profile(res.scheme);
    return res;
}

/// Best admissible constant-diagonal scheme with chat_s = 1.
inline SplittingScheme scheme_at_one(int s) {
    if (s < kMinBuiltinStages || s > kMaxBuiltinStages) {
        throw ConfigError("rho_star_at_one: s must be in 2..6, got " + std::to_string(s));
    }
    auto roots = auxiliary_roots(s, 1.0);
    if (roots.empty()) {
        throw RootFindingError("rho_star_at_one: no admissible abscissae with chat_s = 1",
                               std::numeric_limits<double>::infinity());
    }
    std::size_t best = 0;
    double best_r = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double r = convergence_profile(roots[i]).rho_star;
        if (r < best_r) {
            best_r = r;
            best = i;
        }
    }
    return roots[best];
}

inline double rho_star_at_one(int s) { return convergence_profile(scheme_at_one(s)).rho_star; }

}  // namespace hbvm
