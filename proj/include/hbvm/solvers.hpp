#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"
#include "hbvm/linalg.hpp"
#include "hbvm/problems.hpp"
#include "hbvm/splitting.hpp"
#include "hbvm/tableau.hpp"

namespace hbvm {

enum class SolverMode { fixed_point, newton_direct, newton_splitting };

inline std::string_view to_string(SolverMode m) {
    switch (m) {
        case SolverMode::fixed_point: return "fixed-point";
        case SolverMode::newton_direct: return "newton-direct";
        case SolverMode::newton_splitting: return "splitting";
    }
    return "?";
}

/// Accepts the CLI spellings (fixed-point, newton-direct, splitting) and the
/// enumerator names.
inline SolverMode parse_solver_mode(std::string_view name) {
    if (name == "fixed-point" || name == "fixed_point" || name == "fp") return SolverMode::fixed_point;
    if (name == "newton-direct" || name == "newton_direct" || name == "newton") return SolverMode::newton_direct;
    if (name == "splitting" || name == "newton-splitting" || name == "newton_splitting") {
        return SolverMode::newton_splitting;
    }
    throw ConfigError("unknown solver '" + std::string(name) + "'");
}

struct SolverConfig {
    SolverMode mode = SolverMode::newton_splitting;
    double tol = 1e-12;
    int max_outer = 100;
    int nu = 2;
    double divergence_bound = 1e8;
    int growth_limit = 10;  // consecutive residual increases treated as divergence

    void validate() const {
        if (!(tol > 0.0)) throw ConfigError("solver: tol must be positive");
        if (max_outer < 1) throw ConfigError("solver: max_outer must be >= 1");
        if (nu < 1) throw ConfigError("solver: nu must be >= 1");
        if (!(divergence_bound > 0.0)) throw ConfigError("solver: divergence_bound must be positive");
        if (growth_limit < 1) throw ConfigError("solver: growth_limit must be >= 1");
    }
};

/// Work counters. "Small" operations act on m x m blocks, "full" ones on the
/// sm x sm Newton matrix.
struct CostCounters {
    long long grad_evals = 0;  // single-point gradient evaluations
    long long hess_evals = 0;
    long long small_factorizations = 0;
    long long small_solves = 0;
    long long full_factorizations = 0;
    long long full_solves = 0;

    CostCounters& operator+=(const CostCounters& o) {
        grad_evals += o.grad_evals;
        hess_evals += o.hess_evals;
        small_factorizations += o.small_factorizations;
        small_solves += o.small_solves;
        full_factorizations += o.full_factorizations;
        full_solves += o.full_solves;
        return *this;
    }
};

struct SolveStats {
    int outer_iters = 0;
    long long inner_iters = 0;
    bool converged = false;
    bool diverged = false;
    double final_residual = 0.0;
    std::vector<double> residual_history;  // ||F(gamma^j)||_inf, j = 0, 1, ...
    CostCounters cost;
    std::string message;
};

/// Data of the stage equation for one step from (q0, p0).
struct StageProblem {
    const TableauSet* tableau = nullptr;
    const SplittingScheme* scheme = nullptr;
    const SeparableSystem* system = nullptr;
    Vector q0;
    Vector p0;
    double h = 0.0;
    DenseMatrix C;          // P_{s+1} Xhat_s X_s
    DenseMatrix W;          // P_s^T Omega
    DenseMatrix X2;         // X_s^2
    DenseMatrix Phat_inv;   // only with a scheme

    StageProblem(const TableauSet& t, const SeparableSystem& sys, const SplittingScheme* sc = nullptr)
        : tableau(&t), scheme(sc), system(&sys), C(t.stage_coefficients()), W(t.projection()),
          X2(t.X_s * t.X_s) {
        if (sc != nullptr) {
            if (sc->s != t.s) throw ConfigError("StageProblem: scheme has s=" + std::to_string(sc->s) +
                                                ", tableau has s=" + std::to_string(t.s));
            Phat_inv = inverse(lu_factor(sc->Phat));
        }
    }

    StageProblem(const TableauSet& t, const SeparableSystem& sys, std::span<const double> q, std::span<const double> p,
                 double step, const SplittingScheme* sc = nullptr)
        : StageProblem(t, sys, sc) {
        reset(q, p, step);
    }

    /// Re-targets the problem at a new initial state and stepsize.
    void reset(std::span<const double> q, std::span<const double> p, double step) {
        if (q.size() != system->dim() || p.size() != system->dim()) {
            throw DimensionError("StageProblem: state dimension does not match the system");
        }
        if (!std::isfinite(step)) throw DomainError("StageProblem: stepsize is not finite");
        q0.assign(q.begin(), q.end());
        p0.assign(p.begin(), p.end());
        h = step;
    }

    std::size_t m() const { return system->dim(); }
    std::size_t s() const { return static_cast<std::size_t>(tableau->s); }
    std::size_t k() const { return static_cast<std::size_t>(tableau->k); }
};

/// Q = e (x) q0 + h c (x) p0 - h^2 (C (x) I) gamma.
inline Vector reconstruct_stages(const StageProblem& sp, std::span<const double> gamma) {
    const std::size_t m = sp.m(), k = sp.k();
    if (gamma.size() != sp.s() * m) throw DimensionError("reconstruct_stages: gamma has wrong length");
    Vector q = kron_apply(sp.C, m, gamma);
    const double h2 = sp.h * sp.h;
    const auto& c = sp.tableau->rule.c;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t t = 0; t < m; ++t) q[i * m + t] = sp.q0[t] + sp.h * c[i] * sp.p0[t] - h2 * q[i * m + t];
    return q;
}

struct Residual {
    Vector F;      // s*m
    Vector gradU;  // k*m, gradient at each stage
};

/// F(gamma) = gamma - (P_s^T Omega (x) I) grad U(Q(gamma)).
inline Residual eval_F(const StageProblem& sp, std::span<const double> gamma) {
    const std::size_t m = sp.m(), k = sp.k();
    const Vector q = reconstruct_stages(sp, gamma);
    Residual r;
    r.gradU.assign(k * m, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        sp.system->gradient(std::span<const double>(q).subspan(i * m, m),
                            std::span<double>(r.gradU).subspan(i * m, m));
    }
    for (double g : r.gradU)
        if (!std::isfinite(g)) throw EvaluationError("eval_F: non-finite potential gradient at a stage");
    r.F = kron_apply(sp.W, m, r.gradU);
    for (std::size_t j = 0; j < r.F.size(); ++j) r.F[j] = gamma[j] - r.F[j];
    return r;
}

/// Inner splitting machinery for one step: H = hess U(q0), the factors of
/// D_s = I + h^2 d_s H, and L_s - A_s.
struct SplittingWorkspace {
    DenseMatrix H;
    LUFactors D;
    DenseMatrix LminusA;
    double h2 = 0.0;

    /// One sweep of [I + h^2 L (x) H] x_new = h^2 (L - A) (x) H x + eta.
    Vector sweep(const StageProblem& sp, std::span<const double> x, std::span<const double> eta,
                 bool x_is_zero = false) const {
        Vector rhs(eta.begin(), eta.end());
        if (!x_is_zero) {
            const Vector t = kron_apply(LminusA, H, x);
            for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] += h2 * t[j];
        }
        return block_lower_triangular_solve(sp.scheme->L, H, D, h2, rhs);
    }
};

inline SplittingWorkspace make_splitting_workspace(const StageProblem& sp, CostCounters* cost = nullptr) {
    if (sp.scheme == nullptr) throw ConfigError("splitting solver needs a splitting scheme");
    SplittingWorkspace ws;
    ws.H = sp.system->hessian(sp.q0);
    ws.h2 = sp.h * sp.h;
    const std::size_t m = sp.m();
    DenseMatrix d = DenseMatrix::identity(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) d(i, j) += ws.h2 * sp.scheme->d * ws.H(i, j);
    ws.D = lu_factor(d);
    ws.LminusA = sp.scheme->L - sp.scheme->A;
    if (cost != nullptr) {
        cost->hess_evals += 1;
        cost->small_factorizations += 1;
    }
    return ws;
}

namespace detail {

/// Shared outer loop. `update(r, gamma, stats)` returns the correction for
/// the current residual.
template <typename Update>
Vector outer_loop(const StageProblem& sp, const SolverConfig& cfg, SolveStats& st, Update&& update,
                  std::optional<Vector> gamma0, Residual* last = nullptr) {
    const std::size_t n = sp.s() * sp.m();
    Vector gamma = gamma0 ? std::move(*gamma0) : Vector(n, 0.0);
    if (gamma.size() != n) throw DimensionError("solver: initial gamma has wrong length");

    auto evaluate = [&](Residual& out) {
        try {
            out = eval_F(sp, gamma);
        } catch (const EvaluationError& e) {
            st.diverged = true;
            st.message = e.what();
            return false;
        }
        st.cost.grad_evals += static_cast<long long>(sp.k());
        return true;
    };

    Residual r;
    if (!evaluate(r)) return gamma;
    int growth = 0;
    for (;;) {
        const double res = norm_inf(r.F);
        st.residual_history.push_back(res);
        st.final_residual = res;
        if (!std::isfinite(res)) {
            st.diverged = true;
            st.message = "non-finite residual";
            break;
        }
        if (res <= cfg.tol && st.outer_iters >= 1) {
            st.converged = true;
            break;
        }
        if (norm_inf(gamma) > cfg.divergence_bound) {
            st.diverged = true;
            st.message = "iterate exceeded divergence bound";
            break;
        }
        const auto& hist = st.residual_history;
        if (hist.size() >= 2 && res > hist[hist.size() - 2]) {
            if (++growth >= cfg.growth_limit) {
                st.diverged = true;
                st.message = "residual grew for " + std::to_string(growth) + " consecutive iterations";
                break;
            }
        } else {
            growth = 0;
        }
        if (st.outer_iters >= cfg.max_outer) {
            st.message = "max_outer reached";
            break;
        }
        const Vector delta = update(r);
        for (std::size_t j = 0; j < n; ++j) gamma[j] += delta[j];
        ++st.outer_iters;
        if (!evaluate(r)) break;
    }
    if (last != nullptr) *last = std::move(r);
    return gamma;
}

}  // namespace detail

struct SolveOutput {
    Vector gamma;
    SolveStats stats;
    Residual last;  // F and grad U at the returned gamma
};

/// gamma^{j+1} = (P_s^T Omega (x) I) grad U(Q(gamma^j)), i.e. gamma - F(gamma).
inline SolveOutput fixed_point_solve(const StageProblem& sp, const SolverConfig& cfg,
                                     std::optional<Vector> gamma0 = std::nullopt) {
    cfg.validate();
    SolveOutput out;
    out.gamma = detail::outer_loop(
        sp, cfg, out.stats,
        [](const Residual& r) {
            Vector d(r.F.size());
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = -r.F[j];
            return d;
        },
        std::move(gamma0), &out.last);
    return out;
}

/// Simplified Newton with the matrix I + h^2 X_s^2 (x) hess U(q0), factored once.
inline SolveOutput newton_direct_solve(const StageProblem& sp, const SolverConfig& cfg,
                                       std::optional<Vector> gamma0 = std::nullopt) {
    cfg.validate();
    SolveOutput out;
    const DenseMatrix H = sp.system->hessian(sp.q0);
    DenseMatrix J = (sp.h * sp.h) * kron(sp.X2, H);
    for (std::size_t i = 0; i < J.rows(); ++i) J(i, i) += 1.0;
    const LUFactors f = lu_factor(J);
    out.stats.cost.hess_evals += 1;
    out.stats.cost.full_factorizations += 1;
    out.gamma = detail::outer_loop(
        sp, cfg, out.stats,
        [&](const Residual& r) {
            Vector d(r.F.size());
            for (std::size_t j = 0; j < d.size(); ++j) d[j] = -r.F[j];
            lu_solve_in_place(f, d);
            out.stats.cost.full_solves += 1;
            return d;
        },
        std::move(gamma0), &out.last);
    return out;
}

/// Simplified Newton whose linear systems are approximated by nu sweeps of
/// the triangular splitting in the transformed variables Delta_hat = (Phat (x) I) Delta.
inline SolveOutput splitting_solve(const StageProblem& sp, const SolverConfig& cfg,
                                   std::optional<Vector> gamma0 = std::nullopt) {
    cfg.validate();
    SolveOutput out;
    const SplittingWorkspace ws = make_splitting_workspace(sp, &out.stats.cost);
    const std::size_t m = sp.m();
    const auto s = static_cast<long long>(sp.s());
    out.gamma = detail::outer_loop(
        sp, cfg, out.stats,
        [&](const Residual& r) {
            Vector eta = kron_apply(sp.scheme->Phat, m, r.F);
            for (double& v : eta) v = -v;
            Vector dh = ws.sweep(sp, {}, eta, true);
            for (int l = 1; l < cfg.nu; ++l) dh = ws.sweep(sp, dh, eta);
            out.stats.inner_iters += cfg.nu;
            out.stats.cost.small_solves += s * cfg.nu;
            return kron_apply(sp.Phat_inv, m, dh);
        },
        std::move(gamma0), &out.last);
    return out;
}

inline SolveOutput solve_stage_equation(const StageProblem& sp, const SolverConfig& cfg,
                                        std::optional<Vector> gamma0 = std::nullopt) {
    switch (cfg.mode) {
        case SolverMode::fixed_point: return fixed_point_solve(sp, cfg, std::move(gamma0));
        case SolverMode::newton_direct: return newton_direct_solve(sp, cfg, std::move(gamma0));
        case SolverMode::newton_splitting: return splitting_solve(sp, cfg, std::move(gamma0));
    }
    throw ConfigError("unknown solver mode");
}

/// q1 = q0 + h (b^T (x) I) P, p1 = p0 - h (b^T (x) I) grad U(Q), with the
/// stage momenta P = e (x) p0 - h (I_s (x) I) gamma.
inline std::pair<Vector, Vector> finalize_step(const StageProblem& sp, std::span<const double> gamma,
                                               std::span<const double> grad_stages) {
    const std::size_t m = sp.m(), k = sp.k();
    const auto& b = sp.tableau->rule.b;
    const Vector ig = kron_apply(sp.tableau->I_s, m, gamma);
    Vector q1 = sp.q0, p1 = sp.p0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t t = 0; t < m; ++t) {
            const double stage_p = sp.p0[t] - sp.h * ig[i * m + t];
            q1[t] += sp.h * b[i] * stage_p;
            p1[t] -= sp.h * b[i] * grad_stages[i * m + t];
        }
    }
    return {q1, p1};
}

/// Same update with the stage momenta from the Butcher form
/// P = e (x) p0 - h (A (x) I) grad U(Q).
inline std::pair<Vector, Vector> finalize_step_butcher(const StageProblem& sp, std::span<const double> grad_stages) {
    const std::size_t m = sp.m(), k = sp.k();
    const auto& b = sp.tableau->rule.b;
    const Vector ag = kron_apply(sp.tableau->butcher_A, m, grad_stages);
    Vector q1 = sp.q0, p1 = sp.p0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t t = 0; t < m; ++t) {
            const double stage_p = sp.p0[t] - sp.h * ag[i * m + t];
            q1[t] += sp.h * b[i] * stage_p;
            p1[t] -= sp.h * b[i] * grad_stages[i * m + t];
        }
    }
    return {q1, p1};
}

struct StepResult {
    Vector q1;
    Vector p1;
    Vector gamma;
    int outer_iters = 0;
    long long inner_iters = 0;
    bool converged = false;
    double final_residual = 0.0;
    SolveStats stats;
};

/// Solves the stage equation for sp and, on convergence, advances the state.
inline StepResult solve_step(const StageProblem& sp, const SolverConfig& cfg,
                             std::optional<Vector> gamma0 = std::nullopt) {
    SolveOutput o = solve_stage_equation(sp, cfg, std::move(gamma0));
    StepResult r;
    r.outer_iters = o.stats.outer_iters;
    r.inner_iters = o.stats.inner_iters;
    r.converged = o.stats.converged;
    r.final_residual = o.stats.final_residual;
    if (r.converged) std::tie(r.q1, r.p1) = finalize_step(sp, o.gamma, o.last.gradU);
    r.gamma = std::move(o.gamma);
    r.stats = std::move(o.stats);
    return r;
}

}  // namespace hbvm
