#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"
#include "hbvm/problems.hpp"
#include "hbvm/solvers.hpp"
#include "hbvm/splitting.hpp"
#include "hbvm/tableau.hpp"

namespace hbvm {

struct RunConfig {
    int k = 4;
    int s = 2;
    double t_end = 10.0;
    double h = 0.1;
    SolverConfig solver;
    int record_every = 1;
    // Splitting scheme override; the builtin scheme for s is used otherwise.
    std::shared_ptr<const SplittingScheme> scheme;
    // Start each step's iteration from the previous step's gamma instead of 0.
    bool warm_start = false;

    void validate() const {
        if (s < 1 || k < s || k > kMaxGaussNodes) {
            throw ConfigError("run: need 1 <= s <= k <= 64, got k=" + std::to_string(k) + ", s=" + std::to_string(s));
        }
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("run: t_end must be positive");
        if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("run: h must be positive");
        if (record_every < 1) throw ConfigError("run: record_every must be >= 1");
        solver.validate();
    }
};

/// Number of whole steps of size h in [0, t_end]. Ratios within a few ulps of
/// an integer are rounded; otherwise the count is truncated and `adjusted` set.
inline long long step_count(double t_end, double h, bool* adjusted = nullptr) {
    const double n = t_end / h;
    const double r = std::round(n);
    const bool whole = std::abs(n - r) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, r);
    if (adjusted != nullptr) *adjusted = !whole;
    return static_cast<long long>(whole ? r : std::floor(n));
}

struct Snapshot {
    double t = 0.0;
    Vector q;
    Vector p;
};

enum class RunStatus { completed, diverged, failed };

inline std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::diverged: return "diverged";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

struct RunStats {
    long long steps = 0;  // completed steps
    long long total_outer = 0;
    long long total_inner = 0;
    long long failed_steps = 0;
    double energy_drift_max = 0.0;  // max |H_n - H_0| / max(1, |H_0|)
    std::chrono::nanoseconds wall_time{0};
    std::vector<int> per_step_outer;
    CostCounters cost;
    RunStatus status = RunStatus::completed;
    bool t_end_adjusted = false;
    std::string message;

    bool converged() const { return status == RunStatus::completed; }
    double wall_ms() const { return std::chrono::duration<double, std::milli>(wall_time).count(); }
};

struct RunResult {
    std::vector<Snapshot> trajectory;
    RunStats stats;
};

/// Splitting scheme used for an s-stage run when none is given.
inline std::shared_ptr<const SplittingScheme> default_scheme(int s) {
    if (s == 1) return std::make_shared<const SplittingScheme>(build_scheme(1, {1.0}));
    if (s >= kMinBuiltinStages && s <= kMaxBuiltinStages) {
        return std::make_shared<const SplittingScheme>(builtin_scheme(s));
    }
    throw ConfigError("no builtin splitting scheme for s=" + std::to_string(s));
}

/// Advances (q0, p0) by round(t_end / h) steps of HBVM(k, s). A step whose
/// iteration fails to converge stops the run with status `diverged`.
inline RunResult integrate(const SeparableSystem& system, std::span<const double> q0, std::span<const double> p0,
                           const RunConfig& cfg) {
    cfg.validate();
    if (q0.size() != system.dim() || p0.size() != system.dim()) {
        throw DimensionError("integrate: initial state does not match the system dimension");
    }
    const auto start = std::chrono::steady_clock::now();
    RunResult out;
    RunStats& st = out.stats;
    const long long n = step_count(cfg.t_end, cfg.h, &st.t_end_adjusted);

    const TableauSet tab = build_tableau(cfg.k, cfg.s);
    std::shared_ptr<const SplittingScheme> scheme = cfg.scheme;
    if (cfg.solver.mode == SolverMode::newton_splitting && !scheme) scheme = default_scheme(cfg.s);
    StageProblem sp(tab, system, scheme.get());

    Vector q(q0.begin(), q0.end()), p(p0.begin(), p0.end());
    const double H0 = system.hamiltonian(q, p);
    const double scale = std::max(1.0, std::abs(H0));
    out.trajectory.push_back({0.0, q, p});
    st.per_step_outer.reserve(static_cast<std::size_t>(n));

    std::optional<Vector> warm;
    for (long long i = 0; i < n; ++i) {
        sp.reset(q, p, cfg.h);
        StepResult r;
        try {
            r = solve_step(sp, cfg.solver, cfg.warm_start ? warm : std::nullopt);
        } catch (const SingularMatrixError& e) {
            st.failed_steps += 1;
            st.status = RunStatus::failed;
            st.message = "step " + std::to_string(i + 1) + ": " + e.what();
            break;
        }
        st.total_outer += r.outer_iters;
        st.total_inner += r.inner_iters;
        st.cost += r.stats.cost;
        st.per_step_outer.push_back(r.outer_iters);
        if (!r.converged) {
            st.failed_steps += 1;
            st.status = RunStatus::diverged;
            st.message = "step " + std::to_string(i + 1) + ": " + r.stats.message;
            break;
        }
        bool finite = true;
        for (std::size_t t = 0; t < q.size(); ++t) finite = finite && std::isfinite(r.q1[t]) && std::isfinite(r.p1[t]);
        if (!finite) {
            st.failed_steps += 1;
            st.status = RunStatus::failed;
            st.message = "step " + std::to_string(i + 1) + ": non-finite state";
            break;
        }
        q = std::move(r.q1);
        p = std::move(r.p1);
        if (cfg.warm_start) warm = std::move(r.gamma);
        st.steps += 1;
        const double drift = std::abs(system.hamiltonian(q, p) - H0) / scale;
        st.energy_drift_max = std::max(st.energy_drift_max, drift);
        if ((i + 1) % cfg.record_every == 0 || i + 1 == n) {
            out.trajectory.push_back({static_cast<double>(i + 1) * cfg.h, q, p});
        }
    }
    st.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
    return out;
}

inline std::vector<double> energy_series(const SeparableSystem& system, const std::vector<Snapshot>& trajectory) {
    std::vector<double> e;
    e.reserve(trajectory.size());
    for (const auto& snap : trajectory) e.push_back(system.hamiltonian(snap.q, snap.p));
    return e;
}

struct OrderPoint {
    double h = 0.0;
    double error = 0.0;  // max-norm of (q, p) against the reference at t_end
    bool valid = false;
};

struct OrderEstimate {
    double slope = 0.0;
    std::vector<OrderPoint> points;
};

/// Least-squares slope of log(error) against log(h).
inline OrderEstimate measure_order(const SeparableSystem& system, std::span<const double> q0,
                                   std::span<const double> p0, int k, int s, const SolverConfig& solver,
                                   const std::vector<double>& h_list, const Snapshot& reference) {
    OrderEstimate est;
    std::vector<double> xs, ys;
    for (double h : h_list) {
        RunConfig cfg;
        cfg.k = k;
        cfg.s = s;
        cfg.h = h;
        cfg.t_end = reference.t;
        cfg.solver = solver;
        cfg.record_every = std::numeric_limits<int>::max();
        const RunResult r = integrate(system, q0, p0, cfg);
        OrderPoint pt{h, 0.0, r.stats.converged() && !r.stats.t_end_adjusted};
        if (pt.valid) {
            const Snapshot& last = r.trajectory.back();
            pt.error = std::max(max_abs_diff(std::span<const double>(last.q), std::span<const double>(reference.q)),
                                max_abs_diff(std::span<const double>(last.p), std::span<const double>(reference.p)));
            pt.valid = pt.error > 0.0 && std::isfinite(pt.error);
        }
        if (pt.valid) {
            xs.push_back(std::log(h));
            ys.push_back(std::log(pt.error));
        }
        est.points.push_back(pt);
    }
    if (xs.size() < 3) {
        throw MeasurementError("measure_order: need at least 3 valid points, have " + std::to_string(xs.size()));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (!(sxx > 0.0)) throw MeasurementError("measure_order: stepsizes must be distinct");
    est.slope = sxy / sxx;
    return est;
}

/// High-accuracy state at t_end: HBVM(8,4) with direct simplified Newton, h = 1e-3.
inline Snapshot reference_solution(const SeparableSystem& system, std::span<const double> q0,
                                   std::span<const double> p0, double t_end) {
    RunConfig cfg;
    cfg.k = 8;
    cfg.s = 4;
    cfg.t_end = t_end;
    cfg.h = t_end / std::max(1.0, std::round(t_end / 1e-3));
    cfg.solver.mode = SolverMode::newton_direct;
    cfg.solver.tol = 1e-14;
    cfg.record_every = std::numeric_limits<int>::max();
    const RunResult r = integrate(system, q0, p0, cfg);
    if (!r.stats.converged()) throw MeasurementError("reference_solution: reference run did not converge");
    Snapshot out = r.trajectory.back();
    out.t = t_end;
    return out;
}

}  // namespace hbvm
