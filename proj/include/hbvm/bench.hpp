#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hbvm/error.hpp"
#include "hbvm/integrator.hpp"
#include "hbvm/problems.hpp"
#include "hbvm/solvers.hpp"

namespace hbvm {

/// One solver column of a benchmark grid.
struct BenchSolver {
    SolverConfig config;
    bool nu_sweep = false;  // splitting only: try nu = 1..max_nu, keep the best
    int max_nu = 12;

    std::string label() const {
        if (config.mode != SolverMode::newton_splitting) return std::string(to_string(config.mode));
        return nu_sweep ? "splitting-nu" : "splitting-" + std::to_string(config.nu);
    }
};

struct BenchmarkSpec {
    std::string problem = "fpu-paper";
    std::vector<std::pair<int, int>> k_s_pairs{{4, 2}, {2, 2}};
    std::vector<int> i_range{0, 1, 2, 3, 4, 5, 6};
    std::vector<BenchSolver> solvers;
    double t_end = 10.0;
    double base_h = 0.1;  // h = base_h * 2^-i
    std::string output;   // CSV path, empty for none
    int threads = 0;      // 0: available cores

    void validate() const {
        if (k_s_pairs.empty()) throw ConfigError("bench: no (k,s) pairs");
        if (i_range.empty()) throw ConfigError("bench: empty i_range");
        if (solvers.empty()) throw ConfigError("bench: no solvers");
        for (auto [k, s] : k_s_pairs) {
            if (s < 1 || k < s || k > kMaxGaussNodes) {
                throw ConfigError("bench: invalid (k,s) = (" + std::to_string(k) + "," + std::to_string(s) + ")");
            }
        }
        for (int i : i_range)
            if (i < 0) throw ConfigError("bench: i must be nonnegative");
        for (const auto& sv : solvers) {
            sv.config.validate();
            if (sv.nu_sweep && (sv.config.mode != SolverMode::newton_splitting || sv.max_nu < 1)) {
                throw ConfigError("bench: nu sweep needs the splitting solver and max_nu >= 1");
            }
        }
        if (!(t_end > 0.0) || !(base_h > 0.0)) throw ConfigError("bench: t_end and base_h must be positive");
        if (threads < 0) throw ConfigError("bench: threads must be >= 0");
    }

    /// Fixed-point, splitting with the nu sweep, splitting with nu = 2, and
    /// direct simplified Newton, all at tol 1e-12.
    static std::vector<BenchSolver> default_solvers() {
        std::vector<BenchSolver> v(4);
        v[0].config.mode = SolverMode::fixed_point;
        v[1].config.mode = SolverMode::newton_splitting;
        v[1].nu_sweep = true;
        v[2].config.mode = SolverMode::newton_splitting;
        v[2].config.nu = 2;
        v[3].config.mode = SolverMode::newton_direct;
        return v;
    }
};

struct BenchCell {
    std::string problem;
    int k = 0;
    int s = 0;
    int i = 0;
    double h = 0.0;
    std::string solver;
    int nu = 0;  // inner sweeps per outer iteration; 0 for solvers without an inner loop
    long long outer = 0;
    long long inner = 0;
    double energy_drift = 0.0;
    bool converged = false;
    double wall_ms = 0.0;
    std::string message;
};

/// Worker count from an explicit request, then HBVM_THREADS, then the core count.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HBVM_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs task(0..n-1) on `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t j = 0; j < n; ++j) task(j);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t j = next++; j < n; j = next++) {
                try {
                    task(j);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

namespace detail {

inline BenchCell run_cell(const ProblemPreset& pr, const std::string& problem, int k, int s, int i, double h,
                          double t_end, const BenchSolver& sv) {
    BenchCell cell;
    cell.problem = problem;
    cell.k = k;
    cell.s = s;
    cell.i = i;
    cell.h = h;
    cell.solver = sv.label();

    RunConfig cfg;
    cfg.k = k;
    cfg.s = s;
    cfg.h = h;
    cfg.t_end = t_end;
    cfg.solver = sv.config;
    cfg.record_every = std::numeric_limits<int>::max();

    auto fill = [&](const RunResult& r, int nu) {
        cell.nu = nu;
        cell.outer = r.stats.total_outer;
        cell.inner = r.stats.total_inner;
        cell.energy_drift = r.stats.energy_drift_max;
        cell.converged = r.stats.converged();
        cell.message = r.stats.message;
    };

    const auto start = std::chrono::steady_clock::now();
    try {
        if (!sv.nu_sweep) {
            fill(integrate(*pr.system, pr.q0, pr.p0, cfg),
                 sv.config.mode == SolverMode::newton_splitting ? sv.config.nu : 0);
        } else {
            if (s >= 2) cfg.scheme = default_scheme(s);
            bool have = false;
            RunResult best;
            int best_nu = 0;
            for (int nu = 1; nu <= sv.max_nu; ++nu) {
                cfg.solver.nu = nu;
                RunResult r = integrate(*pr.system, pr.q0, pr.p0, cfg);
                if (!r.stats.converged()) continue;
                if (!have || r.stats.total_outer < best.stats.total_outer) {
                    best = std::move(r);
                    best_nu = nu;
                    have = true;
                }
            }
            if (have) {
                fill(best, best_nu);
            } else {
                cell.nu = 0;
                cell.message = "no nu in 1.." + std::to_string(sv.max_nu) + " converged";
            }
        }
    } catch (const Error& e) {
        cell.converged = false;
        cell.message = e.what();
    }
    cell.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return cell;
}

}  // namespace detail

/// Runs every (k,s) x i x solver cell. Cells come back in grid order
/// regardless of the worker count.
inline std::vector<BenchCell> run_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    const ProblemPreset pr = make_preset(spec.problem);
    struct Key {
        int k, s, i;
        std::size_t solver;
    };
    std::vector<Key> keys;
    for (auto [k, s] : spec.k_s_pairs)
        for (int i : spec.i_range)
            for (std::size_t j = 0; j < spec.solvers.size(); ++j) keys.push_back({k, s, i, j});
    std::vector<BenchCell> cells(keys.size());
    parallel_for(keys.size(), resolve_threads(spec.threads), [&](std::size_t j) {
        const Key& key = keys[j];
        const double h = std::ldexp(spec.base_h, -key.i);
        cells[j] = detail::run_cell(pr, spec.problem, key.k, key.s, key.i, h, spec.t_end, spec.solvers[key.solver]);
    });
    return cells;
}

inline constexpr const char* kBenchCsvHeader =
    "problem,k,s,i,h,solver,nu,outer,inner,energy_drift,converged,wall_ms";

inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchCell>& cells) {
    os << kBenchCsvHeader << '\n';
    for (const auto& c : cells) {
        os << c.problem << ',' << c.k << ',' << c.s << ',' << c.i << ',' << format_g17(c.h) << ',' << c.solver << ','
           << c.nu << ',' << c.outer << ',' << c.inner << ',' << format_g17(c.energy_drift) << ','
           << (c.converged ? "true" : "false") << ',' << format_g17(c.wall_ms) << '\n';
    }
}

/// One block per (k,s): rows i, one column per solver, "****" where the run
/// did not converge. Swept columns show the chosen nu in parentheses.
inline std::string render_bench_table(const BenchmarkSpec& spec, const std::vector<BenchCell>& cells) {
    std::ostringstream os;
    const std::size_t nsol = spec.solvers.size();
    std::size_t idx = 0;
    for (auto [k, s] : spec.k_s_pairs) {
        os << "HBVM(" << k << ',' << s << ")" << (k == s ? "  [Gauss-" + std::to_string(s) + "]" : std::string())
           << '\n';
        char buf[64];
        std::snprintf(buf, sizeof buf, "%4s", "i");
        os << buf;
        for (const auto& sv : spec.solvers) {
            std::snprintf(buf, sizeof buf, "  %16s", sv.label().c_str());
            os << buf;
        }
        os << '\n';
        for (std::size_t r = 0; r < spec.i_range.size(); ++r) {
            std::snprintf(buf, sizeof buf, "%4d", spec.i_range[r]);
            os << buf;
            for (std::size_t j = 0; j < nsol; ++j, ++idx) {
                const BenchCell& c = cells[idx];
                std::string v = "****";
                if (c.converged) {
                    v = std::to_string(c.outer);
                    if (spec.solvers[j].nu_sweep) v += " (" + std::to_string(c.nu) + ")";
                }
                std::snprintf(buf, sizeof buf, "  %16s", v.c_str());
                os << buf;
            }
            os << '\n';
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace hbvm
