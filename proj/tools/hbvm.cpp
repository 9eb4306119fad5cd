// Command-line front end for the hbvm library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hbvm/hbvm.hpp"

namespace {

using namespace hbvm;
using json = nlohmann::json;

enum Exit { kOk = 0, kConfig = 2, kScheme = 3, kDiverged = 4, kMeasurement = 5 };

void print_matrix(const char* name, const DenseMatrix& a) {
    std::printf("%s (%zux%zu)\n", name, a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) std::printf(" % .16e", a(i, j));
        std::printf("\n");
    }
}

void print_vector(const char* name, std::span<const double> v) {
    std::printf("%s:", name);
    for (double x : v) std::printf(" %.17g", x);
    std::printf("\n");
}

// ---------------------------------------------------------------- tableau

int cmd_tableau(int k, int s) {
    const TableauSet t = build_tableau(k, s);
    std::printf("HBVM(%d,%d)\n", k, s);
    print_vector("c", t.rule.c);
    print_vector("b", t.rule.b);
    print_matrix("X_s", t.X_s);
    print_matrix("I_s", t.I_s);
    print_matrix("A", t.butcher_A);
    const IdentityReport r = verify_identities(t);
    std::printf("identity residuals\n");
    std::printf("  I_s - P_{s+1} Xhat_s        %.3e\n", r.integral_factorization);
    std::printf("  P_s^T Omega P_s - I         %.3e\n", r.orthonormality);
    std::printf("  P_s^T Omega I_s - X_s       %.3e\n", r.projection);
    std::printf("  I_s P_s^T Omega e - c       %.3e\n", r.row_sums);
    std::printf("  X_s, Xhat_s structure       %.3e\n", r.x_structure);
    return r.max() < 1e-10 ? kOk : 1;
}

// ---------------------------------------------------------------- scheme

void print_scheme(const SplittingScheme& sc) {
    const ConvergenceProfile p = convergence_profile(sc);
    print_vector("chat", sc.chat);
    std::printf("d_s        %.17g\n", sc.d);
    std::printf("diag dev   %.3e\n", sc.diagonal_deviation());
    std::printf("rho*       %.6g  (x* = %.6g)\n", p.rho_star, p.x_star);
    std::printf("rho~       %.6g\n", p.rho_tilde);
    std::printf("rho~_inf   %.6g\n", p.rho_tilde_inf);
}

int cmd_scheme(int s, std::optional<double> chat_last, bool regenerate) {
    if (s < kMinBuiltinStages || s > kMaxBuiltinStages) {
        throw ConfigError("scheme: s must be in 2..6, got " + std::to_string(s));
    }
    const Vector pub = published_abscissae(s);
    SplittingScheme sc;
    if (regenerate || chat_last) {
        const double last = chat_last.value_or(pub.back());
        sc = regenerate_scheme(s, last);
    } else {
        sc = builtin_scheme(s);
    }
    std::printf("s = %d (%s)\n", s, regenerate || chat_last ? "recomputed" : "builtin");
    print_scheme(sc);
    std::printf("rho1*      %.6g\n", rho_star_at_one(s));
    if (regenerate) {
        double dev = 0.0;
        for (std::size_t i = 0; i < pub.size(); ++i) dev = std::max(dev, std::abs(sc.chat[i] - pub[i]));
        std::printf("max |chat - tabulated| = %.3e\n", dev);
        std::printf("|d_s - tabulated| / d_s = %.3e\n", std::abs(sc.d - published_diagonal(s)) / published_diagonal(s));
    }
    return kOk;
}

int cmd_optimize(int s) {
    const OptimizedScheme r = optimize_last_abscissa(s);
    std::printf("s = %d  best chat_s = %.10g  (%d candidates, %d without admissible roots)\n", s, r.chat_last,
                r.candidates, r.skipped);
    print_scheme(r.scheme);
    return kOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
    std::string problem = "fpu-paper";
    int k = 4;
    int s = 2;
    std::string solver = "splitting";
    int nu = 2;
    double h = 0.1;
    double t_end = 10.0;
    double tol = 1e-12;
    int max_outer = 100;
    int record_every = 1;
    bool warm_start = false;
    std::string csv;
};

int cmd_run(const RunArgs& a) {
    const ProblemPreset pr = make_preset(a.problem);
    RunConfig cfg;
    cfg.k = a.k;
    cfg.s = a.s;
    cfg.h = a.h;
    cfg.t_end = a.t_end;
    cfg.solver.mode = parse_solver_mode(a.solver);
    cfg.solver.nu = a.nu;
    cfg.solver.tol = a.tol;
    cfg.solver.max_outer = a.max_outer;
    cfg.record_every = a.record_every;
    cfg.warm_start = a.warm_start;
    const RunResult r = integrate(*pr.system, pr.q0, pr.p0, cfg);
    const RunStats& st = r.stats;

    std::printf("problem %s  HBVM(%d,%d)  solver %s", a.problem.c_str(), a.k, a.s, a.solver.c_str());
    if (cfg.solver.mode == SolverMode::newton_splitting) std::printf(" nu=%d", a.nu);
    std::printf("  h=%g  t_end=%g  tol=%g\n", a.h, a.t_end, a.tol);
    if (st.t_end_adjusted) std::printf("warning: t_end/h is not a whole number; t_end truncated\n");
    std::printf("status        %s\n", std::string(to_string(st.status)).c_str());
    if (!st.message.empty()) std::printf("message       %s\n", st.message.c_str());
    std::printf("steps         %lld\n", st.steps);
    std::printf("outer iters   %lld\n", st.total_outer);
    std::printf("inner iters   %lld\n", st.total_inner);
    std::printf("energy drift  %.6e\n", st.energy_drift_max);
    std::printf("grad evals    %lld\n", st.cost.grad_evals);
    std::printf("wall time     %.3f ms\n", st.wall_ms());
    const Snapshot& last = r.trajectory.back();
    print_vector("q", last.q);
    print_vector("p", last.p);
    if (const auto* ho = dynamic_cast<const HarmonicOscillator*>(pr.system.get()); ho != nullptr && st.converged()) {
        const auto [qe, pe] = ho->exact(pr.q0, pr.p0, last.t);
        const double err = std::max(max_abs_diff(std::span<const double>(last.q), std::span<const double>(qe)),
                                    max_abs_diff(std::span<const double>(last.p), std::span<const double>(pe)));
        std::printf("error vs exact flow  %.3e\n", err);
    }
    if (!a.csv.empty()) {
        std::ofstream os(a.csv);
        if (!os) throw ConfigError("cannot open " + a.csv);
        const std::size_t m = pr.system->dim();
        os << 't';
        for (std::size_t i = 0; i < m; ++i) os << ",q" << i + 1;
        for (std::size_t i = 0; i < m; ++i) os << ",p" << i + 1;
        os << ",H\n";
        const auto e = energy_series(*pr.system, r.trajectory);
        for (std::size_t j = 0; j < r.trajectory.size(); ++j) {
            const Snapshot& sn = r.trajectory[j];
            os << format_g17(sn.t);
            for (double v : sn.q) os << ',' << format_g17(v);
            for (double v : sn.p) os << ',' << format_g17(v);
            os << ',' << format_g17(e[j]) << '\n';
        }
    }
    return st.converged() ? kOk : kDiverged;
}

// ---------------------------------------------------------------- bench

BenchSolver parse_bench_solver(const json& j) {
    BenchSolver sv;
    if (j.is_string()) {
        sv.config.mode = parse_solver_mode(j.get<std::string>());
        return sv;
    }
    if (!j.is_object()) throw ConfigError("bench spec: solver entries must be strings or objects");
    sv.config.mode = parse_solver_mode(j.at("mode").get<std::string>());
    sv.config.nu = j.value("nu", sv.config.nu);
    sv.config.tol = j.value("tol", sv.config.tol);
    sv.config.max_outer = j.value("max_outer", sv.config.max_outer);
    sv.config.divergence_bound = j.value("divergence_bound", sv.config.divergence_bound);
    sv.nu_sweep = j.value("nu_sweep", false);
    sv.max_nu = j.value("max_nu", sv.max_nu);
    return sv;
}

BenchmarkSpec load_bench_spec(const std::string& path) {
    BenchmarkSpec spec;
    spec.solvers = BenchmarkSpec::default_solvers();
    if (path.empty()) return spec;
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open bench spec " + path);
    json j;
    try {
        is >> j;
        spec.problem = j.value("problem", spec.problem);
        if (j.contains("methods")) {
            spec.k_s_pairs.clear();
            for (const auto& m : j.at("methods")) spec.k_s_pairs.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
        }
        if (j.contains("i_range")) spec.i_range = j.at("i_range").get<std::vector<int>>();
        spec.t_end = j.value("t_end", spec.t_end);
        spec.base_h = j.value("base_h", spec.base_h);
        spec.output = j.value("output", spec.output);
        spec.threads = j.value("threads", spec.threads);
        if (j.contains("solvers")) {
            spec.solvers.clear();
            for (const auto& s : j.at("solvers")) spec.solvers.push_back(parse_bench_solver(s));
        }
        if (j.contains("tol")) {
            for (auto& s : spec.solvers) s.config.tol = j.at("tol").get<double>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bench spec: ") + e.what());
    }
    return spec;
}

struct BenchArgs {
    std::string spec_path;
    std::optional<std::string> problem;
    std::optional<std::string> output;
    std::optional<int> threads;
    std::optional<double> t_end;
    std::optional<double> tol;
    std::vector<int> i_range;
};

int cmd_bench(const BenchArgs& a) {
    BenchmarkSpec spec = load_bench_spec(a.spec_path);
    if (a.problem) spec.problem = *a.problem;
    if (a.output) spec.output = *a.output;
    if (a.threads) spec.threads = *a.threads;
    if (a.t_end) spec.t_end = *a.t_end;
    if (a.tol)
        for (auto& s : spec.solvers) s.config.tol = *a.tol;
    if (!a.i_range.empty()) spec.i_range = a.i_range;
    const auto cells = run_benchmark(spec);
    std::printf("total outer iterations, problem %s, t in [0,%g], h = %g * 2^-i\n\n", spec.problem.c_str(),
                spec.t_end, spec.base_h);
    std::printf("%s", render_bench_table(spec, cells).c_str());
    if (!spec.output.empty()) {
        std::ofstream os(spec.output);
        if (!os) throw ConfigError("cannot open " + spec.output);
        write_bench_csv(os, cells);
        std::printf("wrote %s\n", spec.output.c_str());
    }
    return kOk;
}

// ---------------------------------------------------------------- order

struct OrderArgs {
    std::string problem = "pendulum";
    int k = 4;
    int s = 2;
    std::string solver = "newton-direct";
    int nu = 2;
    double tol = 1e-13;
    double t_end = 1.0;
    std::vector<double> h_list{0.1, 0.05, 0.025, 0.0125};
};

int cmd_order(const OrderArgs& a) {
    const ProblemPreset pr = make_preset(a.problem);
    SolverConfig sc;
    sc.mode = parse_solver_mode(a.solver);
    sc.nu = a.nu;
    sc.tol = a.tol;
    Snapshot ref;
    if (const auto* ho = dynamic_cast<const HarmonicOscillator*>(pr.system.get())) {
        auto [q, p] = ho->exact(pr.q0, pr.p0, a.t_end);
        ref = {a.t_end, q, p};
        std::printf("reference: exact flow\n");
    } else {
        ref = reference_solution(*pr.system, pr.q0, pr.p0, a.t_end);
        std::printf("reference: HBVM(8,4), h = 1e-3\n");
    }
    std::printf("problem %s  HBVM(%d,%d)  t_end=%g\n", a.problem.c_str(), a.k, a.s, a.t_end);
    OrderEstimate est;
    try {
        est = measure_order(*pr.system, pr.q0, pr.p0, a.k, a.s, sc, a.h_list, ref);
    } catch (const MeasurementError&) {
        std::printf("fewer than 3 usable stepsizes\n");
        throw;
    }
    for (const auto& pt : est.points) {
        if (pt.valid)
            std::printf("  h = %-10g  error = %.6e\n", pt.h, pt.error);
        else
            std::printf("  h = %-10g  excluded\n", pt.h);
    }
    std::printf("fitted order %.4f\n", est.slope);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HBVM integrators and outer-inner stage solvers"};
    app.require_subcommand(1);

    int tk = 4, ts = 2;
    auto* tableau = app.add_subcommand("tableau", "print an HBVM(k,s) tableau and its identity residuals");
    tableau->add_option("--k", tk, "Gauss nodes")->required();
    tableau->add_option("--s", ts, "polynomial degree")->required();

    int ss = 2;
    std::optional<double> chat_last;
    bool regenerate = false;
    auto* scheme = app.add_subcommand("scheme", "splitting scheme parameters");
    scheme->add_option("--s", ss)->required();
    scheme->add_option("--chat-last", chat_last, "last auxiliary abscissa (recompute the rest)");
    scheme->add_flag("--regenerate", regenerate, "recompute the abscissae by root finding");

    int os = 2;
    auto* optimize = app.add_subcommand("optimize", "search the last auxiliary abscissa minimizing rho*");
    optimize->add_option("--s", os)->required();

    RunArgs ra;
    auto* run = app.add_subcommand("run", "integrate a problem preset");
    run->set_help_flag("--help", "print this help message and exit");  // -h would clash with --h
    run->add_option("--problem", ra.problem)->check(CLI::IsMember({"fpu-paper", "harmonic", "pendulum"}));
    run->add_option("--k", ra.k);
    run->add_option("--s", ra.s);
    run->add_option("--solver", ra.solver, "fixed-point | splitting | newton-direct");
    run->add_option("--nu", ra.nu);
    run->add_option("--h", ra.h);
    run->add_option("--t-end", ra.t_end);
    run->add_option("--tol", ra.tol);
    run->add_option("--max-outer", ra.max_outer);
    run->add_option("--record-every", ra.record_every);
    run->add_flag("--warm-start", ra.warm_start);
    run->add_option("--csv", ra.csv, "trajectory CSV path");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "run a benchmark grid");
    bench->add_option("spec", ba.spec_path, "JSON benchmark spec (default: the FPU grid)");
    bench->add_option("--problem", ba.problem);
    bench->add_option("--csv,--output", ba.output);
    bench->add_option("--threads", ba.threads);
    bench->add_option("--t-end", ba.t_end);
    bench->add_option("--tol", ba.tol);
    bench->add_option("--i", ba.i_range)->delimiter(',');

    OrderArgs oa;
    auto* order = app.add_subcommand("order", "estimate the convergence order");
    order->set_help_flag("--help", "print this help message and exit");
    order->add_option("--problem", oa.problem)->check(CLI::IsMember({"fpu-paper", "harmonic", "pendulum"}));
    order->add_option("--k", oa.k);
    order->add_option("--s", oa.s);
    order->add_option("--solver", oa.solver);
    order->add_option("--nu", oa.nu);
    order->add_option("--tol", oa.tol);
    order->add_option("--t-end", oa.t_end);
    order->add_option("--h", oa.h_list)->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*tableau) return cmd_tableau(tk, ts);
        if (*scheme) return cmd_scheme(ss, chat_last, regenerate);
        if (*optimize) return cmd_optimize(os);
        if (*run) return cmd_run(ra);
        if (*bench) return cmd_bench(ba);
        if (*order) return cmd_order(oa);
    } catch (const MeasurementError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kMeasurement;
    } catch (const RootFindingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kScheme;
    } catch (const DegenerateAbscissaeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kScheme;
    } catch (const FactorizationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kScheme;
    } catch (const OptimizationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kScheme;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfig;
    }
    return kOk;
}
