#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hbvm/solvers.hpp"
#include "oracles.hpp"

using namespace hbvm;

namespace {

SolverConfig mode(SolverMode m, double tol = 1e-12) {
    SolverConfig c;
    c.mode = m;
    c.tol = tol;
    return c;
}

// U(q) = -a q^2 / 2 in one dimension.
class InvertedOscillator final : public SeparableSystem {
public:
    using SeparableSystem::gradient;
    explicit InvertedOscillator(double a) : a_(a) {}
    std::size_t dim() const override { return 1; }
    double potential(std::span<const double> q) const override { return -0.5 * a_ * q[0] * q[0]; }
    void gradient(std::span<const double> q, std::span<double> out) const override { out[0] = -a_ * q[0]; }
    DenseMatrix hessian(std::span<const double>) const override { return DenseMatrix{{-a_}}; }
    std::string name() const override { return "inverted"; }

private:
    double a_;
};

// Exact Newton direction in the transformed variables:
// [I + h^2 A (x) H] x = eta, assembled densely.
Vector exact_inner_solution(const StageProblem& sp, const SplittingWorkspace& ws, const Vector& eta) {
    DenseMatrix big = DenseMatrix::identity(eta.size());
    big += ws.h2 * oracle::kron(sp.scheme->A, ws.H);
    return oracle::dense_solve(big, eta);
}

}  // namespace

TEST(StageProblem, StageCoefficientMatrix) {
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(2);
    const StageProblem sp(t, ff, Vector{0, 0}, Vector{0, 0}, 0.1);
    EXPECT_LT(max_abs_diff(sp.C, t.P_s1 * t.Xhat_s * t.X_s), 1e-13);
    EXPECT_THROW(StageProblem(t, ff, Vector{0}, Vector{0, 0}, 0.1), DimensionError);
    const SplittingScheme sc3 = builtin_scheme(3);
    EXPECT_THROW(StageProblem(t, ff, &sc3), ConfigError);
}

TEST(ReconstructStages, ZeroStep) {
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(2);
    const StageProblem sp(t, ff, Vector{0.3, -1.0}, Vector{2.0, 5.0}, 0.0);
    const Vector q = reconstruct_stages(sp, Vector{1, 2, 3, 4});
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(q[2 * i], 0.3);
        EXPECT_EQ(q[2 * i + 1], -1.0);
    }
}

TEST(ReconstructStages, FreeFlightWithZeroGamma) {
    const TableauSet t = build_tableau(3, 2);
    const FreeFlight ff(1);
    const StageProblem sp(t, ff, Vector{0.5}, Vector{2.0}, 0.2);
    const Vector q = reconstruct_stages(sp, Vector{0, 0});
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(q[i], 0.5 + 0.2 * t.rule.c[i] * 2.0, 1e-15);
}

TEST(ReconstructStages, MatchesNaiveTripleLoop) {
    std::mt19937_64 rng(31);
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(3);
    const Vector q0 = oracle::random_vector(rng, 3), p0 = oracle::random_vector(rng, 3);
    const Vector gamma = oracle::random_vector(rng, 6);
    const double h = 0.37;
    const StageProblem sp(t, ff, q0, p0, h);
    const Vector q = reconstruct_stages(sp, gamma);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t d = 0; d < 3; ++d) {
            double corr = 0.0;
            for (std::size_t j = 0; j < 2; ++j)
                for (std::size_t l = 0; l < 3; ++l)
                    for (std::size_t a = 0; a < 2; ++a)
                        corr += t.P_s1(i, l) * t.Xhat_s(l, a) * t.X_s(a, j) * gamma[j * 3 + d];
            const double ref = q0[d] + h * t.rule.c[i] * p0[d] - h * h * corr;
            EXPECT_NEAR(q[i * 3 + d], ref, 1e-13);
        }
}

TEST(EvalF, FreeFlightResidualIsGamma) {
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(2);
    const StageProblem sp(t, ff, Vector{1, 2}, Vector{3, 4}, 0.1);
    const Vector g{0.1, -0.2, 0.3, 0.4};
    EXPECT_EQ(eval_F(sp, g).F, g);
}

TEST(EvalF, NonFiniteGradientThrows) {
    const TableauSet t = build_tableau(2, 2);
    const Pendulum pd;
    const StageProblem sp(t, pd, Vector{0.1}, Vector{0.0}, 0.1);
    EXPECT_THROW(eval_F(sp, Vector{std::numeric_limits<double>::infinity(), 0.0}), EvaluationError);
}

TEST(EvalF, MidpointRuleOnHarmonicOscillator) {
    // k = s = 1: Q = q0 + h/2 p0 - h^2/4 gamma and F = gamma - Q, so the root
    // is gamma = (q0 + h p0 / 2) / (1 + h^2 / 4).
    const TableauSet t = build_tableau(1, 1);
    const HarmonicOscillator ho(1.0, 1);
    const double q0 = 0.8, p0 = -0.3, h = 0.1;
    const StageProblem sp(t, ho, Vector{q0}, Vector{p0}, h);
    const SolveOutput o = newton_direct_solve(sp, mode(SolverMode::newton_direct));
    ASSERT_TRUE(o.stats.converged);
    EXPECT_NEAR(o.gamma[0], (q0 + 0.5 * h * p0) / (1.0 + 0.25 * h * h), 1e-14);
}

TEST(EvalF, ResidualAtSolutionBelowTolerance) {
    const TableauSet t = build_tableau(4, 2);
    const HarmonicOscillator ho(2.0, 2);
    const StageProblem sp(t, ho, Vector{1.0, 0.5}, Vector{0.0, 1.0}, 0.2);
    const SolveOutput o = newton_direct_solve(sp, mode(SolverMode::newton_direct));
    ASSERT_TRUE(o.stats.converged);
    EXPECT_LE(norm_inf(eval_F(sp, o.gamma).F), 1e-12);
}

TEST(EvalF, FirstResidualFromZeroStart) {
    const TableauSet t = build_tableau(4, 2);
    const ProblemPreset pr = make_preset("fpu-paper");
    const double h = 0.025;
    const StageProblem sp(t, *pr.system, pr.q0, pr.p0, h);
    // Direct evaluation: project grad U at q0 + h c_i p0 on P_j with weights b_i.
    Vector proj(2 * 6, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        Vector qi(6);
        for (std::size_t d = 0; d < 6; ++d) qi[d] = pr.q0[d] + h * t.rule.c[i] * pr.p0[d];
        const Vector g = pr.system->gradient(qi);
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t d = 0; d < 6; ++d)
                proj[j * 6 + d] += t.rule.b[i] * eval_legendre(static_cast<int>(j), t.rule.c[i]) * g[d];
    }
    const SolveOutput o = fixed_point_solve(sp, mode(SolverMode::fixed_point));
    ASSERT_FALSE(o.stats.residual_history.empty());
    EXPECT_NEAR(o.stats.residual_history.front(), norm_inf(proj), 1e-12 * norm_inf(proj));
}

TEST(Solvers, FreeFlightConvergesInOneIteration) {
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(3);
    const SplittingScheme sc = builtin_scheme(2);
    const StageProblem sp(t, ff, Vector{1, 2, 3}, Vector{-1, 0, 1}, 0.1, &sc);
    for (SolverMode m : {SolverMode::fixed_point, SolverMode::newton_direct, SolverMode::newton_splitting}) {
        const SolveOutput o = solve_stage_equation(sp, mode(m));
        EXPECT_TRUE(o.stats.converged);
        EXPECT_EQ(o.stats.outer_iters, 1) << to_string(m);
        for (double g : o.gamma) EXPECT_EQ(g, 0.0);
    }
}

TEST(Solvers, NewtonIsExactForQuadraticPotential) {
    const TableauSet t = build_tableau(4, 2);
    const HarmonicOscillator ho(3.0, 2);
    const StageProblem sp(t, ho, Vector{1.0, -0.5}, Vector{0.3, 0.2}, 0.1);
    const SolveOutput o = newton_direct_solve(sp, mode(SolverMode::newton_direct));
    ASSERT_TRUE(o.stats.converged);
    EXPECT_EQ(o.stats.outer_iters, 1);
    EXPECT_LE(o.stats.residual_history.at(1), 1e-12);
}

TEST(Solvers, FixedPointOnStiffChain) {
    const TableauSet t = build_tableau(4, 2);
    const ProblemPreset pr = make_preset("fpu-paper");
    const StageProblem big(t, *pr.system, pr.q0, pr.p0, 0.1);
    const SolveOutput o = fixed_point_solve(big, mode(SolverMode::fixed_point));
    EXPECT_FALSE(o.stats.converged);
    EXPECT_TRUE(o.stats.diverged);
    const StageProblem small(t, *pr.system, pr.q0, pr.p0, 0.025);
    EXPECT_TRUE(fixed_point_solve(small, mode(SolverMode::fixed_point)).stats.converged);
}

TEST(Solvers, SplittingConvergesWhereFixedPointFails) {
    const TableauSet t = build_tableau(4, 2);
    const ProblemPreset pr = make_preset("fpu-paper");
    const SplittingScheme sc = builtin_scheme(2);
    const StageProblem sp(t, *pr.system, pr.q0, pr.p0, 0.1, &sc);
    const SolveOutput o = splitting_solve(sp, mode(SolverMode::newton_splitting));
    EXPECT_TRUE(o.stats.converged);
    EXPECT_EQ(o.stats.inner_iters, 2LL * o.stats.outer_iters);
    EXPECT_EQ(o.stats.cost.small_factorizations, 1);
    EXPECT_EQ(o.stats.cost.hess_evals, 1);
}

TEST(Solvers, NewtonConvergesOnStiffChain) {
    const TableauSet t = build_tableau(4, 2);
    const ProblemPreset pr = make_preset("fpu-paper");
    const StageProblem sp(t, *pr.system, pr.q0, pr.p0, 0.1);
    const SolveOutput o = newton_direct_solve(sp, mode(SolverMode::newton_direct));
    EXPECT_TRUE(o.stats.converged);
    EXPECT_LE(o.stats.final_residual, 1e-12);
    EXPECT_EQ(o.stats.cost.full_factorizations, 1);
}

TEST(Solvers, AllThreeAgreeOnTheRoot) {
    const ProblemPreset pr = make_preset("fpu-paper");
    for (int s = 1; s <= 4; ++s) {
        const TableauSet t = build_tableau(2 * s, s);
        const SplittingScheme sc = s == 1 ? build_scheme(1, {1.0}) : builtin_scheme(s);
        const StageProblem sp(t, *pr.system, pr.q0, pr.p0, 0.0125, &sc);
        const SolveOutput a = fixed_point_solve(sp, mode(SolverMode::fixed_point));
        const SolveOutput b = newton_direct_solve(sp, mode(SolverMode::newton_direct));
        const SolveOutput c = splitting_solve(sp, mode(SolverMode::newton_splitting));
        ASSERT_TRUE(a.stats.converged && b.stats.converged && c.stats.converged) << s;
        EXPECT_LT(max_abs_diff(std::span<const double>(a.gamma), std::span<const double>(b.gamma)), 1e-9);
        EXPECT_LT(max_abs_diff(std::span<const double>(c.gamma), std::span<const double>(b.gamma)), 1e-9);
    }
}

TEST(Solvers, ManySweepsReproduceNewtonDirection) {
    const HarmonicOscillator ho(5.0, 3);
    for (int s = 2; s <= 6; ++s) {
        const TableauSet t = build_tableau(s + 2, s);
        const SplittingScheme sc = builtin_scheme(s);
        const StageProblem sp(t, ho, Vector{1.0, -0.4, 0.2}, Vector{0.1, 0.5, -0.3}, 0.3, &sc);
        SolverConfig cfg = mode(SolverMode::newton_splitting, 1e-10);
        cfg.nu = 200;
        cfg.max_outer = 1;
        const SolveOutput split = splitting_solve(sp, cfg);
        SolverConfig ncfg = mode(SolverMode::newton_direct, 1e-10);
        ncfg.max_outer = 1;
        const SolveOutput newton = newton_direct_solve(sp, ncfg);
        EXPECT_TRUE(split.stats.converged) << s;
        EXPECT_LE(split.stats.final_residual, 1e-10);
        EXPECT_LT(max_abs_diff(std::span<const double>(split.gamma), std::span<const double>(newton.gamma)), 1e-10);
    }
}

TEST(Solvers, InnerContractionMatchesLinearAnalysis) {
    // y'' = -mu^2 y with h = 1: the error of the inner sweeps against the
    // exact Newton direction contracts by rho(M(mu^2)).
    for (int s : {2, 3}) {
        const SplittingScheme sc = builtin_scheme(s);
        const TableauSet t = build_tableau(2 * s, s);
        for (double mu : {0.5, 1.0, 2.0, 10.0}) {
            const HarmonicOscillator ho(mu, 1);
            const StageProblem sp(t, ho, Vector{1.0}, Vector{0.2}, 1.0, &sc);
            const SplittingWorkspace ws = make_splitting_workspace(sp);
            Vector eta = kron_apply(sc.Phat, 1, eval_F(sp, Vector(static_cast<std::size_t>(s), 0.0)).F);
            for (double& v : eta) v = -v;
            const Vector exact = exact_inner_solution(sp, ws, eta);
            Vector x(eta.size(), 0.0);
            std::vector<double> err;
            for (int l = 0; l <= 8; ++l) {
                err.push_back(max_abs_diff(std::span<const double>(x), std::span<const double>(exact)));
                x = ws.sweep(sp, x, eta);
            }
            const double observed = std::pow(err[8] / err[3], 1.0 / 5.0);
            const double predicted = amplification_factor(sc, mu * mu);
            EXPECT_LT(std::abs(observed - predicted) / predicted, 0.1) << "s=" << s << " mu=" << mu;
        }
    }
}

TEST(Solvers, ConfigValidation) {
    SolverConfig c;
    c.tol = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SolverConfig{};
    c.nu = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(parse_solver_mode("fixed-point"), SolverMode::fixed_point);
    EXPECT_EQ(parse_solver_mode("splitting"), SolverMode::newton_splitting);
    EXPECT_EQ(parse_solver_mode("newton-direct"), SolverMode::newton_direct);
    EXPECT_THROW(parse_solver_mode("gmres"), ConfigError);
}

TEST(Solvers, SplittingNeedsScheme) {
    const TableauSet t = build_tableau(2, 2);
    const HarmonicOscillator ho(1.0, 1);
    const StageProblem sp(t, ho, Vector{1.0}, Vector{0.0}, 0.1);
    EXPECT_THROW(splitting_solve(sp, SolverConfig{}), ConfigError);
}

TEST(Solvers, SingularIterationMatrix) {
    // With s = k = 1 both I + h^2 X^2 H and I + h^2 d H equal 1 - h^2 a / 4.
    const TableauSet t = build_tableau(1, 1);
    const double h = 0.5;
    const InvertedOscillator inv(4.0 / (h * h));
    const SplittingScheme sc = build_scheme(1, {1.0});
    const StageProblem sp(t, inv, Vector{1.0}, Vector{0.0}, h, &sc);
    EXPECT_THROW(newton_direct_solve(sp, mode(SolverMode::newton_direct)), SingularMatrixError);
    EXPECT_THROW(splitting_solve(sp, mode(SolverMode::newton_splitting)), SingularMatrixError);
}

TEST(FinalizeStep, FreeFlight) {
    const TableauSet t = build_tableau(4, 2);
    const FreeFlight ff(2);
    const StageProblem sp(t, ff, Vector{1, 2}, Vector{3, -4}, 0.1);
    const StepResult r = solve_step(sp, mode(SolverMode::newton_direct));
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.q1[0], 1.3, 1e-15);
    EXPECT_NEAR(r.q1[1], 1.6, 1e-15);
    EXPECT_EQ(r.p1, (Vector{3, -4}));
}

TEST(FinalizeStep, GaussTwoHarmonicLocalError) {
    const TableauSet t = build_tableau(2, 2);
    const HarmonicOscillator ho(1.0, 1);
    const double h = 0.01;
    const StageProblem sp(t, ho, Vector{1.0}, Vector{0.0}, h);
    const StepResult r = solve_step(sp, mode(SolverMode::newton_direct, 1e-15));
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.q1[0], std::cos(h), 1e-12);
    EXPECT_NEAR(r.p1[0], -std::sin(h), 1e-12);
}

TEST(FinalizeStep, BothMomentumFormsAgree) {
    std::mt19937_64 rng(41);
    const ProblemPreset pr = make_preset("fpu-paper");
    const TableauSet t = build_tableau(4, 2);
    const Vector q0 = oracle::random_vector(rng, 6, -0.5, 0.5), p0 = oracle::random_vector(rng, 6);
    const StageProblem sp(t, *pr.system, q0, p0, 0.01);
    const SolveOutput o = newton_direct_solve(sp, mode(SolverMode::newton_direct));
    ASSERT_TRUE(o.stats.converged);
    const auto [qa, pa] = finalize_step(sp, o.gamma, o.last.gradU);
    const auto [qb, pb] = finalize_step_butcher(sp, o.last.gradU);
    EXPECT_LT(max_abs_diff(std::span<const double>(qa), std::span<const double>(qb)), 1e-12);
    EXPECT_LT(max_abs_diff(std::span<const double>(pa), std::span<const double>(pb)), 1e-12);
}

TEST(FinalizeStep, ForwardBackwardSymmetry) {
    const ProblemPreset pr = make_preset("fpu-paper");
    for (auto [k, s] : {std::pair{2, 2}, std::pair{4, 2}, std::pair{6, 3}}) {
        const TableauSet t = build_tableau(k, s);
        const double h = 0.025;
        StageProblem sp(t, *pr.system, pr.q0, pr.p0, h);
        const StepResult fwd = solve_step(sp, mode(SolverMode::newton_direct, 1e-12));
        ASSERT_TRUE(fwd.converged);
        sp.reset(fwd.q1, fwd.p1, -h);
        const StepResult back = solve_step(sp, mode(SolverMode::newton_direct, 1e-12));
        ASSERT_TRUE(back.converged);
        EXPECT_LT(max_abs_diff(std::span<const double>(back.q1), std::span<const double>(pr.q0)), 1e-10);
        EXPECT_LT(max_abs_diff(std::span<const double>(back.p1), std::span<const double>(pr.p0)), 1e-10);
    }
}
