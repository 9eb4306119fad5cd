#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "hbvm/dense_matrix.hpp"
#include "hbvm/error.hpp"

namespace hbvm {

/// Separable Hamiltonian H(q,p) = p^T p / 2 + U(q), so q' = p, p' = -grad U(q).
class SeparableSystem {
public:
    virtual ~SeparableSystem() = default;

    /// Length of q (and of p).
    virtual std::size_t dim() const = 0;
    virtual double potential(std::span<const double> q) const = 0;
    virtual void gradient(std::span<const double> q, std::span<double> out) const = 0;
    virtual DenseMatrix hessian(std::span<const double> q) const = 0;
    virtual std::string name() const = 0;

    Vector gradient(std::span<const double> q) const {
        Vector g(dim());
        gradient(q, g);
        return g;
    }

    double hamiltonian(std::span<const double> q, std::span<const double> p) const {
        double kin = 0.0;
        for (double v : p) kin += v * v;
        return 0.5 * kin + potential(q);
    }

protected:
    void check_dim(std::span<const double> q) const {
        if (q.size() != dim()) throw DimensionError(name() + ": state has wrong dimension");
    }
};

/// U = 0.
class FreeFlight final : public SeparableSystem {
public:
    using SeparableSystem::gradient;

    explicit FreeFlight(std::size_t m) : m_(m) {}

    std::size_t dim() const override { return m_; }
    double potential(std::span<const double> q) const override {
        check_dim(q);
        return 0.0;
    }
    void gradient(std::span<const double> q, std::span<double> out) const override {
        check_dim(q);
        std::fill(out.begin(), out.end(), 0.0);
    }
    DenseMatrix hessian(std::span<const double> q) const override {
        check_dim(q);
        return DenseMatrix(m_, m_);
    }
    std::string name() const override { return "free"; }

private:
    std::size_t m_;
};

/// U(q) = omega^2 q^T q / 2.
class HarmonicOscillator final : public SeparableSystem {
public:
    using SeparableSystem::gradient;

    HarmonicOscillator(double omega, std::size_t m) : omega_(omega), m_(m) {
        if (!(omega > 0.0)) throw ConfigError("harmonic: omega must be positive");
        if (m == 0) throw ConfigError("harmonic: dimension must be positive");
    }

    double omega() const { return omega_; }
    std::size_t dim() const override { return m_; }

    double potential(std::span<const double> q) const override {
        check_dim(q);
        double acc = 0.0;
        for (double v : q) acc += v * v;
        return 0.5 * omega_ * omega_ * acc;
    }
    void gradient(std::span<const double> q, std::span<double> out) const override {
        check_dim(q);
        for (std::size_t i = 0; i < m_; ++i) out[i] = omega_ * omega_ * q[i];
    }
    DenseMatrix hessian(std::span<const double> q) const override {
        check_dim(q);
        DenseMatrix h(m_, m_);
        for (std::size_t i = 0; i < m_; ++i) h(i, i) = omega_ * omega_;
        return h;
    }
    std::string name() const override { return "harmonic"; }

    /// Exact flow at time t: (q(t), p(t)).
    std::pair<Vector, Vector> exact(std::span<const double> q0, std::span<const double> p0, double t) const {
        Vector q(m_), p(m_);
        const double c = std::cos(omega_ * t), s = std::sin(omega_ * t);
        for (std::size_t i = 0; i < m_; ++i) {
            q[i] = q0[i] * c + p0[i] / omega_ * s;
            p[i] = -q0[i] * omega_ * s + p0[i] * c;
        }
        return {q, p};
    }

private:
    double omega_;
    std::size_t m_;
};

/// U(q) = -cos q.
class Pendulum final : public SeparableSystem {
public:
    using SeparableSystem::gradient;

    std::size_t dim() const override { return 1; }
    double potential(std::span<const double> q) const override {
        check_dim(q);
        return -std::cos(q[0]);
    }
    void gradient(std::span<const double> q, std::span<double> out) const override {
        check_dim(q);
        out[0] = std::sin(q[0]);
    }
    DenseMatrix hessian(std::span<const double> q) const override {
        check_dim(q);
        return DenseMatrix{{std::cos(q[0])}};
    }
    std::string name() const override { return "pendulum"; }
};

struct FpuParams {
    std::size_t m_pairs = 3;
    double omega = 100.0;
    int coupling_exponent = 4;          // 4: quartic soft springs, 2: quadratic
    double quadratic_prefactor = 0.25;  // stiff energy = prefactor * omega^2 * sum (q_{2i} - q_{2i-1})^2
};

/// Fermi-Pasta-Ulam chain: m stiff springs of frequency omega joined by soft
/// nonlinear springs, with fixed ends q_0 = q_{2m+1} = 0.
///
///   U(q) = a omega^2 sum_{i=1}^{m} (q_{2i} - q_{2i-1})^2 + sum_{i=0}^{m} (q_{2i+1} - q_{2i})^E
class Fpu final : public SeparableSystem {
public:
    using SeparableSystem::gradient;

    explicit Fpu(FpuParams params) : par_(params) {
        if (par_.m_pairs == 0) throw ConfigError("fpu: m_pairs must be positive");
        if (!(par_.omega > 0.0)) throw ConfigError("fpu: omega must be positive");
        if (par_.coupling_exponent != 2 && par_.coupling_exponent != 4) {
            throw ConfigError("fpu: coupling_exponent must be 2 or 4");
        }
        if (!(par_.quadratic_prefactor > 0.0)) throw ConfigError("fpu: quadratic_prefactor must be positive");
    }

    const FpuParams& params() const { return par_; }
    std::size_t dim() const override { return 2 * par_.m_pairs; }
    std::string name() const override { return "fpu"; }

    double potential(std::span<const double> q) const override {
        check_dim(q);
        const double a = par_.quadratic_prefactor * par_.omega * par_.omega;
        double stiff = 0.0;
        for (std::size_t i = 0; i < par_.m_pairs; ++i) {
            const double d = q[2 * i + 1] - q[2 * i];
            stiff += d * d;
        }
        double soft = 0.0;
        for (std::size_t i = 0; i <= par_.m_pairs; ++i) soft += soft_term(soft_stretch(q, i));
        return a * stiff + soft;
    }

    void gradient(std::span<const double> q, std::span<double> out) const override {
        check_dim(q);
        std::fill(out.begin(), out.end(), 0.0);
        const double a2 = 2.0 * par_.quadratic_prefactor * par_.omega * par_.omega;
        for (std::size_t i = 0; i < par_.m_pairs; ++i) {
            const double f = a2 * (q[2 * i + 1] - q[2 * i]);
            out[2 * i + 1] += f;
            out[2 * i] -= f;
        }
        const std::size_t n = dim();
        for (std::size_t i = 0; i <= par_.m_pairs; ++i) {
            const double f = soft_slope(soft_stretch(q, i));
            // spring i joins 0-based coordinates 2i-1 (left) and 2i (right)
            if (2 * i < n) out[2 * i] += f;
            if (i > 0) out[2 * i - 1] -= f;
        }
    }

    DenseMatrix hessian(std::span<const double> q) const override {
        check_dim(q);
        const std::size_t n = dim();
        DenseMatrix h(n, n);
        const double a2 = 2.0 * par_.quadratic_prefactor * par_.omega * par_.omega;
        for (std::size_t i = 0; i < par_.m_pairs; ++i) {
            const std::size_t l = 2 * i, r = 2 * i + 1;
            h(l, l) += a2;
            h(r, r) += a2;
            h(l, r) -= a2;
            h(r, l) -= a2;
        }
        for (std::size_t i = 0; i <= par_.m_pairs; ++i) {
            const double k = soft_curvature(soft_stretch(q, i));
            const bool has_r = 2 * i < n, has_l = i > 0;
            if (has_r) h(2 * i, 2 * i) += k;
            if (has_l) h(2 * i - 1, 2 * i - 1) += k;
            if (has_r && has_l) {
                h(2 * i, 2 * i - 1) -= k;
                h(2 * i - 1, 2 * i) -= k;
            }
        }
        return h;
    }

private:
    // q_{2i+1} - q_{2i} in 1-based indexing, with the fixed ends.
    double soft_stretch(std::span<const double> q, std::size_t i) const {
        const std::size_t n = dim();
        const double right = 2 * i < n ? q[2 * i] : 0.0;
        const double left = i > 0 ? q[2 * i - 1] : 0.0;
        return right - left;
    }
    double soft_term(double d) const {
        const double d2 = d * d;
        return par_.coupling_exponent == 4 ? d2 * d2 : d2;
    }
    double soft_slope(double d) const { return par_.coupling_exponent == 4 ? 4.0 * d * d * d : 2.0 * d; }
    double soft_curvature(double d) const { return par_.coupling_exponent == 4 ? 12.0 * d * d : 2.0; }

    FpuParams par_;
};

/// A named problem together with its initial state.
struct ProblemPreset {
    std::shared_ptr<const SeparableSystem> system;
    Vector q0;
    Vector p0;
};

/// "fpu-paper": omega = 100, three stiff pairs, q0 = (0,1,2,3,4,5)/10, p0 = 0.
/// "harmonic": omega = 1, m = 1, q0 = 1, p0 = 0.
/// "pendulum": q0 = 1, p0 = 0.
inline ProblemPreset make_preset(std::string_view name) {
    if (name == "fpu-paper") {
        auto sys = std::make_shared<Fpu>(FpuParams{});
        return {sys, {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}, Vector(6, 0.0)};
    }
    if (name == "harmonic") return {std::make_shared<HarmonicOscillator>(1.0, 1), {1.0}, {0.0}};
    if (name == "pendulum") return {std::make_shared<Pendulum>(), {1.0}, {0.0}};
    throw ConfigError("unknown problem preset '" + std::string(name) + "'");
}

}  // namespace hbvm
