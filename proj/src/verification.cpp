// SPDX-License-Identifier: Apache-2.0
#include "ksos/verification.hpp"

#include "ksos/rng.hpp"
#include "ksos/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ksos {

namespace {

struct Pair {
    Matrix low, up;
};

double inner(const Pair& a, const Pair& b) {
    return (a.low.array() * b.low.array()).sum() + (a.up.array() * b.up.array()).sum();
}

// Augmented-Lagrangian function of the primal with multipliers mu (low then up).
class Lagrangian {
public:
    Lagrangian(const ProblemSpec& spec, double eps) : spec_(spec), eps_(eps), n_(spec.size()) {}

    double operator()(const Pair& a, const Vector& mu, double rho, Pair* grad) const {
        const Vector f_low = train_values(a.low, spec_.v_low);
        const Vector f_up = train_values(a.up, spec_.v_up);
        const double bn = spec_.b / static_cast<double>(n_);
        double val = bn * (f_low.sum() + f_up.sum());
        val += spec_.reg_low.l1 * a.low.trace() + spec_.reg_low.l2 * a.low.squaredNorm();
        val += spec_.reg_up.l1 * a.up.trace() + spec_.reg_up.l2 * a.up.squaredNorm();

        // Coefficients c_i of v_i v_iᵀ in the gradient, per side.
        Vector c_low = Vector::Constant(n_, bn);
        Vector c_up = Vector::Constant(n_, bn);
        Matrix g_low = spec_.reg_low.l1 * Matrix::Identity(n_, n_) + 2.0 * spec_.reg_low.l2 * a.low;
        Matrix g_up = spec_.reg_up.l1 * Matrix::Identity(n_, n_) + 2.0 * spec_.reg_up.l2 * a.up;

        if (spec_.penalty.kind == PenaltyKind::TrainSet) {
            const Vector d = f_low - f_up;
            val += spec_.penalty.lambda * d.squaredNorm();
            c_low += 2.0 * spec_.penalty.lambda * d;
            c_up -= 2.0 * spec_.penalty.lambda * d;
        } else if (spec_.penalty.kind == PenaltyKind::Operator) {
            const Matrix diff = a.low - a.up;
            const SymmetricEigen eig = symmetric_eigen(diff);
            const Vector s = (eig.values.array().square() + eps_ * eps_).sqrt();
            val += spec_.penalty.l1 * s.sum() + spec_.penalty.l2 * diff.squaredNorm();
            const Matrix gd = spec_.penalty.l1 * eig.vectors * (eig.values.array() / s.array()).matrix().asDiagonal() *
                                  eig.vectors.transpose() +
                              2.0 * spec_.penalty.l2 * diff;
            g_low += gd;
            g_up -= gd;
        }

        for (Index i = 0; i < n_; ++i) {
            const double gl = -spec_.r(i) - f_low(i);
            const double gu = spec_.r(i) - f_up(i);
            const double sl = std::max(0.0, gl + mu(i) / rho);
            const double su = std::max(0.0, gu + mu(n_ + i) / rho);
            val += 0.5 * rho * (sl * sl + su * su) - (mu(i) * mu(i) + mu(n_ + i) * mu(n_ + i)) / (2.0 * rho);
            c_low(i) -= rho * sl;
            c_up(i) -= rho * su;
        }
        if (grad) {
            grad->low = g_low + spec_.v_low * c_low.asDiagonal() * spec_.v_low.transpose();
            grad->up = g_up + spec_.v_up * c_up.asDiagonal() * spec_.v_up.transpose();
            grad->low = 0.5 * (grad->low + grad->low.transpose());
            grad->up = 0.5 * (grad->up + grad->up.transpose());
        }
        return val;
    }

    Vector slacks(const Pair& a) const {
        const Vector f_low = train_values(a.low, spec_.v_low);
        const Vector f_up = train_values(a.up, spec_.v_up);
        Vector g(2 * n_);
        g.head(n_) = -spec_.r - f_low;
        g.tail(n_) = spec_.r - f_up;
        return g;
    }

private:
    const ProblemSpec& spec_;
    double eps_;
    Index n_;
};

Pair project(const Pair& a) { return {positive_part(a.low), positive_part(a.up)}; }

}  // namespace

OracleReport oracle_check(std::string name, double deviation, double tolerance) {
    if (!(deviation >= 0.0) && !std::isnan(deviation)) throw ParameterError("oracle_check: negative deviation");
    return {std::move(name), deviation, tolerance, deviation <= tolerance};
}

Vector fd_gradient(const std::function<double(const Vector&)>& fn, const Vector& point, double h) {
    if (!(h > 0.0)) throw ParameterError("fd_gradient: step must be positive");
    Vector g(point.size());
    Vector x = point;
    for (Index i = 0; i < point.size(); ++i) {
        const double xi = x(i);
        x(i) = xi + h;
        const double fp = fn(x);
        x(i) = xi - h;
        const double fm = fn(x);
        x(i) = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("fd_gradient: non-finite function value");
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

double primal_value(const BandPair& bp, const ProblemSpec& spec) { return primal_objective(bp, spec); }

PrimalBrute primal_brute(const ProblemSpec& spec, const BruteOptions& opt) {
    spec.validate();
    const Index n = spec.size();
    if (n > 3) throw ParameterError("primal_brute: only meant for n ≤ 3");
    if (opt.starts < 1 || opt.outer < 1 || opt.inner < 1) throw ParameterError("primal_brute: bad iteration counts");
    const Lagrangian lag(spec, opt.smoothing);
    const double scale = std::max(1.0, spec.r.cwiseAbs().maxCoeff());

    PrimalBrute best;
    best.value = std::numeric_limits<double>::infinity();
    for (int s = 0; s < opt.starts; ++s) {
        Rng rng(opt.seed, "primal_brute", static_cast<std::uint64_t>(s));
        Pair a;
        for (Matrix* m : {&a.low, &a.up}) {
            Matrix g(n, n);
            for (Index j = 0; j < n; ++j)
                for (Index i = 0; i < n; ++i) g(i, j) = rng.normal();
            *m = scale * g * g.transpose();
        }
        Vector mu = Vector::Zero(2 * n);
        double rho = 10.0;
        double step = 1e-2;
        double last_viol = std::numeric_limits<double>::infinity();
        for (int outer = 0; outer < opt.outer; ++outer) {
            for (int it = 0; it < opt.inner; ++it) {
                Pair g;
                const double f0 = lag(a, mu, rho, &g);
                step *= 2.0;
                Pair next;
                bool moved = false;
                for (int bt = 0; bt < 60; ++bt) {
                    next = project({a.low - step * g.low, a.up - step * g.up});
                    const Pair d{next.low - a.low, next.up - a.up};
                    const double f1 = lag(next, mu, rho, nullptr);
                    if (f1 <= f0 + inner(g, d) + inner(d, d) / (2.0 * step) + 1e-14 * std::abs(f0)) {
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (!moved) break;
                const double change = std::sqrt((next.low - a.low).squaredNorm() + (next.up - a.up).squaredNorm());
                a = std::move(next);
                if (change <= 1e-12 * scale) break;
            }
            const Vector slack = lag.slacks(a);
            mu = (mu + rho * slack).cwiseMax(0.0);
            const double viol = std::max(0.0, slack.maxCoeff());
            if (viol > 0.25 * last_viol) rho = std::min(rho * 4.0, 1e8);
            last_viol = viol;
        }
        BandPair bp{a.low, a.up};
        const double value = primal_objective(bp, spec);
        const double viol = constraint_violation(bp, spec);
        if (value < best.value) best = {value, bp, viol};
    }
    return best;
}

double hsic_brute(const Vector& u, const Vector& v) {
    if (u.size() != v.size() || u.size() < 1) throw ParameterError("hsic_brute: bad sample sizes");
    const Index n = u.size();
    Matrix k(n, n), l(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            k(i, j) = std::abs(u(i)) + std::abs(u(j)) - std::abs(u(i) - u(j));
            l(i, j) = std::abs(v(i)) + std::abs(v(j)) - std::abs(v(i) - v(j));
        }
    const auto nd = static_cast<double>(n);
    const double t1 = (k.array() * l.array()).sum() / (nd * nd);
    const double t2 = 2.0 * k.rowwise().sum().dot(l.rowwise().sum()) / (nd * nd * nd);
    const double t3 = k.sum() * l.sum() / (nd * nd * nd * nd);
    return t1 - t2 + t3;
}

double quantile_oracle(const Vector& scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("quantile_oracle: α must lie in (0, 1)");
    std::vector<double> s(scores.data(), scores.data() + scores.size());
    std::sort(s.begin(), s.end());
    const long double target = (1.0L - static_cast<long double>(alpha)) * static_cast<long double>(s.size() + 1);
    for (std::size_t j = 0; j < s.size(); ++j) {
        if (static_cast<long double>(j + 1) >= target - 1e-9L) return s[j];
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace ksos
