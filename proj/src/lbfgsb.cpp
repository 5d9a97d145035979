// SPDX-License-Identifier: Apache-2.0
#include "ksos/lbfgsb.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace ksos {

namespace {

struct Pair {
    Vector s, y;
    double rho;
};

void project(Vector& x, const std::vector<bool>& nonneg) {
    for (Index i = 0; i < x.size(); ++i)
        if (nonneg[static_cast<std::size_t>(i)] && x(i) < 0.0) x(i) = 0.0;
}

void check_finite(double f, const Vector& g, int iter) {
    if (std::isfinite(f) && g.allFinite()) return;
    std::ostringstream os;
    os << "optimizer: non-finite " << (std::isfinite(f) ? "gradient" : "objective") << " at iteration " << iter;
    throw NumericalError(os.str());
}

}  // namespace

double projected_gradient_norm(const Vector& x, const Vector& g, const std::vector<bool>& nonneg) {
    double out = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        double pg = g(i);
        if (nonneg[static_cast<std::size_t>(i)] && g(i) > 0.0) pg = std::min(x(i), g(i));
        out = std::max(out, std::abs(pg));
    }
    return out;
}

LbfgsResult minimize_bounded(const Objective& fn, Vector x0, const std::vector<bool>& nonneg,
                             const LbfgsOptions& opt) {
    if (static_cast<std::size_t>(x0.size()) != nonneg.size())
        throw ParameterError("minimize_bounded: bound mask size mismatch");
    if (opt.max_iter < 0 || !(opt.tol > 0.0) || opt.memory < 1 || !(opt.grad_scale >= 0.0))
        throw ParameterError("minimize_bounded: invalid options");

    const Index n = x0.size();
    LbfgsResult res;
    Vector x = std::move(x0);
    project(x, nonneg);
    Vector g(n);
    double f = fn(x, g);
    ++res.evaluations;
    check_finite(f, g, 0);
    res.trace.push_back(f);

    std::deque<Pair> mem;
    Vector free_mask(n), d(n), q(n), x_new(n), g_new(n);
    std::vector<double> alpha;

    auto done = [&](double pg) {
        const double scale = opt.grad_scale > 0.0 ? opt.grad_scale : std::max(1.0, std::abs(f));
        return pg <= opt.tol * scale;
    };

    double pg = projected_gradient_norm(x, g, nonneg);
    while (true) {
        if (done(pg)) {
            res.converged = true;
            res.message = "projected gradient below tolerance";
            break;
        }
        if (res.iterations >= opt.max_iter) {
            res.message = "iteration limit reached";
            break;
        }

        // Variables pinned at zero with an outward gradient stay fixed this iteration.
        for (Index i = 0; i < n; ++i)
            free_mask(i) = (nonneg[static_cast<std::size_t>(i)] && x(i) <= 0.0 && g(i) > 0.0) ? 0.0 : 1.0;

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            q = g.cwiseProduct(free_mask);
            alpha.assign(mem.size(), 0.0);
            for (std::size_t k = mem.size(); k-- > 0;) {
                alpha[k] = mem[k].rho * mem[k].s.cwiseProduct(free_mask).dot(q);
                q -= alpha[k] * mem[k].y.cwiseProduct(free_mask);
            }
            if (!mem.empty()) {
                const Pair& last = mem.back();
                q *= last.s.dot(last.y) / last.y.squaredNorm();
            } else {
                const double gmax = g.cwiseProduct(free_mask).cwiseAbs().maxCoeff();
                if (gmax > 0.0) q /= std::max(1.0, gmax);
            }
            for (std::size_t k = 0; k < mem.size(); ++k) {
                const double beta = mem[k].rho * mem[k].y.cwiseProduct(free_mask).dot(q);
                q += (alpha[k] - beta) * mem[k].s.cwiseProduct(free_mask);
            }
            d = -q.cwiseProduct(free_mask);

            if (!(g.dot(d) < 0.0)) {
                mem.clear();
                continue;
            }

            double t = 1.0;
            for (int bt = 0; bt <= opt.max_backtracks; ++bt, t *= 0.5) {
                x_new = x + t * d;
                project(x_new, nonneg);
                const double decrease = g.dot(x_new - x);
                if (!(decrease < 0.0)) continue;
                const double f_new = fn(x_new, g_new);
                ++res.evaluations;
                if (std::isfinite(f_new) && f_new <= f + opt.armijo * decrease) {
                    check_finite(f_new, g_new, res.iterations + 1);
                    const Vector s = x_new - x;
                    const Vector y = g_new - g;
                    const double sy = s.dot(y);
                    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
                        mem.push_back({s, y, 1.0 / sy});
                        if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
                    }
                    x.swap(x_new);
                    g.swap(g_new);
                    f = f_new;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) mem.clear();
        }

        if (!accepted) {
            pg = projected_gradient_norm(x, g, nonneg);
            res.converged = done(pg);
            res.message = res.converged ? "projected gradient below tolerance" : "line search failed";
            break;
        }
        ++res.iterations;
        if (opt.trace_every > 0 && res.iterations % opt.trace_every == 0) res.trace.push_back(f);
        pg = projected_gradient_norm(x, g, nonneg);
    }

    if (res.trace.empty() || res.trace.back() != f) res.trace.push_back(f);
    res.x = std::move(x);
    res.f = f;
    res.pg_norm = pg;
    return res;
}

}  // namespace ksos
