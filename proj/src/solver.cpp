// SPDX-License-Identifier: Apache-2.0
#include "ksos/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ksos {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Value of Ω*₊(B), diag(Vᵀ ∇Ω*₊(B) V) and optionally ∇Ω*₊(B) itself.
struct PlusEval {
    double value = 0.0;
    Vector diag;
    Matrix grad;
};

PlusEval conj_plus(const Matrix& b, const Matrix& v, const RegParams& p, bool want_matrix) {
    const auto eig = symmetric_eigen(b);
    const Index n = b.rows();
    std::vector<Index> keep;
    for (Index k = 0; k < n; ++k)
        if (eig.values(k) - p.l1 > 0.0) keep.push_back(k);

    PlusEval out;
    out.diag = Vector::Zero(v.cols());
    if (want_matrix) out.grad = Matrix::Zero(n, n);
    if (keep.empty()) return out;

    const auto r = static_cast<Index>(keep.size());
    Matrix u(n, r);
    Vector w(r);
    for (Index c = 0; c < r; ++c) {
        const Index k = keep[static_cast<std::size_t>(c)];
        const double s = eig.values(k) - p.l1;
        out.value += s * s;
        u.col(c) = eig.vectors.col(k);
        w(c) = s / (2.0 * p.l2);
    }
    out.value /= 4.0 * p.l2;
    const Matrix proj = u.transpose() * v;
    out.diag = (proj.array().square().colwise() * w.array()).colwise().sum().transpose();
    if (want_matrix) {
        out.grad = u * w.asDiagonal() * u.transpose();
        out.grad = 0.5 * (out.grad + out.grad.transpose());
    }
    return out;
}

// V Diag(d) Vᵀ.
Matrix congruence(const Matrix& v, const Vector& d) {
    Matrix out = (v * d.asDiagonal()) * v.transpose();
    return 0.5 * (out + out.transpose());
}

void require_nonneg(const Vector& gamma, const char* what) {
    for (Index i = 0; i < gamma.size(); ++i)
        if (!(gamma(i) >= 0.0)) throw ParameterError(std::string(what) + ": multipliers must be nonnegative");
}

void check_shape(const DualState& ds, const ProblemSpec& spec, PenaltyKind kind, const char* what) {
    const Index n = spec.size();
    if (ds.kind != kind || ds.gamma_low.size() != n || ds.gamma_up.size() != n)
        throw ParameterError(std::string(what) + ": dual state does not match the problem");
    if (kind == PenaltyKind::Operator && (ds.w.rows() != n || ds.w.cols() != n))
        throw ParameterError(std::string(what) + ": coupling matrix has wrong size");
    if (kind == PenaltyKind::TrainSet && ds.alpha0.size() != n)
        throw ParameterError(std::string(what) + ": coupling vector has wrong size");
}

Vector shifted(const Vector& gamma, double b, Index n) {
    return (gamma.array() - b / static_cast<double>(n)).matrix();
}

}  // namespace

const char* to_string(PenaltyKind kind) {
    switch (kind) {
        case PenaltyKind::None: return "none";
        case PenaltyKind::Operator: return "operator";
        case PenaltyKind::TrainSet: return "trainset";
    }
    return "none";
}

PenaltyKind penalty_kind_from_string(const std::string& name) {
    if (name == "none") return PenaltyKind::None;
    if (name == "operator") return PenaltyKind::Operator;
    if (name == "trainset") return PenaltyKind::TrainSet;
    throw ParameterError("unknown penalty kind '" + name + "'");
}

Penalty Penalty::with_intensity(double lam) const {
    Penalty p = *this;
    if (kind == PenaltyKind::TrainSet) p.lambda = lam;
    if (kind == PenaltyKind::Operator) p.l1 = p.l2 = lam;
    return p;
}

void Penalty::validate() const {
    if (kind == PenaltyKind::Operator) {
        if (!(l1 >= 0.0) || !std::isfinite(l1)) throw ParameterError("operator penalty: λp1 must be nonnegative");
        if (!(l2 > 0.0) || !std::isfinite(l2)) throw ParameterError("operator penalty: λp2 must be positive");
    }
    if (kind == PenaltyKind::TrainSet && (!(lambda > 0.0) || !std::isfinite(lambda)))
        throw ParameterError("training-set penalty must be positive");
}

void ProblemSpec::validate() const {
    const Index n = r.size();
    if (n < 1) throw ParameterError("problem: empty residual vector");
    if (!r.allFinite()) throw ParameterError("problem: non-finite residuals");
    if (v_low.rows() != n || v_low.cols() != n || v_up.rows() != n || v_up.cols() != n)
        throw ParameterError("problem: Gram factors must be n×n");
    if (!v_low.allFinite() || !v_up.allFinite()) throw ParameterError("problem: non-finite Gram factor");
    if (!(b >= 0.0) || !std::isfinite(b)) throw ParameterError("problem: width weight b must be nonnegative");
    reg_low.validate();
    reg_up.validate();
    penalty.validate();
    if (penalty.kind == PenaltyKind::Operator && v_low != v_up)
        throw ParameterError("operator penalty requires a shared kernel on both sides");
}

DualState DualState::zeros(const ProblemSpec& spec) {
    const Index n = spec.size();
    DualState ds;
    ds.kind = spec.penalty.kind;
    ds.gamma_low = Vector::Zero(n);
    ds.gamma_up = Vector::Zero(n);
    if (ds.kind == PenaltyKind::Operator) ds.w = Matrix::Zero(n, n);
    if (ds.kind == PenaltyKind::TrainSet) ds.alpha0 = Vector::Zero(n);
    return ds;
}

Index DualState::packed_size(const ProblemSpec& spec) {
    const Index n = spec.size();
    switch (spec.penalty.kind) {
        case PenaltyKind::None: return 2 * n;
        case PenaltyKind::Operator: return 2 * n + n * (n + 1) / 2;
        case PenaltyKind::TrainSet: return 3 * n;
    }
    return 2 * n;
}

Vector DualState::pack() const {
    const Index n = size();
    Index total = 2 * n;
    if (kind == PenaltyKind::Operator) total += n * (n + 1) / 2;
    if (kind == PenaltyKind::TrainSet) total += n;
    Vector x(total);
    x.head(n) = gamma_low;
    x.segment(n, n) = gamma_up;
    Index pos = 2 * n;
    if (kind == PenaltyKind::Operator) {
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i <= j; ++i) x(pos++) = i == j ? w(i, j) : kSqrt2 * w(i, j);
    } else if (kind == PenaltyKind::TrainSet) {
        x.tail(n) = alpha0;
    }
    return x;
}

DualState DualState::unpack(const ProblemSpec& spec, const Vector& x) {
    if (x.size() != packed_size(spec)) throw ParameterError("dual state: packed vector has wrong size");
    const Index n = spec.size();
    DualState ds;
    ds.kind = spec.penalty.kind;
    ds.gamma_low = x.head(n);
    ds.gamma_up = x.segment(n, n);
    Index pos = 2 * n;
    if (ds.kind == PenaltyKind::Operator) {
        ds.w.resize(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i <= j; ++i) {
                const double val = i == j ? x(pos) : x(pos) / kSqrt2;
                ds.w(i, j) = ds.w(j, i) = val;
                ++pos;
            }
    } else if (ds.kind == PenaltyKind::TrainSet) {
        ds.alpha0 = x.tail(n);
    }
    return ds;
}

std::vector<bool> DualState::nonneg_mask() const {
    const Index n = size();
    Index total = 2 * n;
    if (kind == PenaltyKind::Operator) total += n * (n + 1) / 2;
    if (kind == PenaltyKind::TrainSet) total += n;
    std::vector<bool> mask(static_cast<std::size_t>(total), false);
    for (Index i = 0; i < 2 * n; ++i) mask[static_cast<std::size_t>(i)] = true;
    return mask;
}

double dual_objective_asym(const Vector& gamma, Side side, const ProblemSpec& spec, Vector* grad) {
    const Index n = spec.size();
    if (gamma.size() != n) throw ParameterError("dual_objective_asym: size mismatch");
    require_nonneg(gamma, "dual_objective_asym");
    const Matrix& v = spec.factor(side);
    const Vector rs = spec.residual(side);
    const PlusEval pe = conj_plus(congruence(v, shifted(gamma, spec.b, n)), v, spec.reg(side), false);
    if (grad) *grad = rs - pe.diag;
    return gamma.dot(rs) - pe.value;
}

double dual_objective_operator(const DualState& ds, const ProblemSpec& spec, DualState* grad) {
    if (spec.penalty.kind != PenaltyKind::Operator) throw ParameterError("dual_objective_operator: wrong penalty");
    check_shape(ds, spec, PenaltyKind::Operator, "dual_objective_operator");
    require_nonneg(ds.gamma_low, "dual_objective_operator");
    require_nonneg(ds.gamma_up, "dual_objective_operator");
    if (spec.v_low != spec.v_up) throw ParameterError("operator penalty requires a shared kernel on both sides");

    const Index n = spec.size();
    const Matrix& v = spec.v_low;
    const Matrix w = 0.5 * (ds.w + ds.w.transpose());
    const RegParams pen{spec.penalty.l1, spec.penalty.l2};
    const bool want = grad != nullptr;

    const ConjugateEval pe = omega_star_pen_eval(w, pen);
    const PlusEval lo = conj_plus(congruence(v, shifted(ds.gamma_low, spec.b, n)) - w, v, spec.reg_low, want);
    const PlusEval up = conj_plus(congruence(v, shifted(ds.gamma_up, spec.b, n)) + w, v, spec.reg_up, want);

    if (grad) {
        grad->kind = PenaltyKind::Operator;
        grad->gamma_low = -spec.r - lo.diag;
        grad->gamma_up = spec.r - up.diag;
        grad->w = -pe.gradient + lo.grad - up.grad;
        grad->alpha0.resize(0);
    }
    return (ds.gamma_up - ds.gamma_low).dot(spec.r) - pe.value - lo.value - up.value;
}

double dual_objective_trainset(const DualState& ds, const ProblemSpec& spec, DualState* grad) {
    if (spec.penalty.kind != PenaltyKind::TrainSet) throw ParameterError("dual_objective_trainset: wrong penalty");
    check_shape(ds, spec, PenaltyKind::TrainSet, "dual_objective_trainset");
    require_nonneg(ds.gamma_low, "dual_objective_trainset");
    require_nonneg(ds.gamma_up, "dual_objective_trainset");
    const double lam = spec.penalty.lambda;
    if (!(lam > 0.0)) throw ParameterError("training-set penalty must be positive");

    const Index n = spec.size();
    const PlusEval lo =
        conj_plus(congruence(spec.v_low, shifted(ds.gamma_low + ds.alpha0, spec.b, n)), spec.v_low, spec.reg_low, false);
    const PlusEval up =
        conj_plus(congruence(spec.v_up, shifted(ds.gamma_up - ds.alpha0, spec.b, n)), spec.v_up, spec.reg_up, false);

    if (grad) {
        grad->kind = PenaltyKind::TrainSet;
        grad->gamma_low = -spec.r - lo.diag;
        grad->gamma_up = spec.r - up.diag;
        grad->alpha0 = -ds.alpha0 / (2.0 * lam) - lo.diag + up.diag;
        grad->w.resize(0, 0);
    }
    return (ds.gamma_up - ds.gamma_low).dot(spec.r) - ds.alpha0.squaredNorm() / (4.0 * lam) - lo.value - up.value;
}

double dual_objective(const DualState& ds, const ProblemSpec& spec, DualState* grad) {
    switch (spec.penalty.kind) {
        case PenaltyKind::Operator: return dual_objective_operator(ds, spec, grad);
        case PenaltyKind::TrainSet: return dual_objective_trainset(ds, spec, grad);
        case PenaltyKind::None: break;
    }
    check_shape(ds, spec, PenaltyKind::None, "dual_objective");
    if (!grad) {
        return dual_objective_asym(ds.gamma_low, Side::Low, spec) + dual_objective_asym(ds.gamma_up, Side::Up, spec);
    }
    grad->kind = PenaltyKind::None;
    grad->w.resize(0, 0);
    grad->alpha0.resize(0);
    return dual_objective_asym(ds.gamma_low, Side::Low, spec, &grad->gamma_low) +
           dual_objective_asym(ds.gamma_up, Side::Up, spec, &grad->gamma_up);
}

BandPair recover_primal(const DualState& ds, const ProblemSpec& spec) {
    check_shape(ds, spec, spec.penalty.kind, "recover_primal");
    const Index n = spec.size();
    Vector d_low = ds.gamma_low, d_up = ds.gamma_up;
    if (ds.kind == PenaltyKind::TrainSet) {
        d_low += ds.alpha0;
        d_up -= ds.alpha0;
    }
    Matrix b_low = congruence(spec.v_low, shifted(d_low, spec.b, n));
    Matrix b_up = congruence(spec.v_up, shifted(d_up, spec.b, n));
    if (ds.kind == PenaltyKind::Operator) {
        const Matrix w = 0.5 * (ds.w + ds.w.transpose());
        b_low -= w;
        b_up += w;
    }
    return {conj_plus(b_low, spec.v_low, spec.reg_low, true).grad, conj_plus(b_up, spec.v_up, spec.reg_up, true).grad};
}

Vector train_values(const Matrix& a, const Matrix& v) {
    if (a.rows() != v.rows() || a.cols() != v.rows()) throw ParameterError("train_values: size mismatch");
    return (v.array() * (a * v).array()).colwise().sum().transpose();
}

double primal_objective(const BandPair& bp, const ProblemSpec& spec) {
    const Index n = spec.size();
    const Vector f_low = train_values(bp.a_low, spec.v_low);
    const Vector f_up = train_values(bp.a_up, spec.v_up);
    double obj = spec.b / static_cast<double>(n) * (f_low.sum() + f_up.sum());
    obj += spec.reg_low.l1 * nuclear_norm(bp.a_low) + spec.reg_low.l2 * bp.a_low.squaredNorm();
    obj += spec.reg_up.l1 * nuclear_norm(bp.a_up) + spec.reg_up.l2 * bp.a_up.squaredNorm();
    if (spec.penalty.kind == PenaltyKind::Operator) {
        const Matrix diff = bp.a_low - bp.a_up;
        obj += spec.penalty.l1 * nuclear_norm(diff) + spec.penalty.l2 * diff.squaredNorm();
    } else if (spec.penalty.kind == PenaltyKind::TrainSet) {
        obj += spec.penalty.lambda * (f_low - f_up).squaredNorm();
    }
    return obj;
}

double constraint_violation(const BandPair& bp, const ProblemSpec& spec) {
    const Vector f_low = train_values(bp.a_low, spec.v_low);
    const Vector f_up = train_values(bp.a_up, spec.v_up);
    double worst = 0.0;
    for (Index i = 0; i < spec.size(); ++i) {
        worst = std::max(worst, -spec.r(i) - f_low(i));
        worst = std::max(worst, spec.r(i) - f_up(i));
    }
    return worst;
}

SolveReport kkt_check(const BandPair& bp, const ProblemSpec& spec, const DualState* ds) {
    SolveReport rep;
    rep.constraint_violation = constraint_violation(bp, spec);
    if (ds && spec.size() <= 30) {
        const double dual = dual_objective(*ds, spec);
        rep.objective = dual;
        rep.duality_gap_rel = std::abs(primal_objective(bp, spec) - dual) / (1.0 + std::abs(dual));
    }
    return rep;
}

double interquartile_range(const Vector& r) {
    if (r.size() == 0) return 0.0;
    std::vector<double> v(r.data(), r.data() + r.size());
    std::sort(v.begin(), v.end());
    auto quantile = [&v](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return quantile(0.75) - quantile(0.25);
}

double residual_scale(const Vector& r) {
    const double iqr = interquartile_range(r);
    if (iqr > 0.0) return iqr;
    const double m = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
    return m > 0.0 ? m : 1.0;
}

SolveResult solve(const ProblemSpec& spec, const std::optional<DualState>& init, const SolverOptions& opt) {
    spec.validate();
    DualState start = init ? *init : DualState::zeros(spec);
    check_shape(start, spec, spec.penalty.kind, "solve");
    // Clip a slightly infeasible warm start instead of rejecting it.
    start.gamma_low = start.gamma_low.cwiseMax(0.0);
    start.gamma_up = start.gamma_up.cwiseMax(0.0);

    const Objective fn = [&spec](const Vector& x, Vector& g) {
        const DualState ds = DualState::unpack(spec, x);
        DualState gr;
        const double val = dual_objective(ds, spec, &gr);
        g = -gr.pack();
        return -val;
    };
    LbfgsOptions lo;
    lo.max_iter = opt.max_iter;
    lo.tol = opt.tol;
    lo.memory = opt.memory;
    lo.grad_scale = opt.objective_scale ? 0.0 : residual_scale(spec.r);
    const LbfgsResult res = minimize_bounded(fn, start.pack(), start.nonneg_mask(), lo);

    SolveResult out;
    out.state = DualState::unpack(spec, res.x);
    out.bands = recover_primal(out.state, spec);
    SolveReport& rep = out.report;
    rep = kkt_check(out.bands, spec, &out.state);
    rep.iterations = res.iterations;
    rep.evaluations = res.evaluations;
    rep.converged = res.converged;
    rep.message = res.message;
    rep.objective = -res.f;
    rep.pg_norm = res.pg_norm;
    rep.objective_trace.reserve(res.trace.size());
    for (double f : res.trace) rep.objective_trace.push_back(-f);
    return out;
}

std::vector<SweepPoint> warm_start_sweep(const ProblemSpec& base, const std::vector<double>& grid, bool warm,
                                         const SolverOptions& opt) {
    if (grid.empty()) throw ParameterError("warm_start_sweep: empty penalty grid");
    if (base.penalty.kind == PenaltyKind::None) throw ParameterError("warm_start_sweep: penalty kind required");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] < grid[i - 1]) throw ParameterError("warm_start_sweep: grid must be ascending");

    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    ProblemSpec spec = base;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        spec.penalty = base.penalty.with_intensity(grid[i]);
        std::optional<DualState> init;
        if (warm && i > 0) init = out.back().result.state;
        out.push_back({grid[i], solve(spec, init, opt)});
    }
    return out;
}

}  // namespace ksos
