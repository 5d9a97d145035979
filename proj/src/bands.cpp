// SPDX-License-Identifier: Apache-2.0
#include "ksos/bands.hpp"

#include "ksos/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ksos {

double NormalizationRecord::scale_b(double b_user) const {
    return applied ? b_user / std::max(mean_width, kEps) : b_user;
}

RegParams NormalizationRecord::scale_reg(Side side, const RegParams& user) const {
    if (!applied) return user;
    const double nuc = side == Side::Low ? nuclear_low : nuclear_up;
    const double fro = side == Side::Low ? frob2_low : frob2_up;
    return {user.l1 / std::max(nuc, kEps), user.l2 / std::max(fro, kEps)};
}

ProblemSpec make_problem(const KernelModel& low, const KernelModel& up, const Vector& r, const BandHyper& h,
                         const NormalizationRecord& norm) {
    ProblemSpec spec;
    spec.r = r;
    spec.v_low = low.factor.V;
    spec.v_up = up.factor.V;
    spec.b = norm.scale_b(h.b);
    spec.reg_low = norm.scale_reg(Side::Low, h.reg_low);
    spec.reg_up = norm.scale_reg(Side::Up, h.reg_up);
    spec.penalty = h.penalty;
    return spec;
}

BandModel fit_band_model(const Matrix& x, const Vector& y, const Predictor& predictor, const BandHyper& h,
                         const NormalizationRecord& norm, const SolverOptions& opt,
                         const std::optional<DualState>& init) {
    if (x.rows() != y.size()) throw ParameterError("fit_band_model: size mismatch");
    if (h.penalty.kind == PenaltyKind::Operator && h.theta_low != h.theta_up)
        throw ParameterError("operator penalty requires θ_low = θ_up");

    BandModel bm;
    bm.predictor = predictor;
    bm.hyper = h;
    bm.normalization = norm;
    KernelSpec ks_low, ks_up;
    ks_low.lengthscale = h.theta_low;
    ks_up.lengthscale = h.theta_up;
    bm.kernel_low = KernelModel::build(x, ks_low, h.jitter);
    bm.kernel_up = h.theta_up == h.theta_low ? bm.kernel_low : KernelModel::build(x, ks_up, h.jitter);

    const Vector r = y - predictor.predict(x);
    const ProblemSpec spec = make_problem(bm.kernel_low, bm.kernel_up, r, h, norm);
    bm.b_effective = spec.b;
    bm.reg_low_effective = spec.reg_low;
    bm.reg_up_effective = spec.reg_up;

    SolveResult res = solve(spec, init, opt);
    bm.bands = std::move(res.bands);
    bm.report = std::move(res.report);
    bm.dual = std::move(res.state);
    return bm;
}

Vector eval_quadratic(const KernelModel& km, const Matrix& a, const Matrix& x) {
    if (a.rows() != km.size() || a.cols() != km.size()) throw ParameterError("eval_quadratic: matrix size mismatch");
    const Matrix phi = feature_maps(km, x);
    Vector out = (phi.array() * (a * phi).array()).colwise().sum().transpose();
    return out.cwiseMax(0.0);
}

Vector eval_band(const BandModel& bm, Side side, const Matrix& x) {
    return eval_quadratic(bm.kernel(side), bm.bands[side], x);
}

double score(double m_hat, double f_low, double f_up, double y) {
    return std::max(m_hat - f_low - y, y - m_hat - f_up);
}

Vector scores(const BandModel& bm, const Matrix& x, const Vector& y) {
    if (x.rows() != y.size()) throw ParameterError("scores: size mismatch");
    const Vector m = bm.predictor.predict(x);
    const Vector lo = eval_band(bm, Side::Low, x);
    const Vector up = eval_band(bm, Side::Up, x);
    Vector s(y.size());
    for (Index i = 0; i < y.size(); ++i) s(i) = score(m(i), lo(i), up(i), y(i));
    return s;
}

double sobolev_m(int d) {
    const double dd = static_cast<double>(d);
    return std::pow(2.0, 3.0 + dd / 2.0) * std::pow(2.0 * std::numbers::pi, dd / 2.0);
}

double sobolev_d(double theta, int d) {
    if (!(theta > 0.0)) throw ParameterError("sobolev_d: lengthscale must be positive");
    const double dd = static_cast<double>(d);
    return std::pow(2.0 * std::numbers::pi, dd / 4.0) * std::sqrt(dd / 3.0) / theta;
}

Matrix bounding_box_points(const Matrix& x, Index count, int max_grid_dim, std::uint64_t seed, bool* approximate) {
    if (x.rows() < 1 || count < 1) throw ParameterError("bounding_box_points: empty input");
    const Index d = x.cols();
    const Vector lo = x.colwise().minCoeff().transpose();
    const Vector hi = x.colwise().maxCoeff().transpose();
    if (d <= max_grid_dim) {
        if (approximate) *approximate = false;
        const auto per_dim =
            std::max<Index>(2, static_cast<Index>(std::ceil(std::pow(static_cast<double>(count), 1.0 / d) - 1e-9)));
        Index total = 1;
        for (Index j = 0; j < d; ++j) total *= per_dim;
        Matrix pts(total, d);
        for (Index p = 0; p < total; ++p) {
            Index rem = p;
            for (Index j = 0; j < d; ++j) {
                const Index k = rem % per_dim;
                rem /= per_dim;
                pts(p, j) = lo(j) + (hi(j) - lo(j)) * static_cast<double>(k) / static_cast<double>(per_dim - 1);
            }
        }
        return pts;
    }
    if (approximate) *approximate = true;
    Rng rng(seed, "bounding_box");
    Matrix pts(count, d);
    for (Index p = 0; p < count; ++p)
        for (Index j = 0; j < d; ++j) pts(p, j) = rng.uniform(lo(j), hi(j));
    return pts;
}

namespace {

double observed_gap(const BandModel& bm, const Matrix& pts) {
    const Vector lo = eval_band(bm, Side::Low, pts);
    const Vector up = eval_band(bm, Side::Up, pts);
    return (lo - up).cwiseAbs().maxCoeff();
}

}  // namespace

GapBound gap_bound_operator(const BandModel& bm, Index points, std::uint64_t seed) {
    if (bm.kernel_low.spec.lengthscale != bm.kernel_up.spec.lengthscale ||
        bm.kernel_low.factor.V != bm.kernel_up.factor.V)
        throw ParameterError("gap_bound_operator: both bands must share one kernel");
    GapBound g;
    const int d = static_cast<int>(bm.kernel_low.dim());
    const double kinf = bm.kernel_low.spec.variance;  // sup of a stationary kernel is k(x, x)
    g.bound = sobolev_m(d) * kinf * nuclear_norm(bm.bands.a_low - bm.bands.a_up);
    const Matrix pts = bounding_box_points(bm.x_train(), points, 2, seed, &g.approximate);
    g.observed_sup = observed_gap(bm, pts);
    return g;
}

GapBound gap_bound_trainset(const BandModel& bm, Index points, std::uint64_t seed) {
    GapBound g;
    const Matrix& x = bm.x_train();
    const int d = static_cast<int>(x.cols());
    const double theta = std::min(bm.kernel_low.spec.lengthscale, bm.kernel_up.spec.lengthscale);
    const Matrix pts = bounding_box_points(x, points, 3, seed, &g.approximate);
    if (bm.kernel_low.spec.lengthscale != bm.kernel_up.spec.lengthscale) g.approximate = true;

    double rho = 0.0;
    for (Index p = 0; p < pts.rows(); ++p) {
        double nearest = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < x.rows(); ++i) nearest = std::min(nearest, (x.row(i) - pts.row(p)).squaredNorm());
        rho = std::max(rho, nearest);
    }
    g.fill_distance = std::sqrt(rho);

    const double c = 2.0 * d * sobolev_d(theta, d) * sobolev_m(d) * nuclear_norm(bm.bands.a_low - bm.bands.a_up);
    const Vector diff = eval_band(bm, Side::Low, x) - eval_band(bm, Side::Up, x);
    g.bound = 2.0 * c * g.fill_distance + diff.norm();
    g.observed_sup = observed_gap(bm, pts);
    return g;
}

}  // namespace ksos
