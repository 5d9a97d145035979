// SPDX-License-Identifier: Apache-2.0
#include "ksos/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ksos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha, const char* what) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError(std::string(what) + ": α must lie in (0, 1)");
}

}  // namespace

Index conformal_rank(Index m, double alpha) {
    check_alpha(alpha, "conformal_rank");
    if (m < 1) throw ParameterError("conformal_rank: need at least one score");
    const double t = (1.0 - alpha) * static_cast<double>(m + 1);
    const double nearest = std::round(t);
    if (std::abs(t - nearest) <= 1e-9 * std::max(1.0, t)) return static_cast<Index>(nearest);
    return static_cast<Index>(std::ceil(t));
}

ConformalQuantile conformal_quantile(const Vector& scores, double alpha) {
    if (scores.size() == 0) throw ParameterError("conformal_quantile: empty score set");
    if (!scores.allFinite()) throw ParameterError("conformal_quantile: non-finite scores");
    ConformalQuantile q;
    q.k = conformal_rank(scores.size(), alpha);
    if (q.k > scores.size()) {
        q.value = kInf;
        q.infinite = true;
        return q;
    }
    std::vector<double> v(scores.data(), scores.data() + scores.size());
    const auto kth = v.begin() + (q.k - 1);
    std::nth_element(v.begin(), kth, v.end());
    q.value = *kth;
    return q;
}

const char* to_string(CalibrationMode mode) {
    return mode == CalibrationMode::Symmetric ? "symmetric" : "asymmetric";
}

CalibrationMode calibration_mode_from_string(const std::string& name) {
    if (name == "symmetric") return CalibrationMode::Symmetric;
    if (name == "asymmetric") return CalibrationMode::Asymmetric;
    throw ParameterError("unknown calibration mode '" + name + "'");
}

CalibrationResult calibrate_raw(const Vector& m_hat, const Vector& f_low, const Vector& f_up, const Vector& y,
                                double alpha, CalibrationMode mode, double alpha_low) {
    check_alpha(alpha, "calibrate");
    const Index m = y.size();
    if (m < 1) throw ParameterError("calibrate: empty calibration set");
    if (m_hat.size() != m || f_low.size() != m || f_up.size() != m)
        throw ParameterError("calibrate: size mismatch");

    CalibrationResult cal;
    cal.mode = mode;
    cal.alpha = alpha;
    cal.m = m;
    if (mode == CalibrationMode::Symmetric) {
        Vector s(m);
        for (Index i = 0; i < m; ++i) s(i) = score(m_hat(i), f_low(i), f_up(i), y(i));
        cal.q = conformal_quantile(s, alpha);
        cal.alpha_low = cal.alpha_up = alpha / 2.0;
        return cal;
    }
    cal.alpha_low = alpha_low < 0.0 ? alpha / 2.0 : alpha_low;
    cal.alpha_up = alpha - cal.alpha_low;
    if (!(cal.alpha_low > 0.0) || !(cal.alpha_up > 0.0))
        throw ParameterError("calibrate: α_low and α_up must both be positive");
    const Vector lo = m_hat - f_low;
    const Vector hi = m_hat + f_up;
    cal.q_low = conformal_quantile(lo - y, cal.alpha_low);
    cal.q_up = conformal_quantile(y - hi, cal.alpha_up);
    return cal;
}

CalibrationResult calibrate(const BandModel& bm, const Matrix& x_cal, const Vector& y_cal, double alpha,
                            CalibrationMode mode, double alpha_low) {
    if (x_cal.rows() != y_cal.size()) throw ParameterError("calibrate: size mismatch");
    return calibrate_raw(bm.predictor.predict(x_cal), eval_band(bm, Side::Low, x_cal), eval_band(bm, Side::Up, x_cal),
                         y_cal, alpha, mode, alpha_low);
}

std::vector<Interval> intervals_raw(const Vector& m_hat, const Vector& f_low, const Vector& f_up,
                                    const CalibrationResult& cal) {
    const Index n = m_hat.size();
    if (f_low.size() != n || f_up.size() != n) throw ParameterError("intervals: size mismatch");
    const double q_lo = cal.mode == CalibrationMode::Symmetric ? cal.q.value : cal.q_low.value;
    const double q_hi = cal.mode == CalibrationMode::Symmetric ? cal.q.value : cal.q_up.value;
    std::vector<Interval> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Interval& iv = out[static_cast<std::size_t>(i)];
        iv.lo = std::isinf(q_lo) ? -kInf : m_hat(i) - f_low(i) - q_lo;
        iv.hi = std::isinf(q_hi) ? kInf : m_hat(i) + f_up(i) + q_hi;
        iv.empty = iv.lo > iv.hi;
    }
    return out;
}

std::vector<Interval> intervals(const BandModel& bm, const CalibrationResult& cal, const Matrix& x) {
    return intervals_raw(bm.predictor.predict(x), eval_band(bm, Side::Low, x), eval_band(bm, Side::Up, x), cal);
}

double coverage(const std::vector<Interval>& iv, const Vector& y) {
    if (static_cast<Index>(iv.size()) != y.size()) throw ParameterError("coverage: length mismatch");
    if (iv.empty()) throw ParameterError("coverage: no intervals");
    Index hit = 0;
    for (std::size_t i = 0; i < iv.size(); ++i) hit += iv[i].contains(y(static_cast<Index>(i))) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(iv.size());
}

}  // namespace ksos
