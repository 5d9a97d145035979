// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/bands.hpp"
#include "ksos/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ksos {

struct ConformalQuantile {
    double value = 0.0;
    Index k = 0;            ///< rank used, ⌈(1−α)(m+1)⌉
    bool infinite = false;  ///< k > m: the interval is the whole line
};

/// ⌈(1−α)(m+1)⌉ computed so that products landing on an integer up to
/// rounding error are not bumped to the next rank.
Index conformal_rank(Index m, double alpha);

/// k-th smallest score with k = ⌈(1−α)(m+1)⌉, or +∞ when k > m.
ConformalQuantile conformal_quantile(const Vector& scores, double alpha);

enum class CalibrationMode { Symmetric, Asymmetric };

const char* to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(const std::string& name);

struct CalibrationResult {
    CalibrationMode mode = CalibrationMode::Symmetric;
    double alpha = 0.1;
    double alpha_low = 0.05;
    double alpha_up = 0.05;
    Index m = 0;
    ConformalQuantile q;      ///< symmetric mode
    ConformalQuantile q_low;  ///< asymmetric mode
    ConformalQuantile q_up;
};

/// Symmetric: quantile of the band scores. Asymmetric: separate quantiles of
/// l(X_i) − Y_i and Y_i − u(X_i) at levels α_low and α_up (α/2 each when
/// α_low is not given).
CalibrationResult calibrate(const BandModel& bm, const Matrix& x_cal, const Vector& y_cal, double alpha,
                            CalibrationMode mode = CalibrationMode::Symmetric, double alpha_low = -1.0);

/// Same, from precomputed predictions and band values on the calibration set.
CalibrationResult calibrate_raw(const Vector& m_hat, const Vector& f_low, const Vector& f_up, const Vector& y,
                                double alpha, CalibrationMode mode = CalibrationMode::Symmetric,
                                double alpha_low = -1.0);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool empty = false;  ///< lo > hi after calibration; never covers

    bool contains(double y) const { return !empty && lo <= y && y <= hi; }
    bool infinite() const { return !std::isfinite(lo) || !std::isfinite(hi); }
    double width() const { return empty ? 0.0 : hi - lo; }
};

std::vector<Interval> intervals(const BandModel& bm, const CalibrationResult& cal, const Matrix& x);
std::vector<Interval> intervals_raw(const Vector& m_hat, const Vector& f_low, const Vector& f_up,
                                    const CalibrationResult& cal);

/// Fraction of y inside the closed intervals.
double coverage(const std::vector<Interval>& iv, const Vector& y);

}  // namespace ksos
