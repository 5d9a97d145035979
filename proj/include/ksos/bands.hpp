// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/predictor.hpp"
#include "ksos/solver.hpp"
#include "ksos/spectral.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ksos {

/// Scale reference taken from an initial unpenalized fit: the weights passed
/// to the solver are the user weights divided by these quantities.
struct NormalizationRecord {
    bool applied = false;
    double mean_width = 1.0;   ///< MW⁰ = mean of f_low + f_up on the training inputs
    double nuclear_low = 1.0;  ///< ‖A⁰_low‖_*
    double nuclear_up = 1.0;
    double frob2_low = 1.0;  ///< ‖A⁰_low‖_F²
    double frob2_up = 1.0;
    std::string note;

    static constexpr double kEps = 1e-8;

    double scale_b(double b_user) const;
    RegParams scale_reg(Side side, const RegParams& user) const;
};

/// Hyperparameters of one band fit, before normalization.
struct BandHyper {
    double theta_low = 1.0;
    double theta_up = 1.0;
    double b = 10.0;
    RegParams reg_low;
    RegParams reg_up;
    Penalty penalty = Penalty::trainset(1.0);
    double jitter = 0.0;
};

/// A trained pair of bands around a mean model.
struct BandModel {
    Predictor predictor;
    KernelModel kernel_low;
    KernelModel kernel_up;
    BandPair bands;
    NormalizationRecord normalization;
    BandHyper hyper;          ///< user-level settings
    double b_effective = 0.0;  ///< weights actually handed to the solver
    RegParams reg_low_effective;
    RegParams reg_up_effective;
    SolveReport report;
    DualState dual;

    const KernelModel& kernel(Side side) const { return side == Side::Low ? kernel_low : kernel_up; }
    const Matrix& x_train() const { return kernel_low.x_train; }
};

/// Builds the solver problem for inputs x with residuals r under `h` and `norm`.
ProblemSpec make_problem(const KernelModel& low, const KernelModel& up, const Vector& r, const BandHyper& h,
                         const NormalizationRecord& norm);

/// Fits bands on (x, y) around `predictor`: residuals, Gram factors, dual solve
/// and primal recovery. A warm start may be passed through `init`.
BandModel fit_band_model(const Matrix& x, const Vector& y, const Predictor& predictor, const BandHyper& h,
                         const NormalizationRecord& norm = {}, const SolverOptions& opt = {},
                         const std::optional<DualState>& init = std::nullopt);

/// f_side(x) = Φ(x)ᵀ A Φ(x) at each row of x; tiny negative values are clamped to 0.
Vector eval_band(const BandModel& bm, Side side, const Matrix& x);
/// Same quadratic form for an arbitrary coefficient matrix.
Vector eval_quadratic(const KernelModel& km, const Matrix& a, const Matrix& x);

/// S(x, y) = max(m̂(x) − f_low(x) − y, y − m̂(x) − f_up(x)).
double score(double m_hat, double f_low, double f_up, double y);
Vector scores(const BandModel& bm, const Matrix& x, const Vector& y);

/// Kernel constants for unit-variance Matérn 5/2 in dimension d.
double sobolev_m(int d);
double sobolev_d(double theta, int d);

struct GapBound {
    double bound = 0.0;
    double observed_sup = 0.0;
    double fill_distance = 0.0;  ///< trainset bound only
    bool approximate = false;    ///< grid replaced by random samples, or kernels differ
};

/// Evaluation points over the bounding box of x: a regular grid of about
/// `count` points for d ≤ max_grid_dim, otherwise uniform random samples.
Matrix bounding_box_points(const Matrix& x, Index count, int max_grid_dim, std::uint64_t seed, bool* approximate);

/// ‖f_low − f_up‖_∞ ≤ M‖k‖_∞‖A_low − A_up‖_* with the sup estimated on 10⁴ points.
GapBound gap_bound_operator(const BandModel& bm, Index points = 10000, std::uint64_t seed = 0);
/// 2Cρ + ‖(f_low − f_up)(X_i)‖₂ with C = 2dDM‖A_low − A_up‖_* and ρ the fill distance.
GapBound gap_bound_trainset(const BandModel& bm, Index points = 10000, std::uint64_t seed = 0);

}  // namespace ksos
