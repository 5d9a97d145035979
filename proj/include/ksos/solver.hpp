// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/lbfgsb.hpp"
#include "ksos/spectral.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ksos {

enum class PenaltyKind { None, Operator, TrainSet };

const char* to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& name);

/// Symmetry penalty. Operator uses (l1, l2) on ‖A_low − A_up‖; TrainSet uses
/// `lambda` on Σ (f_low(X_i) − f_up(X_i))².
struct Penalty {
    PenaltyKind kind = PenaltyKind::None;
    double l1 = 0.0;
    double l2 = 1.0;
    double lambda = 1.0;

    static Penalty none() { return {}; }
    static Penalty op(double l1, double l2) { return {PenaltyKind::Operator, l1, l2, 1.0}; }
    static Penalty trainset(double lambda) { return {PenaltyKind::TrainSet, 0.0, 1.0, lambda}; }

    /// Sets the intensity along a sweep: λ_pen for TrainSet, λp1 = λp2 = λ for Operator.
    Penalty with_intensity(double lambda) const;
    double intensity() const { return kind == PenaltyKind::TrainSet ? lambda : l2; }
    void validate() const;
};

/// One finite-dimensional band learning problem.
///
/// `r` holds Y_i − m̂(X_i); the lower side works with −r. `v_low` and `v_up`
/// are the upper Cholesky factors of the two Gram matrices.
struct ProblemSpec {
    Vector r;
    Matrix v_low;
    Matrix v_up;
    double b = 0.0;
    RegParams reg_low;
    RegParams reg_up;
    Penalty penalty;

    Index size() const { return r.size(); }
    Vector residual(Side side) const { return side == Side::Low ? Vector(-r) : r; }
    const Matrix& factor(Side side) const { return side == Side::Low ? v_low : v_up; }
    const RegParams& reg(Side side) const { return side == Side::Low ? reg_low : reg_up; }
    void validate() const;
};

/// Lagrange multipliers and coupling variable (W for Operator, α₀ for TrainSet).
struct DualState {
    PenaltyKind kind = PenaltyKind::None;
    Vector gamma_low;
    Vector gamma_up;
    Matrix w;
    Vector alpha0;

    static DualState zeros(const ProblemSpec& spec);
    Index size() const { return gamma_low.size(); }
    /// Flattened [Γ_low, Γ_up, coupling]; W is stored as its upper triangle
    /// with off-diagonal entries scaled by √2 so the packing is an isometry.
    Vector pack() const;
    static DualState unpack(const ProblemSpec& spec, const Vector& x);
    static Index packed_size(const ProblemSpec& spec);
    std::vector<bool> nonneg_mask() const;
};

/// Unpenalized one-sided dual: Γ·r_side − Ω*₊(V Diag(Γ − b/n) Vᵀ).
/// Writes the gradient into `grad` when non-null.
double dual_objective_asym(const Vector& gamma, Side side, const ProblemSpec& spec, Vector* grad = nullptr);
/// Operator-penalty dual; gradient returned in DualState layout.
double dual_objective_operator(const DualState& ds, const ProblemSpec& spec, DualState* grad = nullptr);
/// Training-set-penalty dual; gradient returned in DualState layout.
double dual_objective_trainset(const DualState& ds, const ProblemSpec& spec, DualState* grad = nullptr);
/// Dispatches on spec.penalty; for None this is the sum of the two one-sided duals.
double dual_objective(const DualState& ds, const ProblemSpec& spec, DualState* grad = nullptr);

struct BandPair {
    Matrix a_low;
    Matrix a_up;

    const Matrix& operator[](Side side) const { return side == Side::Low ? a_low : a_up; }
};

/// Primal recovery from a dual point; both matrices are PSD by construction.
BandPair recover_primal(const DualState& ds, const ProblemSpec& spec);

/// diag(Vᵀ A V): band values at the training inputs.
Vector train_values(const Matrix& a, const Matrix& v);

/// Primal objective of the problem matching spec.penalty, evaluated at `bp`.
double primal_objective(const BandPair& bp, const ProblemSpec& spec);

/// Stopping rule: ‖projected gradient‖∞ ≤ tol·scale. The dual gradient in Γ is
/// the constraint slack r_i − f(X_i), so by default the scale is the residual
/// spread (interquartile range of r, falling back to max|r|, then 1); with
/// `objective_scale` it is max(1, |objective|) instead.
struct SolverOptions {
    int max_iter = 10000;
    double tol = 1e-2;
    int memory = 10;
    bool objective_scale = false;
};

/// Interquartile range of r (linear interpolation between order statistics).
double interquartile_range(const Vector& r);
/// Gradient scale used by the default stopping rule.
double residual_scale(const Vector& r);

struct SolveReport {
    int iterations = 0;
    int evaluations = 0;
    std::vector<double> objective_trace;
    bool converged = false;
    std::string message;
    double objective = 0.0;  ///< dual value at the returned point
    double pg_norm = 0.0;
    double constraint_violation = 0.0;
    std::optional<double> duality_gap_rel;
};

/// max_i max(0, r_low,i − f_low(X_i), r_up,i − f_up(X_i)).
double constraint_violation(const BandPair& bp, const ProblemSpec& spec);

/// Constraint violation, plus the relative duality gap |P − D|/(1 + |D|) when
/// n ≤ 30 and a dual point is supplied.
SolveReport kkt_check(const BandPair& bp, const ProblemSpec& spec, const DualState* ds = nullptr);

struct SolveResult {
    DualState state;
    BandPair bands;
    SolveReport report;
};

/// Maximizes the dual with Γ ≥ 0, starting from `init` or from zero.
SolveResult solve(const ProblemSpec& spec, const std::optional<DualState>& init = std::nullopt,
                  const SolverOptions& opt = {});

struct SweepPoint {
    double lambda = 0.0;
    SolveResult result;
};

/// Solves along an ascending penalty grid. With `warm` each point starts from
/// the previous optimum; otherwise every point starts from zero.
std::vector<SweepPoint> warm_start_sweep(const ProblemSpec& base, const std::vector<double>& grid, bool warm = true,
                                         const SolverOptions& opt = {});

}  // namespace ksos
