// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/bands.hpp"
#include "ksos/common.hpp"
#include "ksos/predictor.hpp"
#include "ksos/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ksos {

/// Biased V-statistic HSIC with the energy-distance kernel
/// k(x, x') = |x| + |x'| − |x − x'| on both samples: (1/n²) tr(H K_u H K_v).
double hsic(const Vector& u, const Vector& v);

/// Energy-kernel Gram matrix after double centering, H K H.
Matrix centered_energy_gram(const Vector& u);

struct KruskalWallis {
    double h = 0.0;
    double p = 1.0;
};

/// H statistic with mid-ranks for ties (no tie correction).
double kruskal_wallis_h(const std::vector<Vector>& groups);

/// H and its permutation p-value (1 + #{H_perm ≥ H_obs}) / (B + 1) from B
/// random relabellings that keep the group sizes.
KruskalWallis kruskal_wallis_perm(const std::vector<Vector>& groups, int permutations, std::uint64_t seed);

struct IndependenceTest {
    double hsic = 0.0;
    double p = 1.0;
    bool fallback = true;  ///< p ≥ level: no detectable dependence
};

/// Permutation test of HSIC(u, v) = 0, shuffling v.
IndependenceTest independence_fallback(const Vector& u, const Vector& v, int permutations, double level,
                                       std::uint64_t seed);

/// Fits an unpenalized reference model at the median-heuristic lengthscale with
/// (b_user, λ1 = λ2 = 1) and records its mean width and norms. On solver
/// failure the record is returned with applied = false.
NormalizationRecord normalize_hyperparameters(const Matrix& x, const Vector& y, const Predictor& predictor,
                                              double b_user, const SolverOptions& opt = {}, double jitter = 0.0,
                                              const NormalizationRecord* reference = nullptr);

enum class ReplicateMode {
    Bootstrap,  ///< resample pooled out-of-fold (W, R) pairs
    Refold,     ///< redraw the fold assignment and refit
};

const char* to_string(ReplicateMode mode);
ReplicateMode replicate_mode_from_string(const std::string& name);

struct TuneConfig {
    std::vector<double> theta_grid;  ///< empty: median distance × logspace(0.1, 10, theta_points)
    int theta_points = 8;
    std::vector<double> lambda_grid;  ///< empty: logspace(1e-4, 1e4, lambda_points)
    int lambda_points = 10;
    int folds = 5;
    int replicates = 20;
    int permutations = 2000;
    double level = 0.05;
    double b = 10.0;
    PenaltyKind penalty = PenaltyKind::TrainSet;
    RegParams reg_low;
    RegParams reg_up;
    bool normalize = true;
    bool asymmetric_refine = true;  ///< ±1 grid step per side on the winner
    bool full_2d = false;           ///< exhaustive (θ_low, θ_up) grid, TrainSet only
    ReplicateMode replicate_mode = ReplicateMode::Bootstrap;
    double homoscedastic_factor = 1e3;  ///< fallback θ = factor × data diameter
    double jitter = 0.0;
    SolverOptions solver;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Default grids resolved against the data.
std::vector<double> resolve_theta_grid(const TuneConfig& cfg, const Matrix& x);
std::vector<double> resolve_lambda_grid(const TuneConfig& cfg);

/// Rows of each fold; fold of the i-th shuffled index is i mod K.
struct FoldPlan {
    std::vector<std::vector<Index>> train;
    std::vector<std::vector<Index>> test;
};
FoldPlan make_folds(Index n, int folds, std::uint64_t seed, std::uint64_t replicate);

/// Pooled out-of-fold samples for one configuration.
struct OutOfFold {
    Vector width;     ///< W = f_up + f_low
    Vector residual;  ///< R = |Y − m̂ − (f_up − f_low)/2|
    int failed_folds = 0;
    bool usable = false;  ///< at most K/2 folds failed
    long iterations = 0;
};

/// Cross-validated out-of-fold samples along an ascending λ grid, warm-starting
/// each fold's solves from the previous λ.
std::vector<OutOfFold> cv_sweep(const Matrix& x, const Vector& y, const Predictor& predictor, double theta_low,
                                double theta_up, const std::vector<double>& lambdas, const FoldPlan& plan,
                                const TuneConfig& cfg, const NormalizationRecord& norm);

/// HSIC(W_K, R_K) for one configuration; throws when more than K/2 folds fail.
double cv_hsic(double theta_low, double theta_up, double lambda, const Matrix& x, const Vector& y,
               const Predictor& predictor, const TuneConfig& cfg, const NormalizationRecord& norm = {});

struct LambdaSummary {
    double lambda = 0.0;
    double theta_low = 0.0;
    double theta_up = 0.0;
    double hsic = 0.0;  ///< cross-validated HSIC at the best θ
    std::vector<double> replicates;
    bool usable = false;
};

enum class TuneDecision { Selected, SymmetricFallback, Passthrough };
const char* to_string(TuneDecision d);

struct TuneResult {
    TuneDecision decision = TuneDecision::Selected;
    double theta_low = 0.0;
    double theta_up = 0.0;
    double lambda = 0.0;
    std::size_t lambda_index = 0;
    bool homoscedastic_fallback = false;
    std::vector<double> theta_grid;
    std::vector<std::pair<double, double>> theta_pairs;  ///< (θ_low, θ_up) candidates searched
    std::vector<double> lambda_grid;
    std::vector<std::vector<double>> hsic_table;  ///< [λ][θ pair], NaN for failed points
    std::vector<LambdaSummary> per_lambda;
    std::optional<KruskalWallis> kw;
    std::optional<IndependenceTest> independence;
    NormalizationRecord normalization;
    long iterations = 0;  ///< total solver iterations spent
    int failed_points = 0;
};

/// Selects (θ_low, θ_up, λ_pen) by cross-validated HSIC with a permutation
/// Kruskal–Wallis test across λ and a homoscedastic fallback.
TuneResult tune(const Matrix& x, const Vector& y, const Predictor& predictor, const TuneConfig& cfg);

}  // namespace ksos
