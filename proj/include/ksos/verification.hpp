// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/solver.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace ksos {

/// Outcome of one oracle comparison.
struct OracleReport {
    std::string name;
    double deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

OracleReport oracle_check(std::string name, double deviation, double tolerance);

/// Central differences, one coordinate at a time.
Vector fd_gradient(const std::function<double(const Vector&)>& fn, const Vector& point, double h = 1e-5);

/// Primal objective at a band pair (thin wrapper, named for the oracle suite).
double primal_value(const BandPair& bp, const ProblemSpec& spec);

struct BruteOptions {
    int starts = 4;
    int outer = 40;     ///< augmented-Lagrangian rounds
    int inner = 400;    ///< projected-gradient steps per round
    double smoothing = 1e-7;  ///< ε in Σ √(μ² + ε²) for the nuclear norm of A_low − A_up
    std::uint64_t seed = 0;
};

struct PrimalBrute {
    double value = 0.0;
    BandPair bands;
    double violation = 0.0;
};

/// Independent primal optimum for tiny problems (n ≤ 3): projected gradient on
/// the PSD variables inside an augmented-Lagrangian loop for the training
/// constraints, best of several random starts.
PrimalBrute primal_brute(const ProblemSpec& spec, const BruteOptions& opt = {});

/// HSIC from the explicit energy-kernel Grams:
/// (1/n²)ΣK∘L − (2/n³)Σ_i (ΣK)_i (ΣL)_i + (1/n⁴)ΣK ΣL.
double hsic_brute(const Vector& u, const Vector& v);

/// Smallest s with #{scores ≤ s} / (m + 1) ≥ 1 − α, +∞ if none.
double quantile_oracle(const Vector& scores, double alpha);

}  // namespace ksos
