// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ksos {

/// Objective for minimization: returns f(x) and writes ∇f(x) into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
    int max_iter = 10000;
    double tol = 1e-2;  ///< stop when ‖projected gradient‖∞ ≤ tol·scale
    double grad_scale = 0.0;  ///< fixed scale; 0 means max(1, |f|) at the current iterate
    int memory = 10;
    int max_backtracks = 50;
    double armijo = 1e-4;
    int trace_every = 10;  ///< objective sampling period for the trace
};

struct LbfgsResult {
    Vector x;
    double f = 0.0;
    double pg_norm = 0.0;  ///< final projected-gradient infinity norm
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
    std::vector<double> trace;
};

/// Projected limited-memory quasi-Newton minimization where entries flagged in
/// `nonneg` are constrained to [0, ∞) and the rest are free.
///
/// Each iteration fixes the variables held at their bound by an outward
/// gradient, takes a two-loop L-BFGS direction on the remaining ones and runs
/// a projected Armijo backtracking search. Throws NumericalError if the
/// objective or gradient stops being finite.
LbfgsResult minimize_bounded(const Objective& fn, Vector x0, const std::vector<bool>& nonneg,
                             const LbfgsOptions& opt = {});

/// ‖x − P(x − g)‖∞, the first-order optimality measure used for stopping.
double projected_gradient_norm(const Vector& x, const Vector& g, const std::vector<bool>& nonneg);

}  // namespace ksos
