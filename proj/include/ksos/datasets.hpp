// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ksos {

struct Dataset {
    Matrix x;
    Vector y;
    std::optional<Vector> m_hat;
    std::string provenance;

    Index size() const { return y.size(); }
    Index dim() const { return x.cols(); }
    void validate() const;
    Dataset subset(const std::vector<Index>& rows) const;
};

/// The six synthetic generators, numbered as in the usual benchmark appendix:
///   1  piecewise sine mean, σ = √(0.1 + 2X²), Gaussian noise, X ~ U[−1, 1]
///   2  m = 0.5 Σx, σ = Σ|sin x|, Gaussian noise, X ~ N(0, I_d)
///   3  m = sin 5X, σ = X, Lognormal(0, 1) noise, X ~ U[−1, 1]
///   4  m = sin X, split-normal noise (σ₋ = 0.2, σ₊ = 0.4(sin X + 1) + 0.1), X ~ U[0, 4π]
///   5  m = sin 2X, σ = 0.5 + 2X, Exp(1) noise, X ~ U[−1, 1]
///   6  m = 2 sin(πβᵀX) + πβᵀX, σ = √(1 + (βᵀX)²), Gaussian noise, X ~ U[0, 1]^d
/// Cases 1, 3, 4 and 5 are one-dimensional.
struct SyntheticCase {
    int id = 1;
    int dim = 1;
    Vector beta;  ///< case 6 only; defaults to ones

    static SyntheticCase make(int id, int dim = 1);
    void validate() const;

    double mean(const Eigen::Ref<const Vector>& x) const;
    /// Draws one input from the case's input law.
    Vector sample_x(Rng& rng) const;
    /// Draws Y | X = x.
    double sample_y(const Eigen::Ref<const Vector>& x, Rng& rng) const;
    /// p-quantile of Y | X = x.
    double conditional_quantile(const Eigen::Ref<const Vector>& x, double p) const;
    /// Width weight b customarily used with this case (0 for case 6, else 10).
    double default_b() const { return id == 6 ? 0.0 : 10.0; }
};

/// n i.i.d. draws; reproducible from the seed alone.
Dataset generate(const SyntheticCase& c, Index n, std::uint64_t seed);

/// n_y i.i.d. draws of Y | X = x.
Vector conditional_sample(const SyntheticCase& c, const Eigen::Ref<const Vector>& x, Index n_y, std::uint64_t seed);

/// Reads `x0,...,x{d-1},y[,m_hat]` with a header row.
Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

struct SplitPlan {
    Index n_pretrain = 0;
    Index n_cal = 0;
    Index n_test = 0;
    std::uint64_t seed = 0;
};

struct Split {
    Dataset pretrain, cal, test;
    std::vector<Index> idx_pretrain, idx_cal, idx_test;
};

/// Shuffles row indices with the seed and cuts them into three disjoint blocks.
Split split(const Dataset& ds, const SplitPlan& plan);

/// Standard normal quantile function.
double normal_quantile(double p);

}  // namespace ksos
