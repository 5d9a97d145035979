// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"

#include <optional>

namespace ksos {

enum class KernelFamily { Matern52 };

/// Isotropic stationary kernel. Variance defaults to 1 so that band
/// amplitude lives entirely in the coefficient matrices.
struct KernelSpec {
    KernelFamily family = KernelFamily::Matern52;
    double lengthscale = 1.0;
    double variance = 1.0;

    void validate() const;
    double operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) const;
};

/// Matérn 5/2 with unit variance: (1 + √5 r/θ + 5r²/(3θ²)) exp(-√5 r/θ).
double matern52(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double lengthscale);
double matern52_radial(double r, double lengthscale);

/// Cross-kernel matrix between the rows of `a` and the rows of `b`.
Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec);

/// Cholesky factor of a Gram matrix, K + jitter I = Vᵀ V with V upper triangular.
struct GramFactor {
    Matrix K;  ///< raw kernel matrix, without jitter
    Matrix V;
    double jitter = 0.0;

    Index size() const { return K.rows(); }
};

/// Factorizes the Gram matrix of `x`. The requested jitter is tried first;
/// on failure it escalates from 1e-10·mean(diag K) by factors of 10 up to
/// 1e-6·mean(diag K), then throws NumericalError.
GramFactor gram(const Matrix& x, const KernelSpec& spec, double jitter = 0.0);

/// Kernel, training inputs and Gram factor bundled: one reproducing-kernel side.
struct KernelModel {
    KernelSpec spec;
    Matrix x_train;
    GramFactor factor;

    static KernelModel build(const Matrix& x_train, const KernelSpec& spec, double jitter = 0.0);

    Index size() const { return x_train.rows(); }
    Index dim() const { return x_train.cols(); }
};

/// Φ(x) = V^{-T} k(x) for a single point.
Vector feature_map(const KernelModel& km, const Eigen::Ref<const Vector>& x);
/// Column j holds Φ(x_j) for row j of `x`.
Matrix feature_maps(const KernelModel& km, const Matrix& x);

/// Eigendecomposition of (A + Aᵀ)/2, eigenvalues ascending.
struct SymmetricEigen {
    Vector values;
    Matrix vectors;
};
SymmetricEigen symmetric_eigen(const Matrix& a);

/// U max(0, D) Uᵀ.
Matrix positive_part(const Matrix& a);

struct RegParams {
    double l1 = 1.0;  ///< nuclear weight, >= 0
    double l2 = 1.0;  ///< Frobenius weight, > 0

    void validate() const;
};

/// Value and gradient of a spectral conjugate, sharing one eigendecomposition.
struct ConjugateEval {
    double value = 0.0;
    Matrix gradient;
};

/// (1/4λ2) ‖[B - λ1 I]₊‖_F² and its gradient (1/2λ2) [B - λ1 I]₊.
ConjugateEval omega_star_plus_eval(const Matrix& b, const RegParams& p);
double omega_star_plus(const Matrix& b, const RegParams& p);
Matrix grad_omega_star_plus(const Matrix& b, const RegParams& p);

/// (1/4λ2) Σ max(0, |λ_i(B)| - λ1)² and gradient U Diag(sign·max(0,|λ|-λ1)) Uᵀ / (2λ2).
ConjugateEval omega_star_pen_eval(const Matrix& b, const RegParams& p);
double omega_star_pen(const Matrix& b, const RegParams& p);
Matrix grad_omega_star_pen(const Matrix& b, const RegParams& p);

double nuclear_norm(const Matrix& a);

/// Median of the pairwise Euclidean distances between rows.
double median_pairwise_distance(const Matrix& x);
/// Largest pairwise distance between rows.
double diameter(const Matrix& x);

}  // namespace ksos
