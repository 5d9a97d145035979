// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/spectral.hpp"

#include <map>
#include <optional>
#include <vector>

namespace ksos {

/// The pre-trained mean model m̂ that centres the bands.
///
/// KernelRidge is the posterior mean of a homoscedastic GP with a Matérn 5/2
/// kernel, m̂(x) = k(x)ᵀ (K + σ²I)⁻¹ y. Precomputed wraps an externally supplied
/// column of predictions, looked up by exact input coordinates.
class Predictor {
public:
    enum class Mode { KernelRidge, Precomputed };

    static Predictor kernel_ridge(Matrix x_train, Vector weights, KernelSpec spec, double noise);
    static Predictor precomputed(const Matrix& x, const Vector& predictions);

    Mode mode() const { return mode_; }
    const KernelSpec& spec() const { return spec_; }
    double noise() const { return noise_; }
    const Vector& weights() const { return weights_; }
    const Matrix& x_train() const { return x_train_; }
    /// Precomputed table as (inputs, predictions), in insertion order.
    std::pair<Matrix, Vector> table() const;

    Vector predict(const Matrix& x_new) const;
    double predict_point(const Eigen::Ref<const Vector>& x) const;

private:
    Mode mode_ = Mode::KernelRidge;
    KernelSpec spec_;
    double noise_ = 1.0;
    Matrix x_train_;
    Vector weights_;
    std::map<std::vector<double>, double> lookup_;
    std::vector<std::vector<double>> order_;
};

/// Noise grid used when σ² is not supplied.
inline const std::vector<double>& default_noise_grid() {
    static const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    return grid;
}

/// Fits kernel ridge. Without a lengthscale the median pairwise distance is
/// used; without a noise level one is picked from default_noise_grid() by
/// 5-fold cross-validated MSE (folds i mod 5).
Predictor fit_kernel_ridge(const Matrix& x, const Vector& y, std::optional<double> lengthscale = std::nullopt,
                           std::optional<double> noise = std::nullopt);

}  // namespace ksos
