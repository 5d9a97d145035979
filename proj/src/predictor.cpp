// SPDX-License-Identifier: Apache-2.0
#include "ksos/predictor.hpp"

#include <cmath>
#include <limits>

namespace ksos {

namespace {

std::vector<double> row_key(const Eigen::Ref<const Vector>& x) { return {x.data(), x.data() + x.size()}; }

// Solves (K + noise I) w = y by Cholesky, escalating jitter like gram().
Vector ridge_weights(const Matrix& k, const Vector& y, double noise) {
    Matrix a = k;
    a.diagonal().array() += noise;
    Eigen::LLT<Matrix> llt(a);
    double extra = 1e-10 * k.diagonal().mean();
    while (llt.info() != Eigen::Success) {
        if (extra > 1e-6 * k.diagonal().mean()) throw NumericalError("kernel ridge: singular system");
        a.diagonal().array() += extra;
        llt.compute(a);
        extra *= 10.0;
    }
    Vector w = llt.solve(y);
    if (!w.allFinite()) throw NumericalError("kernel ridge: non-finite weights");
    return w;
}

double cv_mse(const Matrix& k, const Vector& y, double noise, int folds) {
    const Index n = y.size();
    double sse = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
        if (test.empty() || train.empty()) continue;
        const Index nt = static_cast<Index>(train.size());
        Matrix ktt(nt, nt);
        Vector yt(nt);
        for (Index a = 0; a < nt; ++a) {
            yt(a) = y(train[a]);
            for (Index b = 0; b < nt; ++b) ktt(a, b) = k(train[a], train[b]);
        }
        const Vector w = ridge_weights(ktt, yt, noise);
        for (Index t : test) {
            double pred = 0.0;
            for (Index a = 0; a < nt; ++a) pred += k(t, train[a]) * w(a);
            sse += (y(t) - pred) * (y(t) - pred);
        }
    }
    return sse / static_cast<double>(n);
}

}  // namespace

Predictor Predictor::kernel_ridge(Matrix x_train, Vector weights, KernelSpec spec, double noise) {
    spec.validate();
    if (!(noise > 0.0)) throw ParameterError("kernel ridge noise must be positive");
    if (x_train.rows() != weights.size()) throw ParameterError("kernel ridge: weights/input size mismatch");
    if (!weights.allFinite()) throw ParameterError("kernel ridge: non-finite weights");
    Predictor p;
    p.mode_ = Mode::KernelRidge;
    p.spec_ = spec;
    p.noise_ = noise;
    p.x_train_ = std::move(x_train);
    p.weights_ = std::move(weights);
    return p;
}

Predictor Predictor::precomputed(const Matrix& x, const Vector& predictions) {
    if (x.rows() != predictions.size()) throw ParameterError("precomputed predictor: size mismatch");
    if (!predictions.allFinite()) throw ParameterError("precomputed predictor: non-finite predictions");
    Predictor p;
    p.mode_ = Mode::Precomputed;
    for (Index i = 0; i < x.rows(); ++i) {
        auto key = row_key(x.row(i).transpose());
        if (p.lookup_.emplace(key, predictions(i)).second) p.order_.push_back(std::move(key));
    }
    return p;
}

std::pair<Matrix, Vector> Predictor::table() const {
    if (order_.empty()) return {};
    Matrix x(static_cast<Index>(order_.size()), static_cast<Index>(order_.front().size()));
    Vector v(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const auto& key = order_[static_cast<std::size_t>(i)];
        for (Index j = 0; j < x.cols(); ++j) x(i, j) = key[static_cast<std::size_t>(j)];
        v(i) = lookup_.at(key);
    }
    return {x, v};
}

double Predictor::predict_point(const Eigen::Ref<const Vector>& x) const {
    if (mode_ == Mode::Precomputed) {
        const auto it = lookup_.find(row_key(x));
        if (it == lookup_.end()) throw ParameterError("precomputed predictor queried at an unseen input");
        return it->second;
    }
    if (x.size() != x_train_.cols()) throw ParameterError("predict: dimension mismatch");
    double out = 0.0;
    for (Index i = 0; i < x_train_.rows(); ++i) out += spec_(x_train_.row(i).transpose(), x) * weights_(i);
    return out;
}

Vector Predictor::predict(const Matrix& x_new) const {
    if (mode_ == Mode::Precomputed) {
        Vector out(x_new.rows());
        for (Index i = 0; i < x_new.rows(); ++i) out(i) = predict_point(x_new.row(i).transpose());
        return out;
    }
    if (x_new.cols() != x_train_.cols()) throw ParameterError("predict: dimension mismatch");
    return kernel_matrix(x_new, x_train_, spec_) * weights_;
}

Predictor fit_kernel_ridge(const Matrix& x, const Vector& y, std::optional<double> lengthscale,
                           std::optional<double> noise) {
    if (x.rows() < 2) throw ParameterError("fit_kernel_ridge: need at least two points");
    if (x.rows() != y.size()) throw ParameterError("fit_kernel_ridge: size mismatch");
    if (!x.allFinite() || !y.allFinite()) throw ParameterError("fit_kernel_ridge: non-finite data");

    KernelSpec spec;
    spec.lengthscale = lengthscale ? *lengthscale : median_pairwise_distance(x);
    if (!(spec.lengthscale > 0.0)) spec.lengthscale = 1.0;  // all inputs identical
    spec.validate();
    const Matrix k = kernel_matrix(x, x, spec);

    double chosen = 0.0;
    if (noise) {
        chosen = *noise;
    } else {
        const int folds = static_cast<int>(std::min<Index>(5, x.rows()));
        double best = std::numeric_limits<double>::infinity();
        for (double candidate : default_noise_grid()) {
            const double mse = cv_mse(k, y, candidate, folds);
            if (mse < best) {
                best = mse;
                chosen = candidate;
            }
        }
    }
    return Predictor::kernel_ridge(x, ridge_weights(k, y, chosen), spec, chosen);
}

}  // namespace ksos
