// SPDX-License-Identifier: Apache-2.0
#include "ksos/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ksos {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;

// Relative pivot floor below which a Cholesky factor is treated as failed.
constexpr double kPivotFloor = 1e-14;

double mean_diagonal(const Matrix& k) { return k.diagonal().mean(); }

bool try_cholesky(const Matrix& k, double jitter, Matrix& v) {
    Matrix shifted = k;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) return false;
    v = llt.matrixU();
    const double floor = kPivotFloor * std::max(mean_diagonal(k), 1e-300);
    for (Index i = 0; i < v.rows(); ++i) {
        if (!(v(i, i) * v(i, i) > floor)) return false;
    }
    return true;
}

}  // namespace

const char* version() { return KSOS_VERSION_STRING; }

void KernelSpec::validate() const {
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
        throw ParameterError("kernel lengthscale must be positive and finite");
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw ParameterError("kernel variance must be positive and finite");
}

double KernelSpec::operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) const {
    return variance * matern52(x, y, lengthscale);
}

double matern52_radial(double r, double lengthscale) {
    if (!(lengthscale > 0.0)) throw ParameterError("matern52: lengthscale must be positive");
    const double s = kSqrt5 * r / lengthscale;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double matern52(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double lengthscale) {
    if (x.size() != y.size()) throw ParameterError("matern52: dimension mismatch");
    return matern52_radial((x - y).norm(), lengthscale);
}

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    spec.validate();
    if (a.cols() != b.cols()) throw ParameterError("kernel_matrix: dimension mismatch");
    Matrix k(a.rows(), b.rows());
    for (Index j = 0; j < b.rows(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            const double r = (a.row(i) - b.row(j)).norm();
            k(i, j) = spec.variance * matern52_radial(r, spec.lengthscale);
        }
    }
    return k;
}

GramFactor gram(const Matrix& x, const KernelSpec& spec, double jitter) {
    if (x.rows() < 1) throw ParameterError("gram: need at least one input");
    if (!x.allFinite()) throw ParameterError("gram: non-finite input");
    if (jitter < 0.0) throw ParameterError("gram: jitter must be nonnegative");

    GramFactor gf;
    gf.K = kernel_matrix(x, x, spec);
    gf.K = 0.5 * (gf.K + gf.K.transpose());
    if (try_cholesky(gf.K, jitter, gf.V)) {
        gf.jitter = jitter;
        return gf;
    }
    const double scale = mean_diagonal(gf.K);
    const double cap = 1e-6 * scale;
    for (double j = std::max(1e-10 * scale, jitter * 10.0); j <= cap * (1.0 + 1e-12); j *= 10.0) {
        if (try_cholesky(gf.K, j, gf.V)) {
            gf.jitter = j;
            return gf;
        }
    }
    throw NumericalError("gram: Cholesky failed even with jitter 1e-6 * mean diagonal");
}

KernelModel KernelModel::build(const Matrix& x_train, const KernelSpec& spec, double jitter) {
    spec.validate();
    return KernelModel{spec, x_train, gram(x_train, spec, jitter)};
}

Vector feature_map(const KernelModel& km, const Eigen::Ref<const Vector>& x) {
    if (x.size() != km.dim()) throw ParameterError("feature_map: dimension mismatch");
    Vector k(km.size());
    for (Index i = 0; i < km.size(); ++i) k(i) = km.spec(km.x_train.row(i).transpose(), x);
    // V upper triangular, so Vᵀ is lower: forward substitution.
    km.factor.V.transpose().triangularView<Eigen::Lower>().solveInPlace(k);
    return k;
}

Matrix feature_maps(const KernelModel& km, const Matrix& x) {
    if (x.cols() != km.dim()) throw ParameterError("feature_map: dimension mismatch");
    Matrix k = kernel_matrix(km.x_train, x, km.spec);
    km.factor.V.transpose().triangularView<Eigen::Lower>().solveInPlace(k);
    return k;
}

SymmetricEigen symmetric_eigen(const Matrix& a) {
    if (a.rows() != a.cols()) throw ParameterError("symmetric_eigen: matrix must be square");
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric_eigen: eigendecomposition failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

namespace {

// U Diag(w) Uᵀ restricted to the columns where w is nonzero.
Matrix spectral_synthesis(const SymmetricEigen& eig, const Vector& w) {
    const Index n = w.size();
    std::vector<Index> keep;
    keep.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        if (w(i) != 0.0) keep.push_back(i);
    if (keep.empty()) return Matrix::Zero(n, n);
    Matrix u(n, static_cast<Index>(keep.size()));
    Vector d(static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        u.col(static_cast<Index>(c)) = eig.vectors.col(keep[c]);
        d(static_cast<Index>(c)) = w(keep[c]);
    }
    Matrix out = u * d.asDiagonal() * u.transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace

Matrix positive_part(const Matrix& a) {
    const auto eig = symmetric_eigen(a);
    return spectral_synthesis(eig, eig.values.cwiseMax(0.0));
}

void RegParams::validate() const {
    if (!(l1 >= 0.0) || !std::isfinite(l1)) throw ParameterError("nuclear weight must be nonnegative");
    if (!(l2 > 0.0) || !std::isfinite(l2)) throw ParameterError("Frobenius weight must be positive");
}

ConjugateEval omega_star_plus_eval(const Matrix& b, const RegParams& p) {
    p.validate();
    const auto eig = symmetric_eigen(b);
    const Vector shifted = (eig.values.array() - p.l1).cwiseMax(0.0).matrix();
    return {shifted.squaredNorm() / (4.0 * p.l2), spectral_synthesis(eig, shifted / (2.0 * p.l2))};
}

double omega_star_plus(const Matrix& b, const RegParams& p) {
    p.validate();
    const auto eig = symmetric_eigen(b);
    return (eig.values.array() - p.l1).cwiseMax(0.0).square().sum() / (4.0 * p.l2);
}

Matrix grad_omega_star_plus(const Matrix& b, const RegParams& p) { return omega_star_plus_eval(b, p).gradient; }

ConjugateEval omega_star_pen_eval(const Matrix& b, const RegParams& p) {
    p.validate();
    const auto eig = symmetric_eigen(b);
    Vector soft(eig.values.size());
    for (Index i = 0; i < soft.size(); ++i) {
        const double lam = eig.values(i);
        const double mag = std::max(0.0, std::abs(lam) - p.l1);
        soft(i) = lam < 0.0 ? -mag : mag;
    }
    return {soft.squaredNorm() / (4.0 * p.l2), spectral_synthesis(eig, soft / (2.0 * p.l2))};
}

double omega_star_pen(const Matrix& b, const RegParams& p) { return omega_star_pen_eval(b, p).value; }

Matrix grad_omega_star_pen(const Matrix& b, const RegParams& p) { return omega_star_pen_eval(b, p).gradient; }

double nuclear_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() == a.cols() && (a - a.transpose()).norm() <= 1e-12 * (1.0 + a.norm()))
        return symmetric_eigen(a).values.cwiseAbs().sum();
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues().sum();
}

double median_pairwise_distance(const Matrix& x) {
    const Index n = x.rows();
    if (n < 2) throw ParameterError("median_pairwise_distance: need at least two points");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
    return med;
}

double diameter(const Matrix& x) {
    double best = 0.0;
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = i + 1; j < x.rows(); ++j) best = std::max(best, (x.row(i) - x.row(j)).norm());
    return best;
}

}  // namespace ksos
