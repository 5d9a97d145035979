// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include "ksos/spectral.hpp"
#include "ksos/verification.hpp"

#include <doctest.h>

#include <cmath>

using namespace ksos;
using namespace ksos::test;

TEST_CASE("matern52 closed form") {
    Vector x(2), y(2);
    x << 0.3, -0.2;
    CHECK(matern52(x, x, 0.7) == doctest::Approx(1.0).epsilon(1e-15));

    // θ = 1, r = 1 against long double arithmetic.
    const long double s5 = std::sqrt(5.0L);
    const long double want = (1.0L + s5 + 5.0L / 3.0L) * std::exp(-s5);
    y << 0.3 + 0.6, -0.2 + 0.8;  // distance 1
    CHECK(std::abs(matern52(x, y, 1.0) - static_cast<double>(want)) < 1e-15);

    double prev = 1.0;
    for (double r = 0.1; r < 20.0; r += 0.1) {
        const double v = matern52_radial(r, 0.5);
        CHECK(v < prev);
        CHECK(v > 0.0);
        prev = v;
    }
    CHECK(matern52_radial(200.0, 0.5) < 1e-100);
    CHECK_THROWS_AS(matern52(x, y, 0.0), ParameterError);
    CHECK_THROWS_AS(matern52(x, y, -1.0), ParameterError);
    CHECK(matern52(x, y, 0.4) == matern52(y, x, 0.4));
}

TEST_CASE("gram factor") {
    KernelSpec spec;
    SUBCASE("single point") {
        Matrix x(1, 1);
        x << 0.5;
        const GramFactor gf = gram(x, spec, 1e-3);
        CHECK(gf.K(0, 0) == doctest::Approx(1.0));
        CHECK(gf.V(0, 0) == doctest::Approx(std::sqrt(1.001)).epsilon(1e-14));
        CHECK(gf.jitter == 1e-3);
    }
    SUBCASE("random reproduces K") {
        Rng rng(5, "gram");
        const Matrix x = random_inputs(5, 2, rng);
        const GramFactor gf = gram(x, spec);
        CHECK((gf.V.transpose() * gf.V - gf.K).norm() <= 1e-10);
        CHECK(gf.V.isUpperTriangular());
        const Eigen::SelfAdjointEigenSolver<Matrix> es(gf.K);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
    SUBCASE("duplicate rows escalate jitter") {
        Matrix x(3, 1);
        x << 0.1, 0.1, 0.4;
        const GramFactor gf = gram(x, spec);
        CHECK(gf.jitter > 0.0);
        CHECK(gf.jitter <= 1e-6 * 1.0000001);
        const Matrix kj = gf.K + gf.jitter * Matrix::Identity(3, 3);
        CHECK((gf.V.transpose() * gf.V - kj).norm() <= 1e-8 * gf.K.norm());
    }
    SUBCASE("non-finite input") {
        Matrix x(2, 1);
        x << 0.0, std::nan("");
        CHECK_THROWS_AS(gram(x, spec), ParameterError);
    }
}

TEST_CASE("feature map") {
    Rng rng(9, "fm");
    KernelSpec spec;
    spec.lengthscale = 0.6;
    const Matrix x = random_inputs(6, 1, rng);
    const KernelModel km = KernelModel::build(x, spec);
    for (Index i = 0; i < x.rows(); ++i) {
        const Vector phi = feature_map(km, Vector(x.row(i).transpose()));
        CHECK((phi - km.factor.V.col(i)).norm() < 1e-10);
        CHECK(phi.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
    }
    Vector far(1);
    far << 50.0;
    CHECK(feature_map(km, far).norm() < 1e-20);

    const Matrix phis = feature_maps(km, x);
    CHECK((phis - km.factor.V).norm() < 1e-10);

    Matrix one(1, 1);
    one << 0.2;
    const KernelModel k1 = KernelModel::build(one, spec);
    CHECK(feature_map(k1, Vector(one.row(0).transpose()))(0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(feature_map(km, Vector::Zero(2)), ParameterError);
}

TEST_CASE("positive part") {
    Matrix a(2, 2);
    a << 2, 0, 0, -1;
    Matrix want(2, 2);
    want << 2, 0, 0, 0;
    CHECK((positive_part(a) - want).norm() < 1e-12);

    a << 0, 1, 1, 0;
    want << 0.5, 0.5, 0.5, 0.5;
    CHECK((positive_part(a) - want).norm() < 1e-12);

    Rng rng(1, "pp");
    for (int t = 0; t < 20; ++t) {
        const Matrix s = random_symmetric(5, rng);
        const Matrix p = positive_part(s);
        CHECK((positive_part(p) - p).norm() < 1e-10);
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff() >= -1e-12);
        const Matrix psd = random_psd(5, rng);
        CHECK((positive_part(psd) - psd).norm() < 1e-10 * std::max(1.0, psd.norm()));
    }
}

TEST_CASE("conjugate functionals: fixed values") {
    Matrix b(1, 1);
    b << 3.0;
    const ConjugateEval ce = omega_star_plus_eval(b, RegParams{1.0, 1.0});
    CHECK(ce.value == doctest::Approx(1.0));
    CHECK(ce.gradient(0, 0) == doctest::Approx(1.0));

    const Matrix i3 = 0.7 * Matrix::Identity(3, 3);
    CHECK(omega_star_plus(i3, RegParams{0.7, 2.0}) == 0.0);
    CHECK(grad_omega_star_plus(i3, RegParams{0.7, 2.0}).norm() == 0.0);

    Matrix below(2, 2);
    below << -1, 0.2, 0.2, 0.3;
    CHECK(omega_star_plus(below, RegParams{1.0, 1.0}) == 0.0);

    Matrix d(2, 2);
    d << -3, 0, 0, 2;
    CHECK(omega_star_pen(d, RegParams{1.0, 1.0}) == doctest::Approx(1.25));
    CHECK(omega_star_pen(Matrix::Zero(3, 3), RegParams{0.0, 1.0}) == 0.0);
    Matrix small(2, 2);
    small << 0.5, 0.1, 0.1, -0.4;
    CHECK(omega_star_pen(small, RegParams{1.0, 1.0}) == 0.0);
    CHECK(grad_omega_star_pen(small, RegParams{1.0, 1.0}).norm() == 0.0);
}

namespace {

bool away_from(const Matrix& b, double t, double margin) {
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(b).eigenvalues();
    for (Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i) - t) < margin || std::abs(ev(i) + t) < margin) return false;
    return true;
}

}  // namespace

TEST_CASE("conjugate gradients match finite differences") {
    Rng rng(3, "fd");
    const RegParams p{0.4, 0.8};
    int checked = 0;
    while (checked < 20) {
        const Matrix b = random_symmetric(4, rng, 1.5);
        if (!away_from(b, p.l1, 1e-3)) continue;
        ++checked;
        const Index n = b.rows();
        auto f_plus = [&](const Vector& v) { return omega_star_plus(from_upper(v, n), p); };
        auto f_pen = [&](const Vector& v) { return omega_star_pen(from_upper(v, n), p); };
        const Vector fd_plus = fd_gradient(f_plus, upper(b), 1e-6);
        const Vector fd_pen = fd_gradient(f_pen, upper(b), 1e-6);
        CHECK(rel_err(upper_directional(grad_omega_star_plus(b, p)), fd_plus) <= 1e-5);
        CHECK(rel_err(upper_directional(grad_omega_star_pen(b, p)), fd_pen) <= 1e-5);
    }
}

TEST_CASE("conjugates agree on PSD arguments") {
    Rng rng(4, "psd");
    for (int t = 0; t < 10; ++t) {
        const Matrix b = random_psd(4, rng);
        const RegParams p{0.3, 1.7};
        CHECK(omega_star_plus(b, p) == doctest::Approx(omega_star_pen(b, p)).epsilon(1e-12));
    }
}

TEST_CASE("distances") {
    Matrix x(3, 1);
    x << 0.0, 1.0, 3.0;
    CHECK(median_pairwise_distance(x) == doctest::Approx(2.0));
    CHECK(diameter(x) == doctest::Approx(3.0));
    Matrix a(2, 2);
    a << 3, 0, 0, -4;
    CHECK(nuclear_norm(a) == doctest::Approx(7.0));
}
