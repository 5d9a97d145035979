// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include "ksos/conformal.hpp"
#include "ksos/verification.hpp"

#include <doctest.h>

#include <cmath>

using namespace ksos;
using namespace ksos::test;

TEST_CASE("rank examples") {
    CHECK(conformal_rank(9, 0.1) == 9);     // 0.9 · 10 lands exactly on 9
    CHECK(conformal_rank(19, 0.1) == 18);
    CHECK(conformal_rank(10, 0.1) == 10);   // ⌈9.9⌉
    CHECK(conformal_rank(1, 0.1) == 2);
    CHECK(conformal_rank(99, 0.05) == 95);
    CHECK(conformal_rank(2000, 0.1) == 1801);
    CHECK_THROWS_AS(conformal_rank(0, 0.1), ParameterError);
    CHECK_THROWS_AS(conformal_rank(5, 0.0), ParameterError);
    CHECK_THROWS_AS(conformal_rank(5, 1.0), ParameterError);
}

TEST_CASE("quantile examples") {
    Vector s(9);
    s << 9, 1, 8, 2, 7, 3, 6, 4, 5;
    const ConformalQuantile q = conformal_quantile(s, 0.1);
    CHECK(q.k == 9);
    CHECK(q.value == 9.0);
    CHECK_FALSE(q.infinite);
    CHECK(conformal_quantile(s, 0.5).value == 5.0);

    const ConformalQuantile one = conformal_quantile(Vector::Constant(1, 0.3), 0.1);
    CHECK(one.infinite);
    CHECK(std::isinf(one.value));

    Vector bad(2);
    bad << 1.0, std::nan("");
    CHECK_THROWS_AS(conformal_quantile(bad, 0.1), ParameterError);
    CHECK_THROWS_AS(conformal_quantile(Vector(), 0.1), ParameterError);
}

TEST_CASE("quantile agrees with a linear scan") {
    Rng rng(1, "q");
    for (Index m : {1, 2, 5, 19, 50, 333}) {
        const Vector s = random_vector(m, rng);
        for (double a : {0.01, 0.05, 0.1, 0.2, 0.5, 0.9}) {
            const double want = quantile_oracle(s, a);
            const double got = conformal_quantile(s, a).value;
            if (std::isinf(want))
                CHECK(std::isinf(got));
            else
                CHECK(got == want);
        }
    }
}

TEST_CASE("quantile is monotone in the scores and in alpha") {
    Rng rng(2, "mono");
    for (int t = 0; t < 50; ++t) {
        const Vector s = random_vector(30, rng);
        Vector bumped = s;
        bumped(static_cast<Index>(rng.uniform() * 30.0)) += rng.uniform(0.0, 1.0);
        CHECK(conformal_quantile(bumped, 0.1).value >= conformal_quantile(s, 0.1).value);
        CHECK(conformal_quantile(s, 0.05).value >= conformal_quantile(s, 0.2).value);
    }
}

TEST_CASE("interval arithmetic") {
    Vector m(2), fl(2), fu(2), y(2);
    m << 0.0, 1.0;
    fl << 1.0, 0.2;
    fu << 2.0, 0.3;
    y << 0.5, 1.0;
    CalibrationResult cal = calibrate_raw(m, fl, fu, y, 0.4);
    // scores −1.5 and −0.2, k = ⌈0.6·3⌉ = 2
    CHECK(cal.q.k == 2);
    CHECK(cal.q.value == doctest::Approx(-0.2));
    const auto iv = intervals_raw(m, fl, fu, cal);
    CHECK(iv[0].lo == doctest::Approx(-0.8));
    CHECK(iv[0].hi == doctest::Approx(1.8));
    CHECK(iv[1].lo == doctest::Approx(1.0));
    CHECK(iv[1].hi == doctest::Approx(1.1));
    CHECK(coverage(iv, y) == 1.0);

    cal.q.value = -5.0;
    const auto shrunk = intervals_raw(m, fl, fu, cal);
    CHECK(shrunk[0].empty);
    CHECK(shrunk[0].width() == 0.0);
    CHECK_FALSE(shrunk[0].contains(0.0));

    cal.q.value = std::numeric_limits<double>::infinity();
    const auto whole = intervals_raw(m, fl, fu, cal);
    CHECK(whole[0].infinite());
    CHECK(whole[0].contains(1e300));
}

TEST_CASE("coverage counts closed intervals") {
    const std::vector<Interval> iv{{0.0, 1.0, false}, {0.0, 1.0, false}, {2.0, 1.0, true}, {-1.0, 0.0, false}};
    Vector y(4);
    y << 1.0, 1.5, 1.5, -1.0;
    CHECK(coverage(iv, y) == doctest::Approx(0.5));
    CHECK_THROWS_AS(coverage(iv, Vector::Zero(3)), ParameterError);
}

TEST_CASE("marginal coverage under exchangeability") {
    Rng rng(3, "exch");
    const Index m = 19;
    const int trials = 4000;
    int hit = 0, hit_lo = 0, hit_hi = 0;
    for (int t = 0; t < trials; ++t) {
        Vector mh(m + 1), fl(m + 1), fu(m + 1), y(m + 1);
        for (Index i = 0; i <= m; ++i) {
            mh(i) = 0.1 * rng.normal();
            fl(i) = 0.5;
            fu(i) = 1.0;
            y(i) = rng.normal() + 0.3 * rng.exponential();
        }
        const CalibrationResult sym = calibrate_raw(mh.head(m), fl.head(m), fu.head(m), y.head(m), 0.1);
        hit += intervals_raw(mh.tail(1), fl.tail(1), fu.tail(1), sym)[0].contains(y(m)) ? 1 : 0;

        const CalibrationResult as = calibrate_raw(mh.head(m), fl.head(m), fu.head(m), y.head(m), 0.1,
                                                   CalibrationMode::Asymmetric);
        const Interval iv = intervals_raw(mh.tail(1), fl.tail(1), fu.tail(1), as)[0];
        hit_lo += y(m) >= iv.lo ? 1 : 0;
        hit_hi += y(m) <= iv.hi ? 1 : 0;
    }
    const double se = std::sqrt(0.1 * 0.9 / trials);
    CHECK(std::abs(hit / double(trials) - 18.0 / 20.0) <= 3.0 * se);
    // per side: k = ⌈0.95 · 20⌉ = 19
    const double se_side = std::sqrt(0.05 * 0.95 / trials);
    CHECK(std::abs(hit_lo / double(trials) - 0.95) <= 3.0 * se_side);
    CHECK(std::abs(hit_hi / double(trials) - 0.95) <= 3.0 * se_side);
}

TEST_CASE("asymmetric levels") {
    Rng rng(4, "asym");
    const Index m = 200;
    Vector mh = Vector::Zero(m), fl = Vector::Ones(m), fu = Vector::Ones(m), y = random_vector(m, rng);
    const CalibrationResult c = calibrate_raw(mh, fl, fu, y, 0.1, CalibrationMode::Asymmetric, 0.02);
    CHECK(c.alpha_low == doctest::Approx(0.02));
    CHECK(c.alpha_up == doctest::Approx(0.08));
    CHECK(c.q_low.value == conformal_quantile(Vector(mh - fl - y), 0.02).value);
    CHECK(c.q_up.value == conformal_quantile(Vector(y - mh - fu), 0.08).value);
    CHECK_THROWS_AS(calibrate_raw(mh, fl, fu, y, 0.1, CalibrationMode::Asymmetric, 0.2), ParameterError);
    CHECK(calibration_mode_from_string("asymmetric") == CalibrationMode::Asymmetric);
    CHECK_THROWS_AS(calibration_mode_from_string("both"), ParameterError);
}
