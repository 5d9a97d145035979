// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ksos::test {

inline Matrix random_symmetric(Index n, Rng& rng, double scale = 1.0) {
    Matrix a(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) a(i, j) = scale * rng.normal();
    return 0.5 * (a + a.transpose());
}

inline Matrix random_psd(Index n, Rng& rng) {
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) g(i, j) = rng.normal();
    return g * g.transpose();
}

inline Matrix random_inputs(Index n, Index d, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix x(n, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < n; ++i) x(i, j) = rng.uniform(lo, hi);
    return x;
}

inline Vector random_vector(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

// Upper triangle (diagonal first per column) <-> symmetric matrix.
inline Vector upper(const Matrix& a) {
    const Index n = a.rows();
    Vector v(n * (n + 1) / 2);
    Index k = 0;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i <= j; ++i) v(k++) = a(i, j);
    return v;
}

inline Matrix from_upper(const Vector& v, Index n) {
    Matrix a(n, n);
    Index k = 0;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i <= j; ++i) {
            a(i, j) = v(k);
            a(j, i) = v(k);
            ++k;
        }
    return a;
}

// d/d(upper entries) of a function of a symmetric matrix with gradient g:
// off-diagonal entries move two matrix entries at once.
inline Vector upper_directional(const Matrix& g) {
    const Index n = g.rows();
    Vector v(n * (n + 1) / 2);
    Index k = 0;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i <= j; ++i) v(k++) = i == j ? g(i, i) : g(i, j) + g(j, i);
    return v;
}

inline double rel_err(const Vector& a, const Vector& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace ksos::test
