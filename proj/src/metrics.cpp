// SPDX-License-Identifier: Apache-2.0
#include "ksos/metrics.hpp"

#include "ksos/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace ksos {

namespace {

struct SideCounts {
    double central = 0.0, low = 0.0, up = 0.0;
};

SideCounts coverage_of(const std::vector<Interval>& iv, const Vector& y, const std::vector<Index>& rows) {
    SideCounts c;
    for (Index i : rows) {
        const Interval& v = iv[static_cast<std::size_t>(i)];
        c.central += v.contains(y(i)) ? 1.0 : 0.0;
        c.low += y(i) >= v.lo ? 1.0 : 0.0;
        c.up += y(i) <= v.hi ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(rows.size());
    c.central /= n;
    c.low /= n;
    c.up /= n;
    return c;
}

std::string fmt_opt(const std::optional<AcgResult>& a, double AcgResult::*field) {
    if (!a) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", (*a).*field);
    return buf;
}

}  // namespace

WidthSummary mean_width(const std::vector<Interval>& iv) {
    WidthSummary w;
    double total = 0.0;
    for (const auto& v : iv) {
        if (!v.empty && v.infinite()) {
            ++w.infinite;
            continue;
        }
        ++w.finite;
        total += v.width();
    }
    if (w.finite == 0) throw ParameterError("mean_width: no finite intervals");
    w.mean_width = total / static_cast<double>(w.finite);
    return w;
}

AcgResult acg(const IntervalFn& fn, const SyntheticCase& c, double alpha, Index n_x, Index n_y, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("acg: α must lie in (0, 1)");
    if (n_x < 1 || n_y < 1) throw ParameterError("acg: sample sizes must be positive");
    c.validate();
    Rng rx(seed, "acg.x");
    Matrix xs(n_x, c.dim);
    for (Index i = 0; i < n_x; ++i) xs.row(i) = c.sample_x(rx).transpose();
    const auto iv = fn(xs);
    if (static_cast<Index>(iv.size()) != n_x) throw ParameterError("acg: interval function returned wrong length");

    AcgResult out;
    for (Index i = 0; i < n_x; ++i) {
        const Vector draws = conditional_sample(c, xs.row(i).transpose(), n_y, seed * 1000003ULL + static_cast<std::uint64_t>(i));
        const Interval& v = iv[static_cast<std::size_t>(i)];
        double in = 0.0, above = 0.0, below = 0.0;
        for (Index j = 0; j < n_y; ++j) {
            in += v.contains(draws(j)) ? 1.0 : 0.0;
            above += draws(j) >= v.lo ? 1.0 : 0.0;
            below += draws(j) <= v.hi ? 1.0 : 0.0;
        }
        const auto ny = static_cast<double>(n_y);
        out.acg += std::abs(in / ny - (1.0 - alpha));
        out.acg_low += std::abs(above / ny - (1.0 - alpha / 2.0));
        out.acg_up += std::abs(below / ny - (1.0 - alpha / 2.0));
    }
    const auto nx = static_cast<double>(n_x);
    out.acg /= nx;
    out.acg_low /= nx;
    out.acg_up /= nx;
    return out;
}

WscResult wsc(const std::vector<Interval>& iv, const Vector& y, const Matrix& x, Index L, Index region,
              std::uint64_t seed) {
    const Index n = y.size();
    if (static_cast<Index>(iv.size()) != n || x.rows() != n) throw ParameterError("wsc: length mismatch");
    if (n < 1 || L < 1 || region < 1) throw ParameterError("wsc: empty test set or region");
    if (region > n) {
        spdlog::warn("wsc: region size {} exceeds test size {}; shrinking", region, n);
        region = n;
    }

    Matrix z = x;
    for (Index j = 0; j < z.cols(); ++j) {
        const double mu = z.col(j).mean();
        const double sd = std::sqrt((z.col(j).array() - mu).square().sum() / static_cast<double>(n));
        z.col(j).array() -= mu;
        if (sd > 0.0) z.col(j) /= sd;
    }

    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    const SideCounts whole = coverage_of(iv, y, all);
    WscResult out{whole.central, whole.low, whole.up, 0, region};

    Rng rng(seed, "wsc");
    auto perm = rng.permutation(static_cast<std::size_t>(n));
    const Index centres = std::min(L, n);
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index c = 0; c < centres; ++c) {
        const auto centre = static_cast<Index>(perm[static_cast<std::size_t>(c)]);
        for (Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = (z.row(i) - z.row(centre)).squaredNorm();
        std::iota(order.begin(), order.end(), Index{0});
        std::partial_sort(order.begin(), order.begin() + region, order.end(), [&dist](Index a, Index b) {
            const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
            return da < db || (da == db && a < b);
        });
        const std::vector<Index> rows(order.begin(), order.begin() + region);
        const SideCounts cov = coverage_of(iv, y, rows);
        out.wsc = std::min(out.wsc, cov.central);
        out.wsc_low = std::min(out.wsc_low, cov.low);
        out.wsc_up = std::min(out.wsc_up, cov.up);
        ++out.regions;
    }
    return out;
}

MetricsReport evaluate_intervals(const IntervalFn& fn, const Matrix& x_test, const Vector& y_test, double alpha,
                                 const SyntheticCase* c, std::uint64_t seed, Index n_x, Index n_y, Index wsc_regions,
                                 Index wsc_size) {
    MetricsReport r;
    r.seed = seed;
    const auto iv = fn(x_test);
    if (static_cast<Index>(iv.size()) != y_test.size()) throw ParameterError("evaluate: interval count mismatch");
    std::vector<Index> all(iv.size());
    std::iota(all.begin(), all.end(), Index{0});
    const SideCounts cov = coverage_of(iv, y_test, all);
    r.coverage = cov.central;
    r.coverage_low = cov.low;
    r.coverage_up = cov.up;
    try {
        r.width = mean_width(iv);
    } catch (const ParameterError&) {
        // Every interval is the whole line.
        r.width = {std::numeric_limits<double>::quiet_NaN(), 0, static_cast<Index>(iv.size())};
    }
    if (c) r.acg = acg(fn, *c, alpha, n_x, n_y, seed);
    r.wsc = wsc(iv, y_test, x_test, wsc_regions, wsc_size, seed);
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["coverage"] = r.coverage;
    j["coverage_low"] = r.coverage_low;
    j["coverage_up"] = r.coverage_up;
    j["mean_width"] = r.width.mean_width;
    j["finite_intervals"] = r.width.finite;
    j["infinite_intervals"] = r.width.infinite;
    if (r.acg) {
        j["acg"] = r.acg->acg;
        j["acg_low"] = r.acg->acg_low;
        j["acg_up"] = r.acg->acg_up;
    } else {
        j["acg"] = nullptr;
        j["acg_low"] = nullptr;
        j["acg_up"] = nullptr;
    }
    j["wsc"] = r.wsc.wsc;
    j["wsc_low"] = r.wsc.wsc_low;
    j["wsc_up"] = r.wsc.wsc_up;
    j["wsc_regions"] = r.wsc.regions;
    j["wsc_region_size"] = r.wsc.region_size;
    return j;
}

std::string metrics_csv_header() {
    return "method,seed,coverage,coverage_low,coverage_up,mean_width,infinite_intervals,acg,acg_low,acg_up,wsc,wsc_low,"
           "wsc_up";
}

std::string metrics_csv_row(const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%llu,%.10g,%.10g,%.10g,%.10g,%ld,%s,%s,%s,%.10g,%.10g,%.10g", r.method.c_str(),
                  static_cast<unsigned long long>(r.seed), r.coverage, r.coverage_low, r.coverage_up,
                  r.width.mean_width, static_cast<long>(r.width.infinite), fmt_opt(r.acg, &AcgResult::acg).c_str(),
                  fmt_opt(r.acg, &AcgResult::acg_low).c_str(), fmt_opt(r.acg, &AcgResult::acg_up).c_str(), r.wsc.wsc,
                  r.wsc.wsc_low, r.wsc.wsc_up);
    return buf;
}

}  // namespace ksos
