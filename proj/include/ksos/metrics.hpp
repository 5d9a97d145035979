// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ksos/common.hpp"
#include "ksos/conformal.hpp"
#include "ksos/datasets.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ksos {

/// Maps query inputs to prediction intervals; lets metrics run on any method.
using IntervalFn = std::function<std::vector<Interval>(const Matrix&)>;

struct WidthSummary {
    double mean_width = 0.0;
    Index finite = 0;
    Index infinite = 0;
};

/// Average of hi − lo over finite intervals; empty intervals count as width 0.
/// Throws when every interval is infinite.
WidthSummary mean_width(const std::vector<Interval>& iv);

struct AcgResult {
    double acg = 0.0;
    double acg_low = 0.0;
    double acg_up = 0.0;
};

/// Absolute coverage gaps from n_X inputs drawn from the case's input law and
/// n_Y conditional draws at each: central target 1−α, per-side target 1−α/2.
AcgResult acg(const IntervalFn& fn, const SyntheticCase& c, double alpha, Index n_x = 100, Index n_y = 1000,
              std::uint64_t seed = 0);

struct WscResult {
    double wsc = 1.0;
    double wsc_low = 1.0;
    double wsc_up = 1.0;
    Index regions = 0;
    Index region_size = 0;
};

/// Worst coverage over L regions, each made of the `region` nearest test
/// points (z-scored Euclidean distance, ties by index) around a random centre.
/// The whole test set is also a candidate region.
WscResult wsc(const std::vector<Interval>& iv, const Vector& y, const Matrix& x, Index L = 10, Index region = 100,
              std::uint64_t seed = 0);

struct MetricsReport {
    std::string method;
    std::uint64_t seed = 0;
    double coverage = 0.0;
    double coverage_low = 0.0;  ///< fraction of y ≥ lo
    double coverage_up = 0.0;   ///< fraction of y ≤ hi
    WidthSummary width;
    std::optional<AcgResult> acg;
    WscResult wsc;
};

/// Coverage, width and worst-set metrics on a test set; ACG when a synthetic case is given.
/// When no interval is finite the mean width is NaN (null in JSON).
MetricsReport evaluate_intervals(const IntervalFn& fn, const Matrix& x_test, const Vector& y_test, double alpha,
                                 const SyntheticCase* c, std::uint64_t seed, Index n_x = 100, Index n_y = 1000,
                                 Index wsc_regions = 10, Index wsc_size = 100);

nlohmann::json to_json(const MetricsReport& r);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace ksos
