// SPDX-License-Identifier: Apache-2.0
#include "ksos/datasets.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ksos {

namespace {

constexpr double kPi = std::numbers::pi;

double case1_mean(double x) {
    if (10.0 * x + 1.0 <= 9.6) {
        const double u = 2.0 * x + 0.2;
        return std::sin(kPi * u) + 0.2 * std::cos(4.0 * kPi * u);
    }
    return x - 0.9;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_number(const std::string& field, std::size_t line_no) {
    const std::string t = trim(field);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
        throw ParameterError("csv line " + std::to_string(line_no) + ": bad number '" + t + "'");
    return v;
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw ParameterError("normal_quantile: probability outside [0, 1]");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

void Dataset::validate() const {
    if (x.rows() != y.size()) throw ParameterError("dataset: inputs and targets differ in length");
    if (m_hat && m_hat->size() != y.size()) throw ParameterError("dataset: m_hat column has wrong length");
    if (!x.allFinite() || !y.allFinite() || (m_hat && !m_hat->allFinite()))
        throw ParameterError("dataset: non-finite entries");
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.provenance = provenance;
    out.x.resize(static_cast<Index>(rows.size()), x.cols());
    out.y.resize(static_cast<Index>(rows.size()));
    if (m_hat) out.m_hat = Vector(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Index i = rows[k];
        if (i < 0 || i >= size()) throw ParameterError("dataset subset: row index out of range");
        const auto r = static_cast<Index>(k);
        out.x.row(r) = x.row(i);
        out.y(r) = y(i);
        if (m_hat) (*out.m_hat)(r) = (*m_hat)(i);
    }
    return out;
}

SyntheticCase SyntheticCase::make(int id, int dim) {
    SyntheticCase c;
    c.id = id;
    c.dim = dim;
    if (id == 6 && dim >= 1) c.beta = Vector::Ones(dim);
    c.validate();
    return c;
}

void SyntheticCase::validate() const {
    if (id < 1 || id > 6) throw ParameterError("synthetic case id must be in 1..6");
    if (dim < 1) throw ParameterError("synthetic case dimension must be positive");
    if ((id == 1 || id == 3 || id == 4 || id == 5) && dim != 1)
        throw ParameterError("synthetic case " + std::to_string(id) + " is one-dimensional");
    if (id == 6 && beta.size() != dim) throw ParameterError("case 6 needs β with one entry per dimension");
}

double SyntheticCase::mean(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != dim) throw ParameterError("synthetic case: dimension mismatch");
    switch (id) {
        case 1: return case1_mean(x(0));
        case 2: return 0.5 * x.sum();
        case 3: return std::sin(5.0 * x(0));
        case 4: return std::sin(x(0));
        case 5: return std::sin(2.0 * x(0));
        case 6: {
            const double t = beta.dot(x);
            return 2.0 * std::sin(kPi * t) + kPi * t;
        }
        default: throw ParameterError("synthetic case id must be in 1..6");
    }
}

Vector SyntheticCase::sample_x(Rng& rng) const {
    Vector x(dim);
    for (Index j = 0; j < dim; ++j) {
        switch (id) {
            case 2: x(j) = rng.normal(); break;
            case 4: x(j) = rng.uniform(0.0, 4.0 * kPi); break;
            case 6: x(j) = rng.uniform(); break;
            default: x(j) = rng.uniform(-1.0, 1.0); break;
        }
    }
    return x;
}

double SyntheticCase::sample_y(const Eigen::Ref<const Vector>& x, Rng& rng) const {
    const double m = mean(x);
    switch (id) {
        case 1: return m + std::sqrt(0.1 + 2.0 * x(0) * x(0)) * rng.normal();
        case 2: return m + x.array().sin().abs().sum() * rng.normal();
        case 3: return m + x(0) * rng.lognormal(0.0, 1.0);
        case 4: {
            const double e = rng.normal();
            const double scale = e < 0.0 ? 0.2 : 0.4 * (std::sin(x(0)) + 1.0) + 0.1;
            return m + e * scale;
        }
        case 5: return m + (0.5 + 2.0 * x(0)) * rng.exponential();
        case 6: {
            const double t = beta.dot(x);
            return m + std::sqrt(1.0 + t * t) * rng.normal();
        }
        default: throw ParameterError("synthetic case id must be in 1..6");
    }
}

double SyntheticCase::conditional_quantile(const Eigen::Ref<const Vector>& x, double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("conditional_quantile: p must lie in (0, 1)");
    const double m = mean(x);
    // For Y = m + s·ε with s possibly negative, the p-quantile uses ε's (1−p)-quantile when s < 0.
    auto scaled = [m](double s, auto eps_quantile, double q) {
        if (s == 0.0) return m;
        return m + s * eps_quantile(s > 0.0 ? q : 1.0 - q);
    };
    switch (id) {
        case 1: return m + std::sqrt(0.1 + 2.0 * x(0) * x(0)) * normal_quantile(p);
        case 2: return m + x.array().sin().abs().sum() * normal_quantile(p);
        case 3: return scaled(x(0), [](double q) { return std::exp(normal_quantile(q)); }, p);
        case 4: {
            const double z = normal_quantile(p);
            return m + z * (z < 0.0 ? 0.2 : 0.4 * (std::sin(x(0)) + 1.0) + 0.1);
        }
        case 5: return scaled(0.5 + 2.0 * x(0), [](double q) { return -std::log1p(-q); }, p);
        case 6: {
            const double t = beta.dot(x);
            return m + std::sqrt(1.0 + t * t) * normal_quantile(p);
        }
        default: throw ParameterError("synthetic case id must be in 1..6");
    }
}

Dataset generate(const SyntheticCase& c, Index n, std::uint64_t seed) {
    c.validate();
    if (n < 1) throw ParameterError("generate: n must be positive");
    Dataset ds;
    ds.x.resize(n, c.dim);
    ds.y.resize(n);
    Rng rx(seed, "data.x");
    Rng ry(seed, "data.y");
    for (Index i = 0; i < n; ++i) {
        const Vector xi = c.sample_x(rx);
        ds.x.row(i) = xi.transpose();
        ds.y(i) = c.sample_y(xi, ry);
    }
    ds.provenance = "synthetic case " + std::to_string(c.id) + ", d=" + std::to_string(c.dim) +
                    ", seed=" + std::to_string(seed);
    return ds;
}

Vector conditional_sample(const SyntheticCase& c, const Eigen::Ref<const Vector>& x, Index n_y, std::uint64_t seed) {
    c.validate();
    if (n_y < 0) throw ParameterError("conditional_sample: negative sample size");
    Rng rng(seed, "conditional");
    Vector out(n_y);
    for (Index j = 0; j < n_y; ++j) out(j) = c.sample_y(x, rng);
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParameterError("'" + path + "' is empty");
    std::vector<std::string> header = split_fields(line);
    for (auto& h : header) h = trim(h);
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

    Index d = 0;
    while (d < static_cast<Index>(header.size()) && header[static_cast<std::size_t>(d)] == "x" + std::to_string(d)) ++d;
    const auto rest = header.size() - static_cast<std::size_t>(d);
    const bool has_mhat = rest == 2 && header.back() == "m_hat";
    if (d == 0 || !(rest == 1 || has_mhat) || header[static_cast<std::size_t>(d)] != "y")
        throw ParameterError("'" + path + "': header must be x0,...,x{d-1},y[,m_hat]");

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw ParameterError("csv line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_number(f, line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParameterError("'" + path + "' has no data rows");

    Dataset ds;
    const auto n = static_cast<Index>(rows.size());
    ds.x.resize(n, d);
    ds.y.resize(n);
    if (has_mhat) ds.m_hat = Vector(n);
    for (Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        for (Index j = 0; j < d; ++j) ds.x(i, j) = row[static_cast<std::size_t>(j)];
        ds.y(i) = row[static_cast<std::size_t>(d)];
        if (has_mhat) (*ds.m_hat)(i) = row[static_cast<std::size_t>(d) + 1];
    }
    ds.provenance = "csv:" + path;
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ParameterError("cannot write '" + path + "'");
    for (Index j = 0; j < ds.dim(); ++j) std::fprintf(f, "x%ld,", static_cast<long>(j));
    std::fprintf(f, ds.m_hat ? "y,m_hat\n" : "y\n");
    for (Index i = 0; i < ds.size(); ++i) {
        for (Index j = 0; j < ds.dim(); ++j) std::fprintf(f, "%.17g,", ds.x(i, j));
        std::fprintf(f, "%.17g", ds.y(i));
        if (ds.m_hat) std::fprintf(f, ",%.17g", (*ds.m_hat)(i));
        std::fprintf(f, "\n");
    }
    if (std::fclose(f) != 0) throw ParameterError("error while writing '" + path + "'");
}

Split split(const Dataset& ds, const SplitPlan& plan) {
    if (plan.n_pretrain < 1 || plan.n_cal < 0 || plan.n_test < 0)
        throw ParameterError("split: the pre-training block must be non-empty and the others nonnegative");
    if (plan.n_pretrain + plan.n_cal + plan.n_test > ds.size())
        throw ParameterError("split: requested sizes exceed the dataset");
    Rng rng(plan.seed, "split");
    const auto perm = rng.permutation(static_cast<std::size_t>(ds.size()));
    Split s;
    std::size_t pos = 0;
    auto take = [&](Index count, std::vector<Index>& out) {
        for (Index k = 0; k < count; ++k) out.push_back(static_cast<Index>(perm[pos++]));
    };
    take(plan.n_pretrain, s.idx_pretrain);
    take(plan.n_cal, s.idx_cal);
    take(plan.n_test, s.idx_test);
    s.pretrain = ds.subset(s.idx_pretrain);
    s.cal = ds.subset(s.idx_cal);
    s.test = ds.subset(s.idx_test);
    return s;
}

}  // namespace ksos
