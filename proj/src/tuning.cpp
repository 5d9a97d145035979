// SPDX-License-Identifier: Apache-2.0
#include "ksos/tuning.hpp"

#include "ksos/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace ksos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> logspace(double lo, double hi, int points) {
    std::vector<double> out;
    if (points == 1) return {std::sqrt(lo * hi)};
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < points; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (points - 1)));
    return out;
}

double hsic_centered(const Matrix& cu, const Matrix& cv) {
    const auto n = static_cast<double>(cu.rows());
    return std::max(0.0, (cu.array() * cv.array()).sum() / (n * n));
}

Vector gather(const Vector& v, const std::vector<Index>& rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
    return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
    return out;
}

std::vector<double> mid_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return ranks;
}

double h_from_ranks(const std::vector<double>& ranks, const std::vector<std::size_t>& sizes) {
    const auto n = static_cast<double>(ranks.size());
    const double centre = 0.5 * (n + 1.0);
    double acc = 0.0;
    std::size_t pos = 0;
    for (std::size_t g : sizes) {
        double sum = 0.0;
        for (std::size_t k = 0; k < g; ++k) sum += ranks[pos + k];
        pos += g;
        const double mean = sum / static_cast<double>(g);
        acc += static_cast<double>(g) * (mean - centre) * (mean - centre);
    }
    return 12.0 / (n * (n + 1.0)) * acc;
}

void flatten(const std::vector<Vector>& groups, std::vector<double>& values, std::vector<std::size_t>& sizes) {
    if (groups.size() < 2) throw ParameterError("kruskal_wallis: need at least two groups");
    for (const auto& g : groups) {
        if (g.size() < 2) throw ParameterError("kruskal_wallis: each group needs at least two values");
        if (!g.allFinite()) throw ParameterError("kruskal_wallis: non-finite values");
        sizes.push_back(static_cast<std::size_t>(g.size()));
        values.insert(values.end(), g.data(), g.data() + g.size());
    }
}

BandHyper hyper_for(const TuneConfig& cfg, double theta_low, double theta_up, double lambda) {
    BandHyper h;
    h.theta_low = theta_low;
    h.theta_up = theta_up;
    h.b = cfg.b;
    h.reg_low = cfg.reg_low;
    h.reg_up = cfg.reg_up;
    switch (cfg.penalty) {
        case PenaltyKind::None: h.penalty = Penalty::none(); break;
        case PenaltyKind::TrainSet: h.penalty = Penalty::trainset(lambda); break;
        case PenaltyKind::Operator: h.penalty = Penalty::op(lambda, lambda); break;
    }
    h.jitter = cfg.jitter;
    return h;
}

double pooled_hsic(const OutOfFold& o) { return o.usable ? hsic(o.width, o.residual) : kNaN; }

}  // namespace

Matrix centered_energy_gram(const Vector& u) {
    const Index n = u.size();
    Matrix c(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) c(i, j) = -std::abs(u(i) - u(j));
    const Vector row_mean = c.rowwise().mean();
    const double grand = row_mean.mean();
    // c is symmetric, so row and column means coincide.
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) c(i, j) += grand - row_mean(i) - row_mean(j);
    return c;
}

double hsic(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw ParameterError("hsic: samples differ in length");
    if (u.size() < 4) throw ParameterError("hsic: need at least four pairs");
    if (!u.allFinite() || !v.allFinite()) throw ParameterError("hsic: non-finite samples");
    return hsic_centered(centered_energy_gram(u), centered_energy_gram(v));
}

double kruskal_wallis_h(const std::vector<Vector>& groups) {
    std::vector<double> values;
    std::vector<std::size_t> sizes;
    flatten(groups, values, sizes);
    return h_from_ranks(mid_ranks(values), sizes);
}

KruskalWallis kruskal_wallis_perm(const std::vector<Vector>& groups, int permutations, std::uint64_t seed) {
    if (permutations < 1) throw ParameterError("kruskal_wallis_perm: need at least one permutation");
    std::vector<double> values;
    std::vector<std::size_t> sizes;
    flatten(groups, values, sizes);
    std::vector<double> ranks = mid_ranks(values);
    KruskalWallis out;
    out.h = h_from_ranks(ranks, sizes);
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
        out.h = 0.0;
        out.p = 1.0;
        return out;
    }
    const double threshold = out.h - 1e-12 * std::max(1.0, out.h);
    Rng rng(seed, "kruskal_wallis");
    long exceed = 0;
    for (int b = 0; b < permutations; ++b) {
        rng.shuffle(ranks);
        if (h_from_ranks(ranks, sizes) >= threshold) ++exceed;
    }
    out.p = static_cast<double>(1 + exceed) / static_cast<double>(permutations + 1);
    return out;
}

IndependenceTest independence_fallback(const Vector& u, const Vector& v, int permutations, double level,
                                       std::uint64_t seed) {
    if (permutations < 1) throw ParameterError("independence test: need at least one permutation");
    if (u.size() != v.size() || u.size() < 4) throw ParameterError("independence test: need ≥ 4 paired samples");
    const Matrix cu = centered_energy_gram(u);
    const Matrix cv = centered_energy_gram(v);
    IndependenceTest out;
    out.hsic = hsic_centered(cu, cv);
    const Index n = u.size();
    const double threshold = out.hsic - 1e-12 * std::max(1.0, out.hsic);
    Rng rng(seed, "independence");
    long exceed = 0;
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (int b = 0; b < permutations; ++b) {
        std::iota(perm.begin(), perm.end(), Index{0});
        rng.shuffle(perm);
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) {
            const Index pj = perm[static_cast<std::size_t>(j)];
            for (Index i = 0; i < n; ++i) acc += cu(i, j) * cv(perm[static_cast<std::size_t>(i)], pj);
        }
        const double h = std::max(0.0, acc / static_cast<double>(n * n));
        if (h >= threshold) ++exceed;
    }
    out.p = static_cast<double>(1 + exceed) / static_cast<double>(permutations + 1);
    out.fallback = out.p >= level;
    return out;
}

NormalizationRecord normalize_hyperparameters(const Matrix& x, const Vector& y, const Predictor& predictor,
                                              double b_user, const SolverOptions& opt, double jitter,
                                              const NormalizationRecord* reference) {
    NormalizationRecord rec;
    try {
        double theta = x.rows() >= 2 ? median_pairwise_distance(x) : 1.0;
        if (!(theta > 0.0)) theta = 1.0;
        BandHyper h;
        h.theta_low = h.theta_up = theta;
        const NormalizationRecord base = reference ? *reference : NormalizationRecord{};
        h.b = base.scale_b(b_user);
        h.reg_low = base.scale_reg(Side::Low, RegParams{1.0, 1.0});
        h.reg_up = base.scale_reg(Side::Up, RegParams{1.0, 1.0});
        h.penalty = Penalty::none();
        h.jitter = jitter;
        const BandModel bm = fit_band_model(x, y, predictor, h, NormalizationRecord{}, opt);
        const Vector f_low = train_values(bm.bands.a_low, bm.kernel_low.factor.V);
        const Vector f_up = train_values(bm.bands.a_up, bm.kernel_up.factor.V);
        rec.mean_width = (f_low + f_up).mean();
        rec.nuclear_low = nuclear_norm(bm.bands.a_low);
        rec.nuclear_up = nuclear_norm(bm.bands.a_up);
        rec.frob2_low = bm.bands.a_low.squaredNorm();
        rec.frob2_up = bm.bands.a_up.squaredNorm();
        rec.applied = true;
        if (!bm.report.converged) rec.note = "reference fit stopped early: " + bm.report.message;
    } catch (const std::exception& e) {
        spdlog::warn("normalization reference fit failed ({}); using unnormalized weights", e.what());
        rec = NormalizationRecord{};
        rec.note = std::string("reference fit failed: ") + e.what();
    }
    return rec;
}

const char* to_string(ReplicateMode mode) { return mode == ReplicateMode::Bootstrap ? "bootstrap" : "refold"; }

ReplicateMode replicate_mode_from_string(const std::string& name) {
    if (name == "bootstrap") return ReplicateMode::Bootstrap;
    if (name == "refold") return ReplicateMode::Refold;
    throw ParameterError("unknown replicate mode '" + name + "'");
}

const char* to_string(TuneDecision d) {
    switch (d) {
        case TuneDecision::Selected: return "selected";
        case TuneDecision::SymmetricFallback: return "symmetric_fallback";
        case TuneDecision::Passthrough: return "passthrough";
    }
    return "selected";
}

void TuneConfig::validate() const {
    for (double t : theta_grid)
        if (!(t > 0.0) || !std::isfinite(t)) throw ParameterError("tune: θ grid entries must be positive");
    for (double l : lambda_grid)
        if (!(l > 0.0) || !std::isfinite(l)) throw ParameterError("tune: λ grid entries must be positive");
    if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end()))
        throw ParameterError("tune: λ grid must be ascending");
    if (theta_grid.empty() && theta_points < 1) throw ParameterError("tune: θ grid is empty");
    if (lambda_grid.empty() && lambda_points < 1) throw ParameterError("tune: λ grid is empty");
    if (folds < 2) throw ParameterError("tune: need at least two folds");
    if (replicates < 2) throw ParameterError("tune: need at least two HSIC replicates");
    if (permutations < 100) throw ParameterError("tune: need at least 100 permutations");
    if (!(level > 0.0 && level < 1.0)) throw ParameterError("tune: significance level must lie in (0, 1)");
    if (!(b >= 0.0)) throw ParameterError("tune: b must be nonnegative");
    if (!(homoscedastic_factor > 0.0)) throw ParameterError("tune: homoscedastic factor must be positive");
    if (full_2d && penalty == PenaltyKind::Operator)
        throw ParameterError("tune: the 2-D lengthscale search needs distinct kernels (not the operator penalty)");
    reg_low.validate();
    reg_up.validate();
}

std::vector<double> resolve_theta_grid(const TuneConfig& cfg, const Matrix& x) {
    if (!cfg.theta_grid.empty()) return cfg.theta_grid;
    double med = median_pairwise_distance(x);
    if (!(med > 0.0)) med = 1.0;
    auto grid = logspace(0.1, 10.0, cfg.theta_points);
    for (double& t : grid) t *= med;
    return grid;
}

std::vector<double> resolve_lambda_grid(const TuneConfig& cfg) {
    if (cfg.penalty == PenaltyKind::None) return {1.0};
    if (!cfg.lambda_grid.empty()) return cfg.lambda_grid;
    return logspace(1e-4, 1e4, cfg.lambda_points);
}

FoldPlan make_folds(Index n, int folds, std::uint64_t seed, std::uint64_t replicate) {
    if (folds < 2 || n < 2 * folds) throw ParameterError("make_folds: need n ≥ 2K");
    Rng rng(seed, "folds", replicate);
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    FoldPlan plan;
    plan.train.resize(static_cast<std::size_t>(folds));
    plan.test.resize(static_cast<std::size_t>(folds));
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
        const auto fold = pos % static_cast<std::size_t>(folds);
        for (std::size_t f = 0; f < static_cast<std::size_t>(folds); ++f)
            (f == fold ? plan.test[f] : plan.train[f]).push_back(static_cast<Index>(perm[pos]));
    }
    for (auto& v : plan.train) std::sort(v.begin(), v.end());
    for (auto& v : plan.test) std::sort(v.begin(), v.end());
    return plan;
}

std::vector<OutOfFold> cv_sweep(const Matrix& x, const Vector& y, const Predictor& predictor, double theta_low,
                                double theta_up, const std::vector<double>& lambdas, const FoldPlan& plan,
                                const TuneConfig& cfg, const NormalizationRecord& norm) {
    if (lambdas.empty()) throw ParameterError("cv_sweep: empty λ list");
    const Vector r_all = y - predictor.predict(x);
    const std::size_t nl = lambdas.size();
    std::vector<std::vector<double>> w(nl), res(nl);
    std::vector<OutOfFold> out(nl);

    for (std::size_t f = 0; f < plan.train.size(); ++f) {
        const auto& tr = plan.train[f];
        const auto& te = plan.test[f];
        const Matrix x_tr = gather_rows(x, tr);
        const Matrix x_te = gather_rows(x, te);
        const Vector r_tr = gather(r_all, tr);
        const Vector r_te = gather(r_all, te);

        std::optional<KernelModel> low, up;
        try {
            KernelSpec ks;
            ks.lengthscale = theta_low;
            low = KernelModel::build(x_tr, ks, cfg.jitter);
            ks.lengthscale = theta_up;
            up = theta_up == theta_low ? *low : KernelModel::build(x_tr, ks, cfg.jitter);
        } catch (const std::exception& e) {
            spdlog::debug("cv fold {} kernel failure: {}", f, e.what());
            for (auto& o : out) ++o.failed_folds;
            continue;
        }

        std::optional<DualState> init;
        for (std::size_t l = 0; l < nl; ++l) {
            const BandHyper h = hyper_for(cfg, theta_low, theta_up, lambdas[l]);
            try {
                const ProblemSpec spec = make_problem(*low, *up, r_tr, h, norm);
                SolveResult sr = solve(spec, init, cfg.solver);
                out[l].iterations += sr.report.iterations;
                if (!sr.report.converged) throw NumericalError("solver stopped: " + sr.report.message);
                const Vector f_low = eval_quadratic(*low, sr.bands.a_low, x_te);
                const Vector f_up = eval_quadratic(*up, sr.bands.a_up, x_te);
                for (Index i = 0; i < x_te.rows(); ++i) {
                    w[l].push_back(f_up(i) + f_low(i));
                    res[l].push_back(std::abs(r_te(i) - 0.5 * (f_up(i) - f_low(i))));
                }
                init = std::move(sr.state);
            } catch (const std::exception& e) {
                spdlog::debug("cv fold {} λ={} failed: {}", f, lambdas[l], e.what());
                ++out[l].failed_folds;
                init.reset();
            }
        }
    }
    const int max_failed = static_cast<int>(plan.train.size()) / 2;
    for (std::size_t l = 0; l < nl; ++l) {
        out[l].width = Eigen::Map<const Vector>(w[l].data(), static_cast<Index>(w[l].size()));
        out[l].residual = Eigen::Map<const Vector>(res[l].data(), static_cast<Index>(res[l].size()));
        out[l].usable = out[l].failed_folds <= max_failed && out[l].width.size() >= 4;
    }
    return out;
}

double cv_hsic(double theta_low, double theta_up, double lambda, const Matrix& x, const Vector& y,
               const Predictor& predictor, const TuneConfig& cfg, const NormalizationRecord& norm) {
    cfg.validate();
    const FoldPlan plan = make_folds(x.rows(), cfg.folds, cfg.seed, 0);
    const auto oof = cv_sweep(x, y, predictor, theta_low, theta_up, {lambda}, plan, cfg, norm);
    if (!oof[0].usable) throw NumericalError("cv_hsic: more than half of the folds failed");
    return hsic(oof[0].width, oof[0].residual);
}

TuneResult tune(const Matrix& x, const Vector& y, const Predictor& predictor, const TuneConfig& cfg) {
    cfg.validate();
    const Index n = x.rows();
    if (y.size() != n) throw ParameterError("tune: size mismatch");
    if (n < 2 * cfg.folds) throw ParameterError("tune: need at least 2K pre-training points");

    TuneResult out;
    out.theta_grid = resolve_theta_grid(cfg, x);
    out.lambda_grid = resolve_lambda_grid(cfg);
    const auto& thetas = out.theta_grid;
    const auto& lambdas = out.lambda_grid;
    const std::size_t nl = lambdas.size();

    if (cfg.full_2d && cfg.penalty != PenaltyKind::Operator) {
        for (double tl : thetas)
            for (double tu : thetas) out.theta_pairs.emplace_back(tl, tu);
    } else {
        for (double t : thetas) out.theta_pairs.emplace_back(t, t);
    }

    if (thetas.size() == 1 && nl == 1) {
        out.decision = TuneDecision::Passthrough;
        out.theta_low = out.theta_up = thetas[0];
        out.lambda = lambdas[0];
        return out;
    }

    out.normalization = cfg.normalize ? normalize_hyperparameters(x, y, predictor, cfg.b, cfg.solver, cfg.jitter)
                                      : NormalizationRecord{};
    const NormalizationRecord& norm = out.normalization;
    const FoldPlan plan0 = make_folds(n, cfg.folds, cfg.seed, 0);

    const std::size_t np = out.theta_pairs.size();
    out.hsic_table.assign(nl, std::vector<double>(np, kNaN));
    std::vector<std::vector<OutOfFold>> oof(np);  // [pair][λ]
    for (std::size_t j = 0; j < np; ++j) {
        const auto [tl, tu] = out.theta_pairs[j];
        oof[j] = cv_sweep(x, y, predictor, tl, tu, lambdas, plan0, cfg, norm);
        for (std::size_t l = 0; l < nl; ++l) {
            out.iterations += oof[j][l].iterations;
            out.hsic_table[l][j] = pooled_hsic(oof[j][l]);
            if (!oof[j][l].usable) ++out.failed_points;
        }
    }

    // Best θ pair per λ.
    std::vector<std::size_t> best(nl, 0);
    out.per_lambda.resize(nl);
    bool any = false;
    for (std::size_t l = 0; l < nl; ++l) {
        LambdaSummary& s = out.per_lambda[l];
        s.lambda = lambdas[l];
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < np; ++j) {
            const double h = out.hsic_table[l][j];
            if (std::isfinite(h) && h > top) {
                top = h;
                best[l] = j;
                s.usable = true;
            }
        }
        s.theta_low = out.theta_pairs[best[l]].first;
        s.theta_up = out.theta_pairs[best[l]].second;
        s.hsic = s.usable ? top : kNaN;
        any = any || s.usable;
    }
    if (!any) throw NumericalError("tune: every grid point failed");

    // HSIC replicates per λ at its best θ.
    if (cfg.replicate_mode == ReplicateMode::Bootstrap) {
        for (std::size_t l = 0; l < nl; ++l) {
            if (!out.per_lambda[l].usable) continue;
            const OutOfFold& o = oof[best[l]][l];
            const Index m = o.width.size();
            for (int rep = 0; rep < cfg.replicates; ++rep) {
                Rng rng(cfg.seed, "bootstrap", static_cast<std::uint64_t>(rep));
                Vector bw(m), br(m);
                for (Index i = 0; i < m; ++i) {
                    const auto k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
                    bw(i) = o.width(k);
                    br(i) = o.residual(k);
                }
                out.per_lambda[l].replicates.push_back(hsic(bw, br));
            }
        }
    } else {
        for (std::size_t l = 0; l < nl; ++l)
            if (out.per_lambda[l].usable) out.per_lambda[l].replicates.push_back(out.per_lambda[l].hsic);
        for (int rep = 1; rep < cfg.replicates; ++rep) {
            const FoldPlan plan = make_folds(n, cfg.folds, cfg.seed, static_cast<std::uint64_t>(rep));
            std::map<std::size_t, std::vector<std::size_t>> by_pair;
            for (std::size_t l = 0; l < nl; ++l)
                if (out.per_lambda[l].usable) by_pair[best[l]].push_back(l);
            for (const auto& [j, ls] : by_pair) {
                std::vector<double> sub;
                for (std::size_t l : ls) sub.push_back(lambdas[l]);
                const auto o = cv_sweep(x, y, predictor, out.theta_pairs[j].first, out.theta_pairs[j].second, sub,
                                        plan, cfg, norm);
                for (std::size_t k = 0; k < ls.size(); ++k) {
                    out.iterations += o[k].iterations;
                    if (o[k].usable) out.per_lambda[ls[k]].replicates.push_back(pooled_hsic(o[k]));
                }
            }
        }
    }

    // Decision across λ.
    std::vector<std::size_t> usable;
    for (std::size_t l = 0; l < nl; ++l)
        if (out.per_lambda[l].usable && out.per_lambda[l].replicates.size() >= 2) usable.push_back(l);
    std::size_t chosen = 0;
    if (usable.size() >= 2) {
        std::vector<Vector> groups;
        for (std::size_t l : usable) {
            const auto& rep = out.per_lambda[l].replicates;
            groups.emplace_back(Eigen::Map<const Vector>(rep.data(), static_cast<Index>(rep.size())));
        }
        out.kw = kruskal_wallis_perm(groups, cfg.permutations, cfg.seed);
        if (out.kw->p < cfg.level) {
            out.decision = TuneDecision::Selected;
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t l : usable)
                if (out.per_lambda[l].hsic > top) {
                    top = out.per_lambda[l].hsic;
                    chosen = l;
                }
        } else {
            out.decision = TuneDecision::SymmetricFallback;
            chosen = usable.back();
        }
    } else {
        out.decision = TuneDecision::Selected;
        for (std::size_t l = 0; l < nl; ++l)
            if (out.per_lambda[l].usable) chosen = l;
    }
    out.lambda_index = chosen;
    out.lambda = lambdas[chosen];
    std::size_t pair = best[chosen];
    out.theta_low = out.theta_pairs[pair].first;
    out.theta_up = out.theta_pairs[pair].second;
    OutOfFold winner = oof[pair][chosen];
    double winner_hsic = out.per_lambda[chosen].hsic;

    // One grid step per side around the winner, when the kernels may differ.
    if (cfg.asymmetric_refine && !cfg.full_2d && cfg.penalty != PenaltyKind::Operator && thetas.size() > 1 &&
        out.decision == TuneDecision::Selected) {
        const auto j = static_cast<long>(pair);
        const long last = static_cast<long>(thetas.size()) - 1;
        std::vector<std::pair<long, long>> moves;
        for (long d : {-1L, 1L}) {
            if (j + d >= 0 && j + d <= last) {
                moves.emplace_back(j + d, j);
                moves.emplace_back(j, j + d);
            }
        }
        for (const auto& [jl, ju] : moves) {
            const double tl = thetas[static_cast<std::size_t>(jl)];
            const double tu = thetas[static_cast<std::size_t>(ju)];
            const auto o = cv_sweep(x, y, predictor, tl, tu, {out.lambda}, plan0, cfg, norm);
            out.iterations += o[0].iterations;
            const double h = pooled_hsic(o[0]);
            if (std::isfinite(h) && h > winner_hsic) {
                winner_hsic = h;
                winner = o[0];
                out.theta_low = tl;
                out.theta_up = tu;
            }
        }
    }

    out.independence = independence_fallback(winner.width, winner.residual, cfg.permutations, cfg.level, cfg.seed);
    if (out.independence->fallback) {
        out.homoscedastic_fallback = true;
        double diam = diameter(x);
        if (!(diam > 0.0)) diam = 1.0;
        out.theta_low = out.theta_up = cfg.homoscedastic_factor * diam;
    }
    return out;
}

}  // namespace ksos
