#include "hbm/hierarchy.hpp"

#include "hbm/error.hpp"
#include "hbm/fingerprint.hpp"
#include "hbm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace hbm {

namespace {

constexpr std::size_t kInitDraws = 500;
constexpr std::size_t kPolishStarts = 4;

void validate_bounds(std::span<const Interval> bounds, std::size_t dim, const char* what) {
    if (bounds.size() != dim)
        throw DataError(std::string(what) + ": expected " + std::to_string(dim) +
                        " support intervals, got " + std::to_string(bounds.size()));
    for (const auto& b : bounds)
        if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || b.upper < b.lower)
            throw DataError(std::string(what) + ": support bounds must be finite with lower <= upper");
}

double uniform_log_volume(std::span<const Interval> bounds) {
    double v = 0.0;
    for (const auto& b : bounds)
        if (b.width() > 0.0) v += std::log(b.width());
    return v;
}

std::vector<double> uniform_draw(std::span<const Interval> bounds, Rng& rng) {
    std::vector<double> x(bounds.size());
    for (std::size_t j = 0; j < bounds.size(); ++j)
        x[j] = bounds[j].lower + uniform01(rng) * bounds[j].width();
    return x;
}

bool inside(std::span<const Interval> bounds, std::span<const double> x) {
    for (std::size_t j = 0; j < bounds.size(); ++j)
        if (!bounds[j].contains(x[j])) return false;
    return true;
}

// First finite point among `preferred`, else the best of kInitDraws draws.
template <class Draw>
std::vector<double> find_initial_point(const LogDensity& f, std::vector<std::vector<double>> preferred,
                                       Draw&& draw, const std::string& what) {
    for (auto& p : preferred) {
        const double v = f(p);
        if (std::isfinite(v)) return p;
    }
    std::vector<double> best;
    double best_v = kNegInf;
    for (std::size_t k = 0; k < kInitDraws; ++k) {
        auto p = draw();
        const double v = f(p);
        if (std::isfinite(v) && v > best_v) {
            best_v = v;
            best = std::move(p);
        }
    }
    if (best.empty())
        throw NumericalError(what + ": no initial point with finite log-target after " +
                             std::to_string(kInitDraws) + " attempts");
    return best;
}

// Nelder-Mead ascent inside a box, in unit-cube coordinates.
std::vector<double> nelder_mead(const LogDensity& f, std::vector<double> start,
                                std::span<const Interval> box, std::size_t iterations) {
    std::vector<std::size_t> free;
    for (std::size_t j = 0; j < box.size(); ++j)
        if (box[j].width() > 0.0) free.push_back(j);
    const std::size_t n = free.size();
    if (n == 0) return start;
    auto to_x = [&](const std::vector<double>& u) {
        std::vector<double> x = start;
        for (std::size_t k = 0; k < n; ++k) x[free[k]] = box[free[k]].lower + u[k] * box[free[k]].width();
        return x;
    };
    auto value = [&](const std::vector<double>& u) {
        for (double v : u)
            if (v < 0.0 || v > 1.0) return kNegInf;
        return f(to_x(u));
    };
    std::vector<std::vector<double>> simplex(n + 1, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k)
        simplex[0][k] = (start[free[k]] - box[free[k]].lower) / box[free[k]].width();
    for (std::size_t i = 1; i <= n; ++i) {
        simplex[i] = simplex[0];
        double& c = simplex[i][i - 1];
        c = c + 0.05 <= 1.0 ? c + 0.05 : c - 0.05;
    }
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = value(simplex[i]);
    std::vector<std::size_t> order(n + 1);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
        const std::size_t best = order[0], worst = order[n], second = order[n - 1];
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[order[i]][k] / static_cast<double>(n);
        auto along = [&](double t) {
            std::vector<double> u(n);
            for (std::size_t k = 0; k < n; ++k) u[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
            return u;
        };
        auto r = along(-1.0);
        const double fr = value(r);
        if (fr > vals[best]) {
            auto e = along(-2.0);
            const double fe = value(e);
            if (fe > fr) {
                simplex[worst] = e;
                vals[worst] = fe;
            } else {
                simplex[worst] = r;
                vals[worst] = fr;
            }
        } else if (fr > vals[second]) {
            simplex[worst] = r;
            vals[worst] = fr;
        } else {
            auto c = along(fr > vals[worst] ? -0.5 : 0.5);
            const double fc = value(c);
            if (fc > std::max(fr, vals[worst])) {
                simplex[worst] = c;
                vals[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < n; ++k)
                        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    vals[i] = value(simplex[i]);
                }
            }
        }
    }
    const auto top = std::max_element(vals.begin(), vals.end()) - vals.begin();
    return to_x(simplex[static_cast<std::size_t>(top)]);
}

// Best of the center and kInitDraws uniform draws, each of the few best
// polished by Nelder-Mead.
// Best of the candidates, each of the few best polished by Nelder-Mead
// inside `box`.
std::vector<double> polished_start(const LogDensity& f, std::vector<std::vector<double>> candidates,
                                   std::span<const Interval> box, const std::string& what) {
    std::vector<std::pair<double, std::vector<double>>> pool;
    for (auto& c : candidates) {
        const double v = f(c);
        pool.emplace_back(v, std::move(c));
    }
    std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (pool.empty() || !std::isfinite(pool.front().first))
        throw NumericalError(what + ": no initial point with finite log-target after " +
                             std::to_string(pool.size()) + " attempts");
    std::vector<double> best = pool.front().second;
    double best_v = pool.front().first;
    for (std::size_t k = 0; k < std::min<std::size_t>(kPolishStarts, pool.size()); ++k) {
        if (!std::isfinite(pool[k].first)) break;
        auto x = nelder_mead(f, pool[k].second, box, 200 * box.size());
        const double v = f(x);
        if (v > best_v) {
            best_v = v;
            best = std::move(x);
        }
    }
    return best;
}

// Center of the box plus kInitDraws uniform draws.
std::vector<double> box_initial_point(const LogDensity& f, std::span<const Interval> box, Rng& rng,
                                      const std::string& what) {
    std::vector<std::vector<double>> candidates;
    std::vector<double> center(box.size());
    for (std::size_t j = 0; j < box.size(); ++j) center[j] = 0.5 * (box[j].lower + box[j].upper);
    candidates.push_back(std::move(center));
    for (std::size_t k = 0; k < kInitDraws; ++k) candidates.push_back(uniform_draw(box, rng));
    return polished_start(f, std::move(candidates), box, what);
}

// Preferred points plus kInitDraws draws; the polishing box spans them all.
template <class Draw>
std::vector<double> drawn_initial_point(const LogDensity& f, std::vector<std::vector<double>> candidates,
                                        Draw&& draw, const std::string& what) {
    for (std::size_t k = 0; k < kInitDraws; ++k) candidates.push_back(draw());
    std::vector<Interval> box(candidates.front().size(),
                              Interval{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (const auto& c : candidates)
        for (std::size_t j = 0; j < c.size(); ++j) {
            box[j].lower = std::min(box[j].lower, c[j]);
            box[j].upper = std::max(box[j].upper, c[j]);
        }
    return polished_start(f, std::move(candidates), box, what);
}

double normal_logpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

}  // namespace

std::string_view to_string(SamplerKind kind) { return kind == SamplerKind::Slice ? "slice" : "tmcmc"; }

SamplerKind parse_sampler_kind(std::string_view name) {
    if (name == "slice") return SamplerKind::Slice;
    if (name == "tmcmc") return SamplerKind::Tmcmc;
    throw DataError("unknown sampler '" + std::string(name) + "' (expected slice|tmcmc)");
}

SampleSet stage1_infer(const Dataset& dataset, const DegradationModel& model,
                       std::span<const Interval> bounds, const SamplerConfig& config,
                       SamplerKind sampler) {
    if (dataset.points.empty()) throw DataError("stage 1: dataset '" + dataset.id + "' is empty");
    if (dataset.meta.family != model.family())
        throw DataError("stage 1: dataset '" + dataset.id + "' belongs to family '" +
                        std::string(to_string(dataset.meta.family)) + "', model is '" +
                        std::string(to_string(model.family())) + "'");
    validate_bounds(bounds, model.dimension() + 1, "stage 1");
    const DegradationModel bound = bind_model(model, dataset.meta);
    const std::vector<Interval> support(bounds.begin(), bounds.end());
    const std::string id = "stage1:" + dataset.id;

    LogDensity loglik = [&dataset, bound](std::span<const double> x) {
        return dataset_loglik(dataset, bound, x);
    };

    if (sampler == SamplerKind::Tmcmc) {
        const double log_volume = uniform_log_volume(support);
        TemperingProblem problem;
        problem.id = id;
        problem.labels = model.labels();
        problem.sample_prior = [support](Rng& rng) { return uniform_draw(support, rng); };
        problem.log_prior = [support, log_volume](std::span<const double> x) {
            return inside(support, x) ? -log_volume : kNegInf;
        };
        problem.log_likelihood = loglik;
        return tmcmc(problem, config);
    }

    TargetSpec target;
    target.id = id;
    target.labels = model.labels();
    target.support = support;
    target.log_target = [support, loglik](std::span<const double> x) {
        return inside(support, x) ? loglik(x) : kNegInf;
    };

    Rng init_rng = make_stream(config.seed, {0x1417});
    const auto init = box_initial_point(target.log_target, support, init_rng, id);
    return slice_sample(target, init, config);
}

SampleSet stage2_infer(std::span<const SampleSet> stage1, const HyperPriorBounds& bounds,
                       double sigma_max, const SamplerConfig& config, SamplerKind sampler) {
    if (stage1.empty()) throw std::invalid_argument("stage 2: no stage-1 sample sets");
    const std::size_t point_dim = stage1.front().dim();
    for (const auto& s : stage1)
        if (s.dim() != point_dim)
            throw DataError("stage 2: stage-1 sample sets have mismatched dimensions");
    if (point_dim != bounds.layout.dim + 1)
        throw DataError("stage 2: hyper-prior layout expects " +
                        std::to_string(bounds.layout.dim + 1) + "-dimensional stage-1 samples");

    const HyperPosteriorTarget target(stage1, bounds, sigma_max);
    const HyperLayout& layout = bounds.layout;
    const std::vector<Interval>& support = bounds.bounds;

    if (sampler == SamplerKind::Tmcmc) {
        TemperingProblem problem;
        problem.id = "hyper";
        problem.labels = layout.labels();
        problem.sample_prior = [support](Rng& rng) { return uniform_draw(support, rng); };
        problem.log_prior = [&target](std::span<const double> x) { return target.log_prior(x); };
        problem.log_likelihood = [&target](std::span<const double> x) {
            return target.log_likelihood(x);
        };
        return tmcmc(problem, config);
    }

    // Moment-matched starting point, pulled inside the bounds.
    const std::size_t d = layout.dim;
    std::vector<double> between_mean(point_dim, 0.0), within_var(point_dim, 0.0);
    std::vector<std::vector<double>> means;
    for (const auto& s : stage1) {
        means.push_back(s.mean());
        const auto cov = s.covariance();
        for (std::size_t j = 0; j < point_dim; ++j) {
            between_mean[j] += means.back()[j] / static_cast<double>(stage1.size());
            within_var[j] += cov[j * point_dim + j] / static_cast<double>(stage1.size());
        }
    }
    HyperParameters guess;
    for (std::size_t j = 0; j < point_dim; ++j) {
        double between = 0.0;
        for (const auto& m : means) between += (m[j] - between_mean[j]) * (m[j] - between_mean[j]);
        between /= static_cast<double>(means.size());
        const double sd = std::sqrt(between + within_var[j]);
        if (j < d) {
            guess.mu0.push_back(between_mean[j]);
            guess.sd0.push_back(sd);
        } else {
            guess.mu_sigma = between_mean[j];
            guess.sd_sigma = sd;
        }
    }
    if (layout.cov == CovarianceCase::Correlated) guess.rho = 0.0;
    auto packed = guess.pack();
    for (std::size_t j = 0; j < packed.size(); ++j) {
        const auto& b = support[j];
        const double margin = 0.01 * b.width();
        packed[j] = std::clamp(packed[j], b.lower + margin, b.upper - margin);
    }

    TargetSpec spec;
    spec.id = "hyper";
    spec.labels = layout.labels();
    spec.support = support;
    spec.log_target = [&target](std::span<const double> x) { return target(x); };
    Rng init_rng = make_stream(config.seed, {0x1418});
    const auto init = find_initial_point(
        spec.log_target, {packed}, [&] { return uniform_draw(support, init_rng); }, "stage 2");
    return slice_sample(spec, init, config);
}

HierarchyResult fit_historical(std::span<const Dataset> historical, const DegradationModel& model,
                               std::span<const Interval> stage1_bounds,
                               const HyperPriorBounds& hyper_bounds, double sigma_max,
                               const SamplerConfig& config, const HierarchyOptions& options) {
    if (historical.empty()) throw DataError("no historical datasets");
    HierarchyResult result;
    result.stage1.resize(historical.size());
    const SamplerKind stage1_sampler = options.evidence ? SamplerKind::Tmcmc : SamplerKind::Slice;
    const SamplerKind stage2_sampler = options.evidence ? SamplerKind::Tmcmc : options.stage2_sampler;

    parallel_for(historical.size(), config.threads, [&](std::size_t i) {
        SamplerConfig c = config;
        c.seed = derive_seed(config.seed, "stage1:" + historical[i].id);
        c.threads = 1;
        result.stage1[i] = stage1_infer(historical[i], model, stage1_bounds, c, stage1_sampler);
    });

    std::vector<std::size_t> order(historical.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return historical[a].id < historical[b].id; });
    std::vector<SampleSet> kept;
    kept.reserve(result.stage1.size());
    for (std::size_t i : order) kept.push_back(result.stage1[i].thinned(options.stage1_keep));

    SamplerConfig c2 = config;
    c2.seed = derive_seed(config.seed, "stage2");
    result.hyper = stage2_infer(kept, hyper_bounds, sigma_max, c2, stage2_sampler);

    if (options.evidence) {
        double log_z = result.hyper.evidence->log_evidence;
        double var = std::pow(result.hyper.evidence->std_error, 2);
        const double log_volume = uniform_log_volume(stage1_bounds);
        for (const auto& s : result.stage1) {
            log_z += s.evidence->log_evidence + log_volume;
            var += std::pow(s.evidence->std_error, 2);
        }
        result.log_evidence = Evidence{log_z, std::sqrt(var)};
    }

    std::ostringstream os;
    os.precision(17);
    os << to_string(model.family()) << '|';
    for (double v : model.nominals()) os << v << ',';
    for (const auto& b : stage1_bounds) os << b.lower << ':' << b.upper << ',';
    for (const auto& b : hyper_bounds.bounds) os << b.lower << ':' << b.upper << ',';
    os << to_string(hyper_bounds.layout.cov) << '|' << sigma_max << '|' << config.canonical() << '|'
       << options.stage1_keep << '|' << to_string(stage2_sampler) << '|' << options.evidence;
    for (std::size_t i : order) os << '|' << historical[i].id;
    result.config_fingerprint = fingerprint(os.str());
    return result;
}

SampleSet update_current(const Dataset& current, const SampleSet& hyper,
                         const DegradationModel& model, double sigma_max,
                         const SamplerConfig& config, std::size_t max_hyper) {
    config.validate();
    if (hyper.empty()) throw std::invalid_argument("update_current: empty hyper sample set");
    if (current.meta.family != model.family())
        throw DataError("update_current: dataset '" + current.id + "' belongs to family '" +
                        std::string(to_string(current.meta.family)) + "', model is '" +
                        std::string(to_string(model.family())) + "'");
    const MixturePrior prior(hyper.thinned(max_hyper), sigma_max);
    if (prior.point_dim() != model.dimension() + 1)
        throw DataError("update_current: hyper samples do not match the model dimension");
    const std::string id = "current:" + current.id;

    if (current.points.empty()) {
        Rng rng = make_stream(config.seed, {0xa7c5});
        SampleSet out(model.labels());
        out.reserve(config.n_samples);
        for (std::size_t i = 0; i < config.n_samples; ++i) out.push_back(prior.draw(rng));
        out.provenance = {id, "ancestral", fingerprint(config.canonical()), config.seed};
        return out;
    }

    const DegradationModel bound = bind_model(model, current.meta);
    TargetSpec target;
    target.id = id;
    target.labels = model.labels();
    target.support = TargetSpec::unbounded(model.dimension() + 1);
    target.support.back() = Interval{0.0, sigma_max};
    target.log_target = [&](std::span<const double> x) {
        if (!(x.back() > 0.0 && x.back() < sigma_max)) return kNegInf;
        const double lp = prior(x);
        if (lp == kNegInf) return kNegInf;
        return lp + dataset_loglik(current, bound, x);
    };
    Rng init_rng = make_stream(config.seed, {0xa7c6});
    const auto init = drawn_initial_point(target.log_target, {prior.mean()},
                                          [&] { return prior.draw(init_rng); }, id);
    return slice_sample(target, init, config);
}

void ClassicalPrior::validate(std::size_t dim) const {
    if (means.size() != dim || sds.size() != dim)
        throw DataError("classical prior: expected " + std::to_string(dim) + " means and sds");
    for (double s : sds)
        if (!(s > 0.0)) throw DataError("classical prior: standard deviations must be > 0");
    if (!(sigma_range.upper > sigma_range.lower) || sigma_range.lower < 0.0)
        throw DataError("classical prior: sigma range must satisfy 0 <= lower < upper");
    if (sigma_gaussian && !(sigma_gaussian->second > 0.0))
        throw DataError("classical prior: sigma sd must be > 0");
}

SampleSet classical_update(const Dataset& current, const ClassicalPrior& prior,
                           const DegradationModel& model, const SamplerConfig& config) {
    config.validate();
    const std::size_t d = model.dimension();
    prior.validate(d);
    if (current.points.empty()) throw DataError("classical update: dataset '" + current.id + "' is empty");
    if (current.meta.family != model.family())
        throw DataError("classical update: dataset family does not match the model");
    const DegradationModel bound = bind_model(model, current.meta);
    const auto nominals = model.nominals();
    const Interval sr = prior.sigma_range;

    double sigma_log_norm = 0.0;
    if (prior.sigma_gaussian) {
        const auto [m, s] = *prior.sigma_gaussian;
        sigma_log_norm = log_normal_probability((sr.lower - m) / s, (sr.upper - m) / s);
    }

    auto log_prior = [&](std::span<const double> x) {
        const double sigma = x[d];
        if (!(sigma > sr.lower && sigma < sr.upper)) return kNegInf;
        double lp = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            lp += normal_logpdf(x[j] * nominals[j], prior.means[j], prior.sds[j]);
        if (prior.sigma_gaussian)
            lp += normal_logpdf(sigma, prior.sigma_gaussian->first, prior.sigma_gaussian->second) -
                  sigma_log_norm;
        return lp;
    };

    TargetSpec target;
    target.id = "classical:" + current.id;
    target.labels = model.labels();
    target.support = TargetSpec::unbounded(d + 1);
    target.support.back() = sr;
    target.log_target = [&](std::span<const double> x) {
        const double lp = log_prior(x);
        if (lp == kNegInf) return kNegInf;
        return lp + dataset_loglik(current, bound, x);
    };

    std::vector<double> center(d + 1);
    for (std::size_t j = 0; j < d; ++j) center[j] = prior.means[j] / nominals[j];
    center[d] = prior.sigma_gaussian
                    ? std::clamp(prior.sigma_gaussian->first, sr.lower + 0.01 * sr.width(),
                                 sr.upper - 0.01 * sr.width())
                    : 0.5 * (sr.lower + sr.upper);
    Rng init_rng = make_stream(config.seed, {0xc1a5});
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto init = drawn_initial_point(
        target.log_target, {center},
        [&] {
            std::vector<double> x(d + 1);
            for (std::size_t j = 0; j < d; ++j)
                x[j] = (prior.means[j] + prior.sds[j] * normal(init_rng)) / nominals[j];
            x[d] = sr.lower + uniform01(init_rng) * sr.width();
            return x;
        },
        target.id);
    return slice_sample(target, init, config);
}

std::vector<ModelRanking> model_select(std::span<const Dataset> historical,
                                       std::span<const ModelCandidate> candidates,
                                       const SamplerConfig& config,
                                       const HierarchyOptions& options) {
    if (candidates.size() < 2) throw std::invalid_argument("model_select: need at least two candidates");
    std::vector<ModelRanking> ranking;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& cand = candidates[c];
        ModelRanking r;
        r.name = cand.name;
        r.family = cand.model.family();
        try {
            SamplerConfig cc = config;
            cc.seed = derive_seed(config.seed, "candidate:" + std::to_string(c) + ":" + cand.name);
            HierarchyOptions opts = options;
            opts.evidence = true;
            // The same series read under the candidate's family.
            std::vector<Dataset> data(historical.begin(), historical.end());
            for (auto& d : data) {
                d.meta.family = cand.model.family();
                d.meta.nominals.clear();
            }
            const auto fit = fit_historical(data, cand.model, cand.stage1_bounds,
                                            cand.hyper_bounds, cand.sigma_max, cc, opts);
            r.log_evidence = fit.log_evidence;
        } catch (const std::exception& e) {
            r.error = e.what();
            if (r.error.empty()) r.error = "candidate pipeline failed";
        }
        ranking.push_back(std::move(r));
    }
    std::stable_sort(ranking.begin(), ranking.end(), [](const ModelRanking& a, const ModelRanking& b) {
        if (a.failed() != b.failed()) return !a.failed();
        if (a.failed()) return false;
        return a.log_evidence->log_evidence > b.log_evidence->log_evidence;
    });
    return ranking;
}

}  // namespace hbm
