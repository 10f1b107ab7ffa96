#include "hbm/prognostics.hpp"

#include "hbm/error.hpp"
#include "hbm/fingerprint.hpp"
#include "hbm/parallel.hpp"
#include "hbm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_bound(const DegradationModel& model) {
    if (model.family() == ModelFamily::Paris && !model.crack())
        throw DataError("prognosis: crack model needs geometry and loading");
}

// Lowest cycle index where the family is defined.
double domain_start(const DegradationModel& model) {
    return model.family() == ModelFamily::BatterySingle ? 1.0 : 0.0;
}

bool crossed(const DegradationModel& model, std::span<const double> theta, double t, double threshold) {
    const auto v = model.evaluate(theta, t);
    if (!v) return true;
    return model.grows() ? *v >= threshold : *v <= threshold;
}

std::string config_text(const PrognosisConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << c.threshold << '|' << c.current_cycle << '|' << c.horizon << '|';
    for (double q : c.quantiles) os << q << ',';
    os << '|' << c.interval_mass << '|' << c.include_observation_noise << '|' << c.scan_stride << '|'
       << c.seed;
    return os.str();
}

PrognosisResult header(const PrognosisConfig& config) {
    PrognosisResult r;
    r.threshold = config.threshold;
    r.current_cycle = config.current_cycle;
    r.horizon = config.horizon;
    r.quantile_levels = config.quantiles;
    r.config_fingerprint = fingerprint(config_text(config));
    r.seed = config.seed;
    return r;
}

}  // namespace

void PrognosisConfig::validate() const {
    if (!std::isfinite(threshold) || !std::isfinite(current_cycle) || !std::isfinite(horizon))
        throw std::invalid_argument("prognosis config: threshold, current cycle and horizon must be finite");
    if (!(horizon > current_cycle)) throw std::invalid_argument("prognosis config: horizon must exceed t_c");
    if (current_cycle < 0.0) throw std::invalid_argument("prognosis config: t_c must be >= 0");
    if (quantiles.empty()) throw std::invalid_argument("prognosis config: no quantile levels");
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
        if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0))
            throw std::invalid_argument("prognosis config: quantile levels must lie in (0, 1)");
        if (i > 0 && !(quantiles[i] > quantiles[i - 1]))
            throw std::invalid_argument("prognosis config: quantile levels must be strictly increasing");
    }
    if (!(interval_mass > 0.0 && interval_mass < 1.0))
        throw std::invalid_argument("prognosis config: interval mass must lie in (0, 1)");
    if (scan_stride < 1) throw std::invalid_argument("prognosis config: scan stride must be >= 1");
}

PrognosisResult predict_trajectory(const SampleSet& samples, const DegradationModel& model,
                                   std::span<const double> grid, const PrognosisConfig& config) {
    config.validate();
    require_bound(model);
    if (samples.empty()) throw std::invalid_argument("predict_trajectory: empty sample set");
    if (samples.dim() != model.dimension() + 1)
        throw DataError("predict_trajectory: sample dimension does not match the model");
    if (grid.empty()) throw std::invalid_argument("predict_trajectory: empty cycle grid");
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (!(grid[g] > grid[g - 1]))
            throw std::invalid_argument("predict_trajectory: grid must be strictly increasing");

    const std::size_t n = samples.size();
    const std::size_t d = model.dimension();
    const bool lognormal = model.likelihood() == LikelihoodFamily::Lognormal;
    // values[g * n + l]
    std::vector<double> values(grid.size() * n);
    parallel_for(n, config.threads, [&](std::size_t l) {
        const auto point = samples.row(l);
        const double sigma = point[d];
        Rng rng = make_stream(config.seed, {0xb4d5, l});
        std::normal_distribution<double> normal(0.0, 1.0);
        bool diverged = false;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double y = kInf;
            if (!diverged) {
                const auto v = model.evaluate(point, grid[g]);
                if (v) y = *v;
                else diverged = true;
            }
            if (config.include_observation_noise && std::isfinite(y)) {
                if (lognormal) {
                    if (y > 0.0) {
                        const double zeta2 = std::log1p((sigma / y) * (sigma / y));
                        y = std::exp(std::log(y) - 0.5 * zeta2 + std::sqrt(zeta2) * normal(rng));
                    }
                } else {
                    y += sigma * normal(rng);
                }
            }
            values[g * n + l] = y;
        }
    });

    PrognosisResult r = header(config);
    r.grid.assign(grid.begin(), grid.end());
    r.bands.assign(config.quantiles.size(), std::vector<double>(grid.size()));
    std::vector<double> column(n);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(g * n), n, column.begin());
        std::sort(column.begin(), column.end());
        for (std::size_t q = 0; q < config.quantiles.size(); ++q)
            r.bands[q][g] = quantile_sorted(column, config.quantiles[q]);
    }
    return r;
}

EolSample end_of_life(std::span<const double> point, const DegradationModel& model,
                      const PrognosisConfig& config) {
    config.validate();
    require_bound(model);
    if (point.size() < model.dimension()) throw std::invalid_argument("end_of_life: point too short");
    const double tc = config.current_cycle;
    const double horizon = config.horizon;

    if (model.family() == ModelFamily::Paris) {
        CrackGeometry geometry = model.crack()->geometry;
        if (!(config.threshold > 0.0)) throw std::invalid_argument("end_of_life: crack threshold must be > 0");
        if (config.threshold <= geometry.a0) return {std::max(geometry.n0, tc), false};
        geometry.af = config.threshold;
        double nf = kInf;
        try {
            nf = cycles_to_failure(model.crack_params(point), geometry, model.crack()->loading);
        } catch (const NumericalError&) {
            return {horizon, true};
        }
        if (std::isnan(nf) || nf > horizon) return {horizon, true};
        return {std::max(nf, tc), false};
    }

    const double threshold = config.threshold;
    if (tc >= domain_start(model) && crossed(model, point, tc, threshold)) return {tc, false};

    const double last = std::floor(horizon);
    double lo = std::floor(tc);  // not crossed (or outside the domain)
    double k = lo + 1.0;
    const double stride = static_cast<double>(config.scan_stride);
    while (k <= last) {
        if (k >= domain_start(model) && crossed(model, point, k, threshold)) {
            double hi = k;
            while (hi - lo > 1.0) {
                const double mid = std::floor(0.5 * (lo + hi));
                if (mid >= domain_start(model) && crossed(model, point, mid, threshold)) hi = mid;
                else lo = mid;
            }
            return {hi, false};
        }
        lo = k;
        if (k == last) break;
        k = std::min(k + stride, last);
    }
    return {horizon, true};
}

PrognosisResult rul_distribution(const SampleSet& samples, const DegradationModel& model,
                                 const PrognosisConfig& config) {
    config.validate();
    require_bound(model);
    if (samples.empty()) throw std::invalid_argument("rul_distribution: empty sample set");
    if (samples.dim() != model.dimension() + 1)
        throw DataError("rul_distribution: sample dimension does not match the model");

    const std::size_t n = samples.size();
    PrognosisResult r = header(config);
    r.eol.resize(n);
    r.rul.resize(n);
    r.censored.resize(n);
    parallel_for(n, config.threads, [&](std::size_t l) {
        const auto e = end_of_life(samples.row(l), model, config);
        r.eol[l] = e.cycle;
        r.rul[l] = e.cycle - config.current_cycle;
        r.censored[l] = e.censored ? 1 : 0;
    });

    RulSummary s;
    std::vector<double> sorted = r.rul;
    std::sort(sorted.begin(), sorted.end());
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    s.median = quantile_sorted(sorted, 0.5);
    s.lower = quantile_sorted(sorted, 0.5 * (1.0 - config.interval_mass));
    s.upper = quantile_sorted(sorted, 0.5 * (1.0 + config.interval_mass));
    const auto n_censored = std::count(r.censored.begin(), r.censored.end(), std::uint8_t{1});
    s.censored_fraction = static_cast<double>(n_censored) / static_cast<double>(n);
    s.informative = static_cast<std::size_t>(n_censored) < n;
    r.summary = s;
    return r;
}

}  // namespace hbm
