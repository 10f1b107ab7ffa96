#include "hbm/synthetic.hpp"

#include "hbm/error.hpp"
#include "hbm/prognostics.hpp"
#include "hbm/random.hpp"

#include <cmath>
#include <limits>

namespace hbm {

namespace {

constexpr int kMaxRedraws = 1000;

}  // namespace

void SyntheticSpec::validate() const {
    truth.validate();
    const std::size_t d = theta_dimension(family);
    if (truth.mu0.size() != d)
        throw DataError("synthetic spec: truth has " + std::to_string(truth.mu0.size()) +
                        " mean components, family needs " + std::to_string(d));
    if (!nominals.empty() && nominals.size() != d) throw DataError("synthetic spec: wrong number of nominals");
    if (!(sigma_max > 0.0)) throw DataError("synthetic spec: sigma_max must be > 0");
    if (units == 0) throw DataError("synthetic spec: need at least one unit");
    if (first_cycle < 0 || cycle_step < 1) throw DataError("synthetic spec: bad cycle grid");
    if (max_points < 3) throw DataError("synthetic spec: need at least 3 points per unit");
    if (run_to_failure && !threshold) throw DataError("synthetic spec: run-to-failure needs a threshold");
    if (noise_sigma && !(*noise_sigma >= 0.0)) throw DataError("synthetic spec: noise sigma must be >= 0");
    if (family == ModelFamily::BatterySingle && first_cycle < 1)
        throw DataError("synthetic spec: single-exponential capacity starts at cycle 1");
    if (family == ModelFamily::Paris) {
        try {
            geometry.validate();
            loading.validate();
        } catch (const std::invalid_argument& e) {
            throw DataError(std::string("synthetic spec: ") + e.what());
        }
        if (static_cast<double>(first_cycle) < geometry.n0)
            throw DataError("synthetic spec: first cycle precedes the geometry's n0");
    }
}

nlohmann::json SyntheticFleet::ground_truth_json() const {
    nlohmann::json j;
    j["psi"] = psi.pack();
    j["psi_labels"] = psi.layout().labels();
    nlohmann::json units = nlohmann::json::array();
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        nlohmann::json u;
        u["id"] = datasets[i].id;
        u["point"] = truth[i];
        if (std::isfinite(true_eol[i])) u["true_eol"] = true_eol[i];
        else u["true_eol"] = "inf";
        units.push_back(u);
    }
    j["units"] = units;
    return j;
}

SyntheticFleet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const DegradationModel model(spec.family, spec.nominals);
    UnitMetadata meta;
    meta.family = spec.family;
    meta.units = !spec.units_label.empty() ? spec.units_label : (spec.family == ModelFamily::Paris ? "mm" : "Ahr");
    meta.nominals = spec.nominals;
    if (spec.family == ModelFamily::Paris) {
        meta.geometry = spec.geometry;
        meta.loading = spec.loading;
    }
    if (spec.threshold) meta.failure_threshold = spec.threshold;
    meta.note = "synthetic";
    const DegradationModel bound = bind_model(model, meta);
    const bool lognormal = model.likelihood() == LikelihoodFamily::Lognormal;

    // One-row hyper set so the truncated sigma draw matches the prior exactly.
    const HyperLayout layout = spec.truth.layout();
    SampleSet hyper(layout.labels());
    hyper.push_back(spec.truth.pack());
    const MixturePrior prior(hyper, spec.sigma_max);

    SyntheticFleet fleet;
    fleet.psi = spec.truth;
    const std::size_t d = model.dimension();
    for (std::size_t i = 0; i < spec.units; ++i) {
        Rng rng = make_stream(seed, {0x5e7, i});
        std::normal_distribution<double> normal(0.0, 1.0);
        bool accepted = false;
        for (int attempt = 0; attempt < kMaxRedraws && !accepted; ++attempt) {
            std::vector<double> point = prior.draw(rng);
            if (spec.noise_sigma) point[d] = *spec.noise_sigma;
            const double sigma = point[d];
            Dataset ds;
            ds.id = spec.id_prefix + std::to_string(i + 1);
            ds.meta = meta;
            bool ok = true;
            for (std::size_t k = 0; k < spec.max_points && ok; ++k) {
                const std::int64_t cycle = spec.first_cycle + static_cast<std::int64_t>(k) * spec.cycle_step;
                const auto g = bound.evaluate(point, static_cast<double>(cycle));
                if (!g || !std::isfinite(*g) || !(*g > 0.0)) {
                    ok = spec.run_to_failure && bound.grows() && ds.points.size() >= 3;
                    break;
                }
                double y = *g;
                if (sigma > 0.0) {
                    if (lognormal) {
                        const double zeta2 = std::log1p((sigma / y) * (sigma / y));
                        y = std::exp(std::log(y) - 0.5 * zeta2 + std::sqrt(zeta2) * normal(rng));
                    } else {
                        y += sigma * normal(rng);
                    }
                }
                if (!(y > 0.0) || !std::isfinite(y)) {
                    ok = false;
                    break;
                }
                ds.points.push_back({cycle, y});
                if (spec.run_to_failure) {
                    const bool crossed = bound.grows() ? *g >= *spec.threshold : *g <= *spec.threshold;
                    if (crossed) break;
                }
            }
            if (!ok || ds.points.size() < 3) continue;

            double eol = std::numeric_limits<double>::infinity();
            if (spec.threshold) {
                PrognosisConfig pc;
                pc.threshold = *spec.threshold;
                pc.current_cycle = static_cast<double>(spec.first_cycle);
                pc.horizon = pc.current_cycle + 100.0 * static_cast<double>(spec.cycle_step) *
                                                    static_cast<double>(spec.max_points);
                pc.scan_stride = 1;
                const auto e = end_of_life(point, bound, pc);
                if (!e.censored) eol = e.cycle;
            }
            fleet.datasets.push_back(std::move(ds));
            fleet.truth.push_back(point);
            fleet.true_eol.push_back(eol);
            accepted = true;
        }
        if (!accepted)
            throw DataError("synthetic: no admissible draw for unit " + std::to_string(i + 1) + " after " +
                            std::to_string(kMaxRedraws) + " attempts");
    }
    return fleet;
}

}  // namespace hbm
