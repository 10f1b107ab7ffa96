#include "hbm/cli.hpp"

#include "hbm/error.hpp"
#include "hbm/fingerprint.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

namespace hbm {

using nlohmann::json;

namespace {

std::vector<Interval> intervals(const json& j, const std::string& what) {
    if (!j.is_array()) throw DataError("config: '" + what + "' must be an array of [lower, upper] pairs");
    std::vector<Interval> out;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw DataError("config: '" + what + "' must be an array of [lower, upper] pairs");
        out.push_back({p[0].get<double>(), p[1].get<double>()});
        if (!(out.back().upper >= out.back().lower))
            throw DataError("config: '" + what + "' has an interval with upper < lower");
    }
    return out;
}

std::vector<double> doubles(const json& j, const std::string& what) {
    if (!j.is_array()) throw DataError("config: '" + what + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw DataError("config: '" + what + "' must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError("config: '" + where + key + "' is missing or has the wrong type");
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw DataError("config: '" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw DataError("config: unknown key '" + where + k + "'");
}

HyperPriorBounds make_hyper_bounds(ModelFamily family, CovarianceCase cov,
                                   const std::optional<std::vector<Interval>>& custom) {
    if (!custom) return HyperPriorBounds::defaults_for(family, cov);
    HyperPriorBounds b;
    b.layout = HyperLayout{theta_dimension(family), cov};
    b.bounds = *custom;
    if (b.bounds.size() != b.layout.size())
        throw DataError("config: hyper_bounds needs " + std::to_string(b.layout.size()) + " intervals (" +
                        [&] {
                            std::string s;
                            for (const auto& l : b.layout.labels()) s += (s.empty() ? "" : ", ") + l;
                            return s;
                        }() +
                        ")");
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: hyper_bounds: ") + e.what());
    }
    return b;
}

SyntheticSpec parse_synthetic(const json& j, ModelFamily default_family, const std::vector<double>& nominals) {
    check_keys(j,
               {"model", "nominals", "truth", "sigma_max", "units", "first_cycle", "cycle_step", "max_points",
                "run_to_failure", "threshold", "noise_sigma", "geometry", "loading", "id_prefix", "units_label"},
               "synthetic.");
    SyntheticSpec s;
    s.family = j.contains("model") ? parse_model_family(get<std::string>(j, "model", "synthetic.")) : default_family;
    s.nominals = j.contains("nominals") ? doubles(j.at("nominals"), "synthetic.nominals")
                                        : (s.family == default_family ? nominals : std::vector<double>{});
    if (!j.contains("truth")) throw DataError("config: missing 'synthetic.truth'");
    const json& t = j.at("truth");
    check_keys(t, {"mu", "sd", "rho", "mu_sigma", "sd_sigma"}, "synthetic.truth.");
    s.truth.mu0 = doubles(t.at("mu"), "synthetic.truth.mu");
    s.truth.sd0 = doubles(t.at("sd"), "synthetic.truth.sd");
    if (t.contains("rho")) s.truth.rho = get<double>(t, "rho", "synthetic.truth.");
    s.truth.mu_sigma = get<double>(t, "mu_sigma", "synthetic.truth.");
    s.truth.sd_sigma = get<double>(t, "sd_sigma", "synthetic.truth.");
    try {
        s.truth.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: synthetic.truth: ") + e.what());
    }
    s.sigma_max = j.value("sigma_max", default_sigma_truncation(s.family));
    s.units = j.value("units", s.units);
    s.first_cycle = j.value("first_cycle", s.first_cycle);
    s.cycle_step = j.value("cycle_step", s.cycle_step);
    s.max_points = j.value("max_points", s.max_points);
    s.run_to_failure = j.value("run_to_failure", false);
    if (j.contains("threshold")) s.threshold = get<double>(j, "threshold", "synthetic.");
    if (j.contains("noise_sigma")) s.noise_sigma = get<double>(j, "noise_sigma", "synthetic.");
    if (s.family == ModelFamily::Paris) {
        json meta = {{"family", "paris"}, {"units", "mm"}};
        if (!j.contains("geometry")) throw DataError("config: missing 'synthetic.geometry' for a crack fleet");
        if (!j.contains("loading")) throw DataError("config: missing 'synthetic.loading' for a crack fleet");
        meta["geometry"] = j.at("geometry");
        meta["loading"] = j.at("loading");
        const UnitMetadata m = metadata_from_json(meta, "config: synthetic");
        s.geometry = *m.geometry;
        s.loading = *m.loading;
    }
    s.id_prefix = j.value("id_prefix", s.id_prefix);
    s.units_label = j.value("units_label", s.units_label);
    s.validate();
    return s;
}

}  // namespace

DegradationModel RunConfig::model() const { return DegradationModel(family, nominals); }

double RunConfig::sigma_truncation() const { return sigma_max ? *sigma_max : default_sigma_truncation(family); }

HyperPriorBounds RunConfig::hyper_prior() const { return make_hyper_bounds(family, cov, hyper_bounds); }

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    check_keys(j,
               {"model", "nominals", "case", "stage1_bounds", "hyper_bounds", "sigma_max", "seed", "sampler",
                "historical", "current", "cutoff", "prognosis", "classical_prior", "candidates", "synthetic"},
               "");
    RunConfig c;
    auto path = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    if (j.contains("model")) c.family = parse_model_family(get<std::string>(j, "model", ""));
    if (j.contains("nominals")) {
        c.nominals = doubles(j.at("nominals"), "nominals");
        if (c.nominals.size() != theta_dimension(c.family)) throw DataError("config: 'nominals' has the wrong length");
    }
    if (j.contains("case")) c.cov = parse_covariance_case(get<std::string>(j, "case", ""));
    if (j.contains("stage1_bounds")) c.stage1_bounds = intervals(j.at("stage1_bounds"), "stage1_bounds");
    if (j.contains("hyper_bounds")) c.hyper_bounds = intervals(j.at("hyper_bounds"), "hyper_bounds");
    if (j.contains("sigma_max")) c.sigma_max = get<double>(j, "sigma_max", "");
    if (j.contains("seed")) c.sampler.seed = get<std::uint64_t>(j, "seed", "");

    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s,
                   {"samples", "burn_in", "thin", "stage2", "stage1_keep", "max_hyper", "threads", "slice_widths",
                    "max_step_out", "max_shrink", "slice_adapt", "tmcmc_stage_size", "tmcmc_target_cov", "tmcmc_proposal_scale",
                    "tmcmc_chain_length"},
                   "sampler.");
        auto& sc = c.sampler;
        sc.n_samples = s.value("samples", sc.n_samples);
        sc.burn_in = s.value("burn_in", sc.burn_in);
        sc.thin = s.value("thin", sc.thin);
        sc.threads = s.value("threads", sc.threads);
        if (s.contains("slice_widths")) sc.slice_widths = doubles(s.at("slice_widths"), "sampler.slice_widths");
        sc.max_step_out = s.value("max_step_out", sc.max_step_out);
        sc.max_shrink = s.value("max_shrink", sc.max_shrink);
        sc.slice_adapt = s.value("slice_adapt", sc.slice_adapt);
        sc.tmcmc_stage_size = s.value("tmcmc_stage_size", sc.tmcmc_stage_size);
        sc.tmcmc_target_cov = s.value("tmcmc_target_cov", sc.tmcmc_target_cov);
        sc.tmcmc_proposal_scale = s.value("tmcmc_proposal_scale", sc.tmcmc_proposal_scale);
        sc.tmcmc_chain_length = s.value("tmcmc_chain_length", sc.tmcmc_chain_length);
        if (s.contains("stage2")) c.stage2_sampler = parse_sampler_kind(get<std::string>(s, "stage2", "sampler."));
        c.stage1_keep = s.value("stage1_keep", c.stage1_keep);
        c.max_hyper = s.value("max_hyper", c.max_hyper);
    }

    if (j.contains("historical")) {
        const json& h = j.at("historical");
        if (!h.is_array()) throw DataError("config: 'historical' must be an array of paths");
        for (const auto& p : h) c.historical.push_back(path(p.get<std::string>()));
    }
    if (j.contains("current")) c.current = path(get<std::string>(j, "current", ""));
    if (j.contains("cutoff")) c.cutoff = get<std::int64_t>(j, "cutoff", "");

    if (j.contains("prognosis")) {
        const json& p = j.at("prognosis");
        check_keys(p,
                   {"threshold", "horizon", "quantiles", "interval_mass", "include_observation_noise", "grid_step",
                    "scan_stride"},
                   "prognosis.");
        if (p.contains("threshold")) c.threshold = get<double>(p, "threshold", "prognosis.");
        if (p.contains("horizon")) c.horizon = get<double>(p, "horizon", "prognosis.");
        if (p.contains("quantiles")) c.quantiles = doubles(p.at("quantiles"), "prognosis.quantiles");
        c.interval_mass = p.value("interval_mass", c.interval_mass);
        c.include_observation_noise = p.value("include_observation_noise", false);
        c.grid_step = p.value("grid_step", c.grid_step);
        c.scan_stride = p.value("scan_stride", c.scan_stride);
    }

    if (j.contains("classical_prior")) {
        const json& p = j.at("classical_prior");
        check_keys(p, {"means", "sds", "sigma_range", "sigma_gaussian"}, "classical_prior.");
        ClassicalPrior cp;
        cp.means = doubles(p.at("means"), "classical_prior.means");
        cp.sds = doubles(p.at("sds"), "classical_prior.sds");
        cp.sigma_range = Interval{0.0, default_sigma_truncation(c.family)};
        if (p.contains("sigma_range")) {
            const auto r = doubles(p.at("sigma_range"), "classical_prior.sigma_range");
            if (r.size() != 2) throw DataError("config: 'classical_prior.sigma_range' must be [lower, upper]");
            cp.sigma_range = {r[0], r[1]};
        }
        if (p.contains("sigma_gaussian")) {
            const auto g = doubles(p.at("sigma_gaussian"), "classical_prior.sigma_gaussian");
            if (g.size() != 2) throw DataError("config: 'classical_prior.sigma_gaussian' must be [mean, sd]");
            cp.sigma_gaussian = std::pair{g[0], g[1]};
        }
        c.classical_prior = cp;
    }

    if (j.contains("candidates")) {
        for (const auto& e : j.at("candidates")) {
            check_keys(e, {"name", "model", "nominals", "stage1_bounds", "hyper_bounds", "sigma_max"}, "candidates[].");
            CandidateConfig cc;
            cc.family = parse_model_family(get<std::string>(e, "model", "candidates[]."));
            cc.name = e.value("name", std::string(to_string(cc.family)));
            if (e.contains("nominals")) cc.nominals = doubles(e.at("nominals"), "candidates[].nominals");
            if (!e.contains("stage1_bounds"))
                throw DataError("config: candidate '" + cc.name + "' is missing 'stage1_bounds'");
            cc.stage1_bounds = intervals(e.at("stage1_bounds"), "candidates[].stage1_bounds");
            if (e.contains("hyper_bounds")) cc.hyper_bounds = intervals(e.at("hyper_bounds"), "candidates[].hyper_bounds");
            if (e.contains("sigma_max")) cc.sigma_max = get<double>(e, "sigma_max", "candidates[].");
            c.candidates.push_back(std::move(cc));
        }
    }

    if (j.contains("synthetic")) c.synthetic = parse_synthetic(j.at("synthetic"), c.family, c.nominals);
    try {
        c.sampler.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: sampler: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": malformed JSON: " + e.what());
    }
    return parse_run_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::optional<std::int64_t> cutoff;
    std::optional<std::string> model;
    std::optional<std::string> cov;
    std::optional<std::string> sampler;
    std::optional<std::size_t> samples;
    std::optional<std::string> posterior;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Context {
    RunConfig cfg;
    fs::path out;
    std::string fingerprint;
    std::ostream& stdout_;
    std::vector<fs::path> written;

    void wrote(const fs::path& p) { written.push_back(p); }
};

Context make_context(const Flags& f, std::ostream& out) {
    if (f.config.empty()) throw UsageError("--config is required");
    const fs::path cfg_path(f.config);
    const std::string raw = read_text(cfg_path);
    RunConfig cfg = load_run_config(cfg_path);
    std::ostringstream over;
    if (f.model) {
        const ModelFamily fam = parse_model_family(*f.model);
        if (fam != cfg.family) {
            cfg.family = fam;
            cfg.nominals.clear();
            cfg.hyper_bounds.reset();
        }
        over << "model=" << *f.model << ';';
    }
    if (f.cov) {
        cfg.cov = parse_covariance_case(*f.cov);
        over << "case=" << *f.cov << ';';
    }
    if (f.sampler) {
        cfg.stage2_sampler = parse_sampler_kind(*f.sampler);
        over << "sampler=" << *f.sampler << ';';
    }
    if (f.samples) {
        if (*f.samples == 0) throw UsageError("--samples must be >= 1");
        cfg.sampler.n_samples = *f.samples;
        over << "samples=" << *f.samples << ';';
    }
    if (f.seed) {
        cfg.sampler.seed = *f.seed;
        over << "seed=" << *f.seed << ';';
    }
    if (f.cutoff) {
        cfg.cutoff = *f.cutoff;
        over << "cutoff=" << *f.cutoff << ';';
    }
    return Context{std::move(cfg), fs::path(f.out), fingerprint(raw + "\n" + over.str()), out, {}};
}

json stamp(const Context& c, std::string_view command) {
    json j;
    j["command"] = std::string(command);
    j["version"] = std::string(version());
    j["config_fingerprint"] = c.fingerprint;
    j["seed"] = c.cfg.sampler.seed;
    j["model"] = std::string(to_string(c.cfg.family));
    return j;
}

json summarize(const SampleSet& s) {
    json j;
    j["labels"] = s.labels();
    j["size"] = s.size();
    const auto mean = s.mean();
    const auto cov = s.covariance();
    std::vector<double> sd(s.dim());
    for (std::size_t k = 0; k < s.dim(); ++k) sd[k] = s.size() > 1 ? std::sqrt(cov[k * s.dim() + k]) : 0.0;
    j["mean"] = mean;
    j["sd"] = sd;
    j["sampler"] = s.provenance.sampler;
    j["seed"] = s.provenance.seed;
    if (s.evidence) j["log_evidence"] = {{"value", s.evidence->log_evidence}, {"std_error", s.evidence->std_error}};
    return j;
}

void write_json(Context& c, const fs::path& p, const json& j) {
    atomic_write(p, j.dump(2) + "\n");
    c.wrote(p);
}

std::vector<Dataset> load_historical(const RunConfig& cfg) {
    if (cfg.historical.empty()) throw DataError("config: 'historical' lists no datasets");
    std::vector<Dataset> out;
    std::set<std::string> ids;
    for (const auto& p : cfg.historical) {
        out.push_back(load_dataset(p));
        if (!ids.insert(out.back().id).second) throw DataError("duplicate historical dataset id '" + out.back().id + "'");
    }
    return out;
}

void require_family(const Dataset& d, ModelFamily family) {
    if (d.meta.family != family)
        throw DataError("dataset '" + d.id + "' declares family '" + std::string(to_string(d.meta.family)) +
                        "' but the run uses '" + std::string(to_string(family)) + "'");
}

// Current unit truncated at the cutoff, and t_c.
std::pair<Dataset, double> load_current(const RunConfig& cfg) {
    if (!cfg.current) throw DataError("config: missing 'current'");
    Dataset d = load_dataset(*cfg.current);
    require_family(d, cfg.family);
    if (cfg.cutoff) {
        d = d.truncated(*cfg.cutoff);
        return {std::move(d), static_cast<double>(*cfg.cutoff)};
    }
    return {d, static_cast<double>(d.last_cycle())};
}

fs::path posterior_path(const Flags& f, const Context& c, const char* fallback) {
    return f.posterior ? fs::path(*f.posterior) : c.out / fallback;
}

PrognosisConfig prognosis_config(const Context& c, const Dataset& current, double tc) {
    PrognosisConfig p;
    if (c.cfg.threshold) p.threshold = *c.cfg.threshold;
    else if (current.meta.failure_threshold) p.threshold = *current.meta.failure_threshold;
    else if (current.meta.geometry) p.threshold = current.meta.geometry->af;
    else throw DataError("config: missing 'prognosis.threshold' and the current unit declares none");
    if (!c.cfg.horizon) throw DataError("config: missing 'prognosis.horizon'");
    p.current_cycle = tc;
    p.horizon = *c.cfg.horizon;
    p.quantiles = c.cfg.quantiles;
    p.interval_mass = c.cfg.interval_mass;
    p.include_observation_noise = c.cfg.include_observation_noise;
    p.scan_stride = c.cfg.scan_stride;
    p.seed = derive_seed(c.cfg.sampler.seed, "prognosis");
    p.threads = c.cfg.sampler.threads;
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("config: prognosis: ") + e.what());
    }
    return p;
}

SampleSet load_posterior(const fs::path& p, const DegradationModel& model) {
    SampleSet s = load_samples(p);
    if (s.dim() != model.dimension() + 1)
        throw DataError(p.string() + ": " + std::to_string(s.dim()) + " columns, model '" +
                        std::string(to_string(model.family())) + "' needs " + std::to_string(model.dimension() + 1));
    return s;
}

std::string cmd_synth(Context& c) {
    if (!c.cfg.synthetic) throw DataError("config: missing 'synthetic'");
    const auto fleet = generate_synthetic(*c.cfg.synthetic, c.cfg.sampler.seed);
    for (const auto& d : fleet.datasets) {
        const fs::path p = c.out / (d.id + ".csv");
        save_dataset(d, p);
        c.wrote(p);
    }
    json gt = stamp(c, "synth");
    gt["model"] = std::string(to_string(c.cfg.synthetic->family));
    gt["ground_truth"] = fleet.ground_truth_json();
    write_json(c, c.out / "ground_truth.json", gt);
    return "synth: " + std::to_string(fleet.datasets.size()) + " units";
}

std::string cmd_fit_historical(Context& c) {
    const auto& cfg = c.cfg;
    if (cfg.stage1_bounds.empty()) throw DataError("config: missing 'stage1_bounds'");
    const auto data = load_historical(cfg);
    for (const auto& d : data) require_family(d, cfg.family);
    HierarchyOptions opt;
    opt.stage2_sampler = cfg.stage2_sampler;
    opt.stage1_keep = cfg.stage1_keep;
    const auto res = fit_historical(data, cfg.model(), cfg.stage1_bounds, cfg.hyper_prior(),
                                    cfg.sigma_truncation(), cfg.sampler, opt);
    json j = stamp(c, "fit-historical");
    j["case"] = std::string(to_string(cfg.cov));
    j["sigma_max"] = cfg.sigma_truncation();
    j["stage2_sampler"] = std::string(to_string(cfg.stage2_sampler));
    j["hierarchy_fingerprint"] = res.config_fingerprint;
    json units = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const fs::path p = c.out / ("stage1_" + data[i].id + ".csv");
        save_samples(res.stage1[i], p);
        c.wrote(p);
        json u = summarize(res.stage1[i]);
        u["id"] = data[i].id;
        u["file"] = p.filename().string();
        units.push_back(u);
    }
    j["stage1"] = units;
    const fs::path hp = c.out / "hyper.csv";
    save_samples(res.hyper, hp);
    c.wrote(hp);
    j["hyper"] = summarize(res.hyper);
    j["hyper"]["file"] = hp.filename().string();
    write_json(c, c.out / "hierarchy.json", j);
    std::ostringstream os;
    os << "fit-historical: " << data.size() << " datasets, " << res.hyper.size() << " hyper samples";
    if (res.hyper.evidence) os << ", hyper log-evidence " << res.hyper.evidence->log_evidence;
    return os.str();
}

std::string cmd_fit_current(Context& c, const Flags& f) {
    const auto& cfg = c.cfg;
    const auto [current, tc] = load_current(cfg);
    const SampleSet hyper = load_samples(posterior_path(f, c, "hyper.csv"));
    const auto post = update_current(current, hyper, cfg.model(), cfg.sigma_truncation(),
                                     [&] {
                                         SamplerConfig s = cfg.sampler;
                                         s.seed = derive_seed(cfg.sampler.seed, "current:" + current.id);
                                         return s;
                                     }(),
                                     cfg.max_hyper);
    const fs::path p = c.out / "current_posterior.csv";
    save_samples(post, p);
    c.wrote(p);
    json j = stamp(c, "fit-current");
    j["current"] = current.id;
    j["current_cycle"] = tc;
    j["points"] = current.points.size();
    j["posterior"] = summarize(post);
    write_json(c, c.out / "current.json", j);
    return "fit-current: " + current.id + ", " + std::to_string(current.points.size()) + " points, " +
           std::to_string(post.size()) + " samples";
}

std::string cmd_compare_prior(Context& c) {
    const auto& cfg = c.cfg;
    if (!cfg.classical_prior) throw DataError("config: missing 'classical_prior'");
    const auto [current, tc] = load_current(cfg);
    SamplerConfig s = cfg.sampler;
    s.seed = derive_seed(cfg.sampler.seed, "classical:" + current.id);
    const auto post = classical_update(current, *cfg.classical_prior, cfg.model(), s);
    const fs::path p = c.out / "classical_posterior.csv";
    save_samples(post, p);
    c.wrote(p);
    json j = stamp(c, "compare-prior");
    j["current"] = current.id;
    j["current_cycle"] = tc;
    j["prior"] = {{"means", cfg.classical_prior->means}, {"sds", cfg.classical_prior->sds}};
    j["posterior"] = summarize(post);
    write_json(c, c.out / "classical.json", j);
    return "compare-prior: " + current.id + ", " + std::to_string(post.size()) + " samples";
}

std::string cmd_predict(Context& c, const Flags& f) {
    const auto& cfg = c.cfg;
    const auto [current, tc] = load_current(cfg);
    const DegradationModel model = bind_model(cfg.model(), current.meta);
    const SampleSet post = load_posterior(posterior_path(f, c, "current_posterior.csv"), model);
    const PrognosisConfig pc = prognosis_config(c, current, tc);
    std::vector<double> grid;
    const double start = model.family() == ModelFamily::BatterySingle ? std::max(1.0, tc) : tc;
    if (cfg.grid_step > 0) {
        for (double t = start; t <= pc.horizon; t += static_cast<double>(cfg.grid_step)) grid.push_back(t);
    } else {
        for (int k = 0; k <= 200; ++k) grid.push_back(start + (pc.horizon - start) * k / 200.0);
    }
    PrognosisResult r = predict_trajectory(post, model, grid, pc);
    json j = prognosis_to_json(r);
    j.update(stamp(c, "predict"));
    j["current"] = current.id;
    j["units"] = current.meta.units;
    write_json(c, c.out / "bands.json", j);
    save_bands_csv(r, c.out / "bands.csv");
    c.wrote(c.out / "bands.csv");
    return "predict: " + std::to_string(grid.size()) + " grid cycles from t_c=" + format_double(tc);
}

std::string cmd_rul(Context& c, const Flags& f) {
    const auto& cfg = c.cfg;
    const auto [current, tc] = load_current(cfg);
    const DegradationModel model = bind_model(cfg.model(), current.meta);
    const SampleSet post = load_posterior(posterior_path(f, c, "current_posterior.csv"), model);
    const PrognosisConfig pc = prognosis_config(c, current, tc);
    const PrognosisResult r = rul_distribution(post, model, pc);
    json j = prognosis_to_json(r);
    j.update(stamp(c, "rul"));
    j["current"] = current.id;
    write_json(c, c.out / "rul.json", j);
    save_rul_samples_csv(r, c.out / "rul_samples.csv");
    c.wrote(c.out / "rul_samples.csv");
    const auto& s = *r.summary;
    std::ostringstream os;
    os << "rul: " << current.id << " t_c=" << tc;
    if (!s.informative) os << ", no informative RUL within horizon";
    else
        os << ", mean " << s.mean << ", median " << s.median << ", " << cfg.interval_mass * 100 << "% interval ["
           << s.lower << ", " << s.upper << "], censored " << s.censored_fraction;
    return os.str();
}

std::string cmd_model_select(Context& c) {
    const auto& cfg = c.cfg;
    if (cfg.candidates.size() < 2) throw DataError("config: 'candidates' needs at least two entries");
    const auto data = load_historical(cfg);
    std::vector<ModelCandidate> cands;
    for (const auto& cc : cfg.candidates) {
        DegradationModel m(cc.family, cc.nominals);
        if (cc.stage1_bounds.size() != m.dimension() + 1)
            throw DataError("config: candidate '" + cc.name + "' needs " + std::to_string(m.dimension() + 1) +
                            " stage1_bounds");
        cands.push_back({cc.name, m, cc.stage1_bounds,
                         make_hyper_bounds(cc.family, CovarianceCase::Diagonal, cc.hyper_bounds),
                         cc.sigma_max ? *cc.sigma_max : default_sigma_truncation(cc.family)});
    }
    HierarchyOptions opt;
    opt.stage1_keep = cfg.stage1_keep;
    const auto ranking = model_select(data, cands, cfg.sampler, opt);
    json j = stamp(c, "model-select");
    json rows = json::array();
    std::string csv = "rank,name,family,log_evidence,std_error,status\n";
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        const auto& r = ranking[i];
        json row = {{"rank", i + 1}, {"name", r.name}, {"family", std::string(to_string(r.family))}};
        if (r.failed()) row["error"] = r.error;
        else row["log_evidence"] = {{"value", r.log_evidence->log_evidence}, {"std_error", r.log_evidence->std_error}};
        rows.push_back(row);
        csv += std::to_string(i + 1) + "," + r.name + "," + std::string(to_string(r.family)) + "," +
               (r.failed() ? "," : format_double(r.log_evidence->log_evidence) + "," +
                                       format_double(r.log_evidence->std_error)) +
               "," + (r.failed() ? "failed" : "ok") + "\n";
    }
    j["ranking"] = rows;
    write_json(c, c.out / "model_selection.json", j);
    atomic_write(c.out / "model_selection.csv", csv);
    c.wrote(c.out / "model_selection.csv");
    return "model-select: best '" + ranking.front().name + "' of " + std::to_string(ranking.size());
}

void report_error(std::ostream& err, const char* kind, const std::string& message, int code) {
    json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
    err << j.dump() << '\n';
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical Bayesian prognostics", "hbm"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);
    Flags f;
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"synth", "generate a synthetic fleet"},
        {"fit-historical", "stage-1 and stage-2 inference on historical datasets"},
        {"fit-current", "update the current unit with the historical mixture prior"},
        {"predict", "degradation trajectory bands"},
        {"rul", "remaining useful life distribution"},
        {"model-select", "rank candidate model families by log-evidence"},
        {"compare-prior", "current unit under a literature prior"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("--config", f.config, "run configuration (JSON)")->required();
        s->add_option("--seed", f.seed, "master seed");
        s->add_option("--out", f.out, "output directory")->capture_default_str();
        s->add_option("--cutoff", f.cutoff, "current cycle t_c; later observations are dropped");
        s->add_option("--model", f.model, "paris|batt-single|batt-double|batt-constant|linear");
        s->add_option("--case", f.cov, "diag|corr");
        s->add_option("--sampler", f.sampler, "stage-2 sampler: slice|tmcmc");
        s->add_option("--samples", f.samples, "samples per sampler run");
        s->add_option("--posterior", f.posterior, "sample file to read (hyper or current posterior)");
        subs.push_back(s);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << version() << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what(), 1);
        err << app.help();
        return 1;
    }

    std::string name;
    for (auto* s : subs)
        if (s->parsed()) name = s->get_name();

    try {
        Context c = make_context(f, out);
        std::string summary;
        if (name == "synth") summary = cmd_synth(c);
        else if (name == "fit-historical") summary = cmd_fit_historical(c);
        else if (name == "fit-current") summary = cmd_fit_current(c, f);
        else if (name == "predict") summary = cmd_predict(c, f);
        else if (name == "rul") summary = cmd_rul(c, f);
        else if (name == "model-select") summary = cmd_model_select(c);
        else if (name == "compare-prior") summary = cmd_compare_prior(c);
        out << summary << " [" << c.fingerprint << "]\n";
        for (const auto& p : c.written) out << p.string() << '\n';
        return 0;
    } catch (const UsageError& e) {
        report_error(err, "usage", e.what(), 1);
        return 1;
    } catch (const DataError& e) {
        report_error(err, "data", e.what(), 2);
        return 2;
    } catch (const NumericalError& e) {
        report_error(err, "numerical", e.what(), 3);
        return 3;
    } catch (const std::invalid_argument& e) {
        report_error(err, "data", e.what(), 2);
        return 2;
    } catch (const std::domain_error& e) {
        report_error(err, "numerical", e.what(), 3);
        return 3;
    } catch (const std::exception& e) {
        report_error(err, "numerical", e.what(), 3);
        return 3;
    }
}

}  // namespace hbm
