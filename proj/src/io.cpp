#include "hbm/io.hpp"

#include "hbm/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef HBM_VERSION
#define HBM_VERSION "0.0.0"
#endif

namespace hbm {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            if (start < text.size()) out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

json number(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}

double number_from(const json& j, std::string_view what) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_double(j.get<std::string>(), what);
    throw DataError("expected a number for '" + std::string(what) + "'");
}

const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw DataError(where + ": missing metadata field '" + key + "'");
    return j.at(key);
}

double number_field(const json& j, const char* key, const std::string& where) {
    return number_from(field(j, key, where), where + ": " + key);
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": malformed JSON: " + e.what());
    }
}

std::vector<double> numbers(const json& j, std::string_view what) {
    if (!j.is_array()) throw DataError("expected an array for '" + std::string(what) + "'");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number_from(v, what));
    return out;
}

json numbers_json(std::span<const double> xs) {
    json a = json::array();
    for (double x : xs) a.push_back(number(x));
    return a;
}

}  // namespace

std::string_view version() { return HBM_VERSION; }

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view what) {
    text = trim(text);
    if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double x = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw DataError("cannot parse " + std::string(what) + " '" + std::string(text) + "' as a number");
    return x;
}

void atomic_write(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path metadata_path(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".meta.json");
    return p;
}

json metadata_to_json(const std::string& id, const UnitMetadata& meta) {
    json j;
    j["id"] = id;
    j["family"] = std::string(to_string(meta.family));
    j["units"] = meta.units;
    if (!meta.nominals.empty()) j["nominals"] = numbers_json(meta.nominals);
    if (meta.geometry)
        j["geometry"] = {{"a0", meta.geometry->a0}, {"n0", meta.geometry->n0}, {"a_f", meta.geometry->af}};
    if (meta.loading) {
        const auto& l = *meta.loading;
        if (l.mode == LoadingSpec::Mode::Constant)
            j["loading"] = {{"mode", "constant"}, {"delta_sigma", l.delta_sigma}};
        else
            j["loading"] = {{"mode", "two-block"},     {"delta_sigma1", l.delta_sigma1},
                            {"cycles1", l.cycles1},    {"delta_sigma2", l.delta_sigma2},
                            {"cycles2", l.cycles2}};
    }
    if (meta.failure_threshold) j["failure_threshold"] = *meta.failure_threshold;
    if (!meta.note.empty()) j["note"] = meta.note;
    return j;
}

UnitMetadata metadata_from_json(const json& j, const std::string& where) {
    UnitMetadata meta;
    const json& fam = field(j, "family", where);
    if (!fam.is_string()) throw DataError(where + ": 'family' must be a string");
    meta.family = parse_model_family(fam.get<std::string>());
    const json& units = field(j, "units", where);
    if (!units.is_string()) throw DataError(where + ": 'units' must be a string");
    meta.units = units.get<std::string>();
    if (j.contains("nominals")) {
        meta.nominals = numbers(j.at("nominals"), "nominals");
        if (meta.nominals.size() != theta_dimension(meta.family))
            throw DataError(where + ": 'nominals' has the wrong length for family '" +
                            std::string(to_string(meta.family)) + "'");
    }
    if (j.contains("failure_threshold"))
        meta.failure_threshold = number_field(j, "failure_threshold", where);
    if (j.contains("note")) meta.note = j.at("note").get<std::string>();

    if (meta.family == ModelFamily::Paris) {
        const json& g = field(j, "geometry", where);
        CrackGeometry geo{number_field(g, "a0", where + ": geometry"),
                          number_field(g, "n0", where + ": geometry"),
                          number_field(g, "a_f", where + ": geometry")};
        try {
            geo.validate();
        } catch (const std::invalid_argument& e) {
            throw DataError(where + ": " + e.what());
        }
        meta.geometry = geo;
        const json& l = field(j, "loading", where);
        const json& mode = field(l, "mode", where + ": loading");
        LoadingSpec spec;
        const std::string lw = where + ": loading";
        if (mode == "constant") {
            spec = LoadingSpec::constant(number_field(l, "delta_sigma", lw));
        } else if (mode == "two-block") {
            spec = LoadingSpec::two_block(number_field(l, "delta_sigma1", lw), number_field(l, "cycles1", lw),
                                          number_field(l, "delta_sigma2", lw), number_field(l, "cycles2", lw));
        } else {
            throw DataError(lw + ": unknown mode (expected constant|two-block)");
        }
        try {
            spec.validate();
        } catch (const std::invalid_argument& e) {
            throw DataError(lw + ": " + e.what());
        }
        meta.loading = spec;
    }
    return meta;
}

Dataset load_dataset(const fs::path& csv) {
    const std::string where = csv.string();
    const std::string text = read_text(csv);
    const auto lines = lines_of(text);
    Dataset ds;
    std::size_t line_no = 0;
    bool header = false;
    for (auto raw : lines) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto cells = split(line);
        if (!header) {
            if (cells.size() != 2 || cells[0] != "cycle" || cells[1] != "value")
                throw DataError(where + ":" + std::to_string(line_no) + ": expected header 'cycle,value'");
            header = true;
            continue;
        }
        const std::string at = where + ":" + std::to_string(line_no);
        if (cells.size() != 2) throw DataError(at + ": expected 2 columns, got " + std::to_string(cells.size()));
        Observation o;
        const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), o.cycle);
        if (res.ec != std::errc() || res.ptr != cells[0].data() + cells[0].size())
            throw DataError(at + ": cycle '" + std::string(cells[0]) + "' is not an integer");
        o.value = parse_double(cells[1], "value at " + at);
        if (o.cycle < 0) throw DataError(at + ": negative cycle");
        if (!ds.points.empty() && o.cycle <= ds.points.back().cycle)
            throw DataError(at + ": cycle " + std::to_string(o.cycle) +
                            (o.cycle == ds.points.back().cycle ? " repeated" : " decreases"));
        if (!std::isfinite(o.value) || !(o.value > 0.0))
            throw DataError(at + ": value must be finite and positive");
        ds.points.push_back(o);
    }
    if (!header) throw DataError(where + ": empty file (expected header 'cycle,value')");

    const fs::path meta_path = metadata_path(csv);
    if (!fs::exists(meta_path)) throw DataError(where + ": metadata sidecar " + meta_path.string() + " not found");
    const json meta = read_json(meta_path);
    ds.meta = metadata_from_json(meta, meta_path.string());
    ds.id = meta.contains("id") ? meta.at("id").get<std::string>() : csv.stem().string();
    ds.validate();
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& csv) {
    dataset.validate();
    std::string out = "cycle,value\n";
    for (const auto& p : dataset.points) out += std::to_string(p.cycle) + "," + format_double(p.value) + "\n";
    atomic_write(csv, out);
    atomic_write(metadata_path(csv), metadata_to_json(dataset.id, dataset.meta).dump(2) + "\n");
}

fs::path samples_sidecar(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

void save_samples(const SampleSet& samples, const fs::path& csv) {
    std::string out;
    for (std::size_t j = 0; j < samples.dim(); ++j) out += (j ? "," : "") + samples.labels()[j];
    out += "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto r = samples.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            out += format_double(r[j]);
        }
        out += '\n';
    }
    json side;
    side["version"] = std::string(version());
    side["labels"] = samples.labels();
    side["rows"] = samples.size();
    side["provenance"] = {{"target", samples.provenance.target},
                          {"sampler", samples.provenance.sampler},
                          {"config_hash", samples.provenance.config_hash},
                          {"seed", samples.provenance.seed}};
    if (samples.evidence)
        side["evidence"] = {{"log_evidence", number(samples.evidence->log_evidence)},
                            {"std_error", number(samples.evidence->std_error)}};
    atomic_write(csv, out);
    atomic_write(samples_sidecar(csv), side.dump(2) + "\n");
}

SampleSet load_samples(const fs::path& csv) {
    const std::string where = csv.string();
    const std::string text = read_text(csv);
    const auto lines = lines_of(text);
    std::vector<std::string> labels;
    std::vector<double> data;
    std::size_t line_no = 0;
    for (auto raw : lines) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto cells = split(line);
        if (labels.empty()) {
            for (auto c : cells) labels.emplace_back(c);
            continue;
        }
        if (cells.size() != labels.size())
            throw DataError(where + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(labels.size()) + " columns");
        for (auto c : cells) data.push_back(parse_double(c, "sample at " + where + ":" + std::to_string(line_no)));
    }
    if (labels.empty()) throw DataError(where + ": empty sample file");
    SampleSet s(labels, std::move(data));
    const fs::path side_path = samples_sidecar(csv);
    if (fs::exists(side_path)) {
        const json side = read_json(side_path);
        if (side.contains("provenance")) {
            const auto& p = side.at("provenance");
            s.provenance.target = p.value("target", "");
            s.provenance.sampler = p.value("sampler", "");
            s.provenance.config_hash = p.value("config_hash", "");
            s.provenance.seed = p.value("seed", std::uint64_t{0});
        }
        if (side.contains("evidence")) {
            const auto& e = side.at("evidence");
            s.evidence = Evidence{number_from(e.at("log_evidence"), "log_evidence"),
                                  number_from(e.at("std_error"), "std_error")};
        }
    }
    s.validate();
    return s;
}

json prognosis_to_json(const PrognosisResult& r) {
    json j;
    j["version"] = std::string(version());
    j["config_fingerprint"] = r.config_fingerprint;
    j["seed"] = r.seed;
    j["threshold"] = number(r.threshold);
    j["current_cycle"] = number(r.current_cycle);
    j["horizon"] = number(r.horizon);
    if (!r.grid.empty()) {
        j["grid"] = numbers_json(r.grid);
        j["quantile_levels"] = numbers_json(r.quantile_levels);
        json bands = json::array();
        for (const auto& b : r.bands) bands.push_back(numbers_json(b));
        j["bands"] = bands;
    }
    if (!r.eol.empty()) {
        j["eol"] = numbers_json(r.eol);
        j["rul"] = numbers_json(r.rul);
        j["censored"] = r.censored;
    }
    if (r.summary) {
        const auto& s = *r.summary;
        j["summary"] = {{"mean", number(s.mean)},
                        {"median", number(s.median)},
                        {"lower", number(s.lower)},
                        {"upper", number(s.upper)},
                        {"censored_fraction", number(s.censored_fraction)},
                        {"informative", s.informative}};
        if (!s.informative) j["summary"]["message"] = "no informative RUL within horizon";
    }
    return j;
}

PrognosisResult prognosis_from_json(const json& j) {
    PrognosisResult r;
    r.config_fingerprint = j.value("config_fingerprint", "");
    r.seed = j.value("seed", std::uint64_t{0});
    r.threshold = number_from(j.at("threshold"), "threshold");
    r.current_cycle = number_from(j.at("current_cycle"), "current_cycle");
    r.horizon = number_from(j.at("horizon"), "horizon");
    if (j.contains("grid")) {
        r.grid = numbers(j.at("grid"), "grid");
        r.quantile_levels = numbers(j.at("quantile_levels"), "quantile_levels");
        for (const auto& b : j.at("bands")) r.bands.push_back(numbers(b, "bands"));
    }
    if (j.contains("eol")) {
        r.eol = numbers(j.at("eol"), "eol");
        r.rul = numbers(j.at("rul"), "rul");
        r.censored = j.at("censored").get<std::vector<std::uint8_t>>();
    }
    if (j.contains("summary")) {
        const auto& s = j.at("summary");
        r.summary = RulSummary{number_from(s.at("mean"), "mean"),
                               number_from(s.at("median"), "median"),
                               number_from(s.at("lower"), "lower"),
                               number_from(s.at("upper"), "upper"),
                               number_from(s.at("censored_fraction"), "censored_fraction"),
                               s.at("informative").get<bool>()};
    }
    return r;
}

void save_prognosis(const PrognosisResult& result, const fs::path& path) {
    atomic_write(path, prognosis_to_json(result).dump(2) + "\n");
}

PrognosisResult load_prognosis(const fs::path& path) {
    try {
        return prognosis_from_json(read_json(path));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_bands_csv(const PrognosisResult& r, const fs::path& csv) {
    std::string out = "cycle";
    for (double q : r.quantile_levels) out += ",q" + format_double(q);
    out += '\n';
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
        out += format_double(r.grid[g]);
        for (const auto& b : r.bands) out += "," + format_double(b[g]);
        out += '\n';
    }
    atomic_write(csv, out);
}

void save_rul_samples_csv(const PrognosisResult& r, const fs::path& csv) {
    std::string out = "eol,rul,censored\n";
    for (std::size_t i = 0; i < r.eol.size(); ++i)
        out += format_double(r.eol[i]) + "," + format_double(r.rul[i]) + "," + std::to_string(r.censored[i]) + "\n";
    atomic_write(csv, out);
}

}  // namespace hbm
