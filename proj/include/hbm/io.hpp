#pragma once

#include "hbm/dataset.hpp"
#include "hbm/prognostics.hpp"
#include "hbm/sample_set.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace hbm {

namespace fs = std::filesystem;

std::string_view version();

/// Shortest text that parses back to the same double; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double x);
/// Inverse of format_double. Throws DataError naming `what` on bad input.
double parse_double(std::string_view text, std::string_view what = "value");

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write(const fs::path& path, std::string_view content);
std::string read_text(const fs::path& path);

/// Sidecar of a series file: data/T1.csv -> data/T1.meta.json.
fs::path metadata_path(const fs::path& csv);

/// CSV with header `cycle,value` plus its metadata sidecar.
///
/// Sidecar keys: "family" and "units" are required; "id" (default: file
/// stem), "nominals", "failure_threshold" and "note" are optional. Crack
/// units also need "geometry" {"a0", "n0", "a_f"} and "loading", either
/// {"mode": "constant", "delta_sigma"} or {"mode": "two-block",
/// "delta_sigma1", "cycles1", "delta_sigma2", "cycles2"}.
Dataset load_dataset(const fs::path& csv);
void save_dataset(const Dataset& dataset, const fs::path& csv);

nlohmann::json metadata_to_json(const std::string& id, const UnitMetadata& meta);
UnitMetadata metadata_from_json(const nlohmann::json& j, const std::string& where);

/// Draws as CSV (header = labels), provenance and evidence in the sidecar
/// `<stem>.json`.
void save_samples(const SampleSet& samples, const fs::path& csv);
SampleSet load_samples(const fs::path& csv);
fs::path samples_sidecar(const fs::path& csv);

nlohmann::json prognosis_to_json(const PrognosisResult& result);
PrognosisResult prognosis_from_json(const nlohmann::json& j);
void save_prognosis(const PrognosisResult& result, const fs::path& json);
PrognosisResult load_prognosis(const fs::path& json);
/// Plot-ready table: cycle, then one column per quantile level.
void save_bands_csv(const PrognosisResult& result, const fs::path& csv);
/// Per-sample EOL, RUL and censoring flag.
void save_rul_samples_csv(const PrognosisResult& result, const fs::path& csv);

}  // namespace hbm
