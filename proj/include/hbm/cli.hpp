#pragma once

#include "hbm/densities.hpp"
#include "hbm/hierarchy.hpp"
#include "hbm/io.hpp"
#include "hbm/prognostics.hpp"
#include "hbm/samplers.hpp"
#include "hbm/synthetic.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hbm {

struct CandidateConfig {
    std::string name;
    ModelFamily family = ModelFamily::BatteryDouble;
    std::vector<double> nominals;
    std::vector<Interval> stage1_bounds;
    std::optional<std::vector<Interval>> hyper_bounds;
    std::optional<double> sigma_max;
};

/// Everything a CLI run needs. Paths are resolved against the directory
/// of the config file.
struct RunConfig {
    ModelFamily family = ModelFamily::Paris;
    std::vector<double> nominals;
    CovarianceCase cov = CovarianceCase::Diagonal;
    std::vector<Interval> stage1_bounds;
    std::optional<std::vector<Interval>> hyper_bounds;
    std::optional<double> sigma_max;

    SamplerConfig sampler;
    SamplerKind stage2_sampler = SamplerKind::Slice;
    std::size_t stage1_keep = 0;
    std::size_t max_hyper = 0;

    std::vector<fs::path> historical;
    std::optional<fs::path> current;
    std::optional<std::int64_t> cutoff;

    std::optional<double> threshold;
    std::optional<double> horizon;
    std::vector<double> quantiles{0.025, 0.5, 0.975};
    double interval_mass = 0.95;
    bool include_observation_noise = false;
    std::int64_t grid_step = 0;  // 0: 200 grid points between t_c and the horizon
    std::int64_t scan_stride = 8;

    std::optional<ClassicalPrior> classical_prior;
    std::vector<CandidateConfig> candidates;
    std::optional<SyntheticSpec> synthetic;

    DegradationModel model() const;
    double sigma_truncation() const;
    HyperPriorBounds hyper_prior() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);

/// Entry point of the `hbm` executable. Exit codes: 0 success, 1 usage,
/// 2 data error, 3 numerical failure. Errors are written to `err` as a
/// one-line JSON record.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hbm
