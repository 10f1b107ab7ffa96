#pragma once

#include "hbm/degradation.hpp"
#include "hbm/sample_set.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbm {

struct PrognosisConfig {
    double threshold = 0.0;      // a_f (mm) for growing families, capacity floor otherwise
    double current_cycle = 0.0;  // t_c
    double horizon = 0.0;        // last cycle searched
    std::vector<double> quantiles{0.025, 0.5, 0.975};
    double interval_mass = 0.95;
    bool include_observation_noise = false;
    std::int64_t scan_stride = 8;  // integer-grid scan step for non-crack families
    std::uint64_t seed = 0;        // observation-noise draws
    std::size_t threads = 1;

    void validate() const;
};

struct EolSample {
    double cycle = 0.0;  // horizon when censored
    bool censored = false;
};

struct RulSummary {
    double mean = 0.0;
    double median = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double censored_fraction = 0.0;
    bool informative = true;  // false when every sample is censored
};

struct PrognosisResult {
    double threshold = 0.0;
    double current_cycle = 0.0;
    double horizon = 0.0;

    std::vector<double> grid;
    std::vector<double> quantile_levels;
    std::vector<std::vector<double>> bands;  // bands[level][grid index]; +inf past divergence

    std::vector<double> eol;
    std::vector<double> rul;
    std::vector<std::uint8_t> censored;
    std::optional<RulSummary> summary;

    std::string config_fingerprint;
    std::uint64_t seed = 0;
};

/// Empirical quantile bands of g(theta, t) over the sample set. A crack
/// sample that diverges before a grid cycle contributes +inf there.
PrognosisResult predict_trajectory(const SampleSet& samples, const DegradationModel& model,
                                   std::span<const double> grid, const PrognosisConfig& config);

/// First threshold crossing after t_c for one [theta..., sigma] point.
/// Crack: algebraic inverse of the closed form. Other families: integer
/// scan with stride then bisection. Already crossed at t_c gives t_c.
EolSample end_of_life(std::span<const double> point, const DegradationModel& model,
                      const PrognosisConfig& config);

/// EOL and RUL = EOL - t_c per sample, plus the summary.
PrognosisResult rul_distribution(const SampleSet& samples, const DegradationModel& model,
                                 const PrognosisConfig& config);

}  // namespace hbm
