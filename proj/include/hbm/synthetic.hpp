#pragma once

#include "hbm/dataset.hpp"
#include "hbm/densities.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hbm {

/// Generative recipe for a fleet: psi* -> theta_i, sigma_i -> noisy series.
struct SyntheticSpec {
    ModelFamily family = ModelFamily::Paris;
    std::vector<double> nominals;  // empty: family defaults
    HyperParameters truth;
    double sigma_max = kCrackSigmaTruncation;
    std::size_t units = 6;

    std::int64_t first_cycle = 0;
    std::int64_t cycle_step = 1000;
    std::size_t max_points = 30;
    /// Stop a series at the first cycle whose latent value crosses `threshold`.
    bool run_to_failure = false;
    std::optional<double> threshold;
    /// Fixed noise scale for every unit instead of the sigma_i draw (0: noiseless).
    std::optional<double> noise_sigma;

    CrackGeometry geometry{9.0, 0.0, 60.0};
    LoadingSpec loading = LoadingSpec::constant(78.0);

    std::string id_prefix = "U";
    std::string units_label;  // empty: "mm" for crack, "Ahr" otherwise

    void validate() const;
};

struct SyntheticFleet {
    std::vector<Dataset> datasets;
    std::vector<std::vector<double>> truth;  // [theta..., sigma] per unit
    std::vector<double> true_eol;             // +inf when no crossing is found
    HyperParameters psi;

    nlohmann::json ground_truth_json() const;
};

/// Draws the fleet. Inadmissible parameter draws (divergent or non-positive
/// trajectories, fewer than 3 points) are redrawn up to a bounded number
/// of times, then DataError.
SyntheticFleet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace hbm
