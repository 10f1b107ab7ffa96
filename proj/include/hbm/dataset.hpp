#pragma once

#include "hbm/degradation.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hbm {

struct Observation {
    std::int64_t cycle = 0;
    double value = 0.0;
};

/// Per-unit metadata that travels with a measurement series.
struct UnitMetadata {
    ModelFamily family = ModelFamily::Paris;
    std::string units;                       // "mm" or "Ahr"; echoed, never converted
    std::vector<double> nominals;            // empty: family defaults
    std::optional<CrackGeometry> geometry;   // crack units
    std::optional<LoadingSpec> loading;      // crack units
    std::optional<double> failure_threshold; // capacity floor for batteries
    std::string note;                        // discharge protocol and similar
};

struct Dataset {
    std::string id;
    std::vector<Observation> points;
    UnitMetadata meta;

    /// Throws DataError unless cycles are strictly increasing and values are
    /// finite and positive.
    void validate() const;

    /// Observations with cycle <= cutoff.
    Dataset truncated(std::int64_t cutoff) const;

    std::int64_t last_cycle() const { return points.empty() ? 0 : points.back().cycle; }
};

/// `model` bound to the unit's crack geometry and loading when the family
/// needs them. Throws DataError when required metadata is missing.
DegradationModel bind_model(const DegradationModel& model, const UnitMetadata& meta);

}  // namespace hbm
