#include "hbm/dataset.hpp"

#include "hbm/error.hpp"

#include <cmath>

namespace hbm {

void Dataset::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.cycle < 0)
            throw DataError("dataset '" + id + "': negative cycle at row " + std::to_string(i + 1));
        if (i > 0 && p.cycle <= points[i - 1].cycle)
            throw DataError("dataset '" + id + "': cycles not strictly increasing at row " +
                            std::to_string(i + 1));
        if (!std::isfinite(p.value) || !(p.value > 0.0))
            throw DataError("dataset '" + id + "': non-positive or non-finite value at row " +
                            std::to_string(i + 1));
    }
}

Dataset Dataset::truncated(std::int64_t cutoff) const {
    Dataset out = *this;
    std::erase_if(out.points, [cutoff](const Observation& o) { return o.cycle > cutoff; });
    return out;
}

DegradationModel bind_model(const DegradationModel& model, const UnitMetadata& meta) {
    if (model.family() != ModelFamily::Paris) return model;
    if (!meta.geometry) throw DataError("crack dataset is missing its geometry metadata");
    if (!meta.loading) throw DataError("crack dataset is missing its loading metadata");
    return model.bind(*meta.geometry, *meta.loading);
}

}  // namespace hbm
