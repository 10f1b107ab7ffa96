#include "hbm/sample_set.hpp"

#include "hbm/error.hpp"

#include <cmath>
#include <stdexcept>

namespace hbm {

SampleSet::SampleSet(std::vector<std::string> labels) : labels_(std::move(labels)) {}

SampleSet::SampleSet(std::vector<std::string> labels, std::vector<double> row_major)
    : labels_(std::move(labels)), data_(std::move(row_major)) {
    if (labels_.empty() ? !data_.empty() : data_.size() % labels_.size() != 0)
        throw std::invalid_argument("sample data does not fill whole rows");
}

void SampleSet::push_back(std::span<const double> row) {
    if (row.size() != dim()) throw std::invalid_argument("sample row has the wrong dimension");
    data_.insert(data_.end(), row.begin(), row.end());
}

std::vector<double> SampleSet::column(std::size_t j) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = data_[i * dim() + j];
    return out;
}

std::vector<double> SampleSet::mean() const {
    std::vector<double> m(dim(), 0.0);
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < dim(); ++j) m[j] += data_[i * dim() + j];
    for (auto& v : m) v /= static_cast<double>(size());
    return m;
}

std::vector<double> SampleSet::covariance() const {
    const std::size_t d = dim();
    const auto m = mean();
    std::vector<double> c(d * d, 0.0);
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                c[a * d + b] += (data_[i * d + a] - m[a]) * (data_[i * d + b] - m[b]);
    const double denom = size() > 1 ? static_cast<double>(size() - 1) : 1.0;
    for (auto& v : c) v /= denom;
    return c;
}

SampleSet SampleSet::thinned(std::size_t max_rows) const {
    if (max_rows == 0 || size() <= max_rows) return *this;
    const std::size_t stride = (size() + max_rows - 1) / max_rows;
    SampleSet out(labels_);
    out.provenance = provenance;
    out.evidence = evidence;
    for (std::size_t i = 0; i < size(); i += stride) out.push_back(row(i));
    return out;
}

void SampleSet::validate() const {
    if (labels_.empty()) throw DataError("sample set has no labels");
    if (data_.size() % labels_.size() != 0) throw DataError("sample set has a ragged last row");
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (!std::isfinite(data_[i]))
            throw DataError("sample set has a non-finite value at row " +
                            std::to_string(i / dim() + 1));
}

double quantile_sorted(std::span<const double> sorted, double level) {
    if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
    if (!(level >= 0.0 && level <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
    const double pos = level * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace hbm
