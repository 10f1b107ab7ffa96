#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbm {

struct Provenance {
    std::string target;       // e.g. "stage1:T3", "hyper", "current:T7"
    std::string sampler;      // "slice", "tmcmc", "ancestral"
    std::string config_hash;
    std::uint64_t seed = 0;
};

struct Evidence {
    double log_evidence = 0.0;
    double std_error = 0.0;
};

/// Equally weighted draws of a labelled parameter vector, stored row-major.
/// The currency passed between inference stages.
class SampleSet {
public:
    SampleSet() = default;
    explicit SampleSet(std::vector<std::string> labels);
    SampleSet(std::vector<std::string> labels, std::vector<double> row_major);

    std::size_t size() const { return dim() == 0 ? 0 : data_.size() / dim(); }
    std::size_t dim() const { return labels_.size(); }
    bool empty() const { return size() == 0; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * dim(), dim());
    }
    void push_back(std::span<const double> row);
    void reserve(std::size_t rows) { data_.reserve(rows * dim()); }

    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<double>& data() const { return data_; }

    std::vector<double> column(std::size_t j) const;
    std::vector<double> mean() const;
    /// Sample covariance (n - 1 denominator), row-major dim x dim.
    std::vector<double> covariance() const;

    /// Every k-th row so that at most `max_rows` remain; 0 keeps everything.
    SampleSet thinned(std::size_t max_rows) const;

    /// Throws DataError when a row is non-finite or the shape is inconsistent.
    void validate() const;

    Provenance provenance;
    std::optional<Evidence> evidence;

private:
    std::vector<std::string> labels_;
    std::vector<double> data_;
};

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double level);

}  // namespace hbm
