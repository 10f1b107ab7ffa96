#pragma once

#include "hbm/densities.hpp"
#include "hbm/random.hpp"
#include "hbm/sample_set.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hbm {

using LogDensity = std::function<double(std::span<const double>)>;

/// An unnormalized log-density with per-dimension support. The callable
/// must return -inf (never NaN) outside the support.
struct TargetSpec {
    std::string id;
    std::vector<std::string> labels;
    LogDensity log_target;
    std::vector<Interval> support;  // infinite ends allowed

    std::size_t dimension() const { return labels.size(); }
    /// Support that is unbounded in every direction.
    static std::vector<Interval> unbounded(std::size_t dim);
};

struct SamplerConfig {
    std::size_t n_samples = 5000;
    double burn_in = 0.2;  // fraction of the whole chain discarded
    std::size_t thin = 1;
    std::uint64_t seed = 0;

    // Slice sampling. Empty widths: range/10 on bounded dimensions, 1.0 otherwise.
    std::vector<double> slice_widths;
    std::size_t max_step_out = 1000;
    std::size_t max_shrink = 200;
    /// Re-estimate the update directions from the chain's principal axes
    /// during burn-in. Fixed after burn-in.
    bool slice_adapt = true;

    // TMCMC. Stage size 0 means n_samples particles.
    std::size_t tmcmc_stage_size = 0;
    double tmcmc_target_cov = 1.0;
    double tmcmc_proposal_scale = 0.2;
    std::size_t tmcmc_chain_length = 3;

    std::size_t threads = 0;  // 0: hardware concurrency

    void validate() const;
    /// Stable text form of every setting that influences the draws.
    std::string canonical() const;
};

/// Coordinate-wise slice sampling with stepping-out and shrinkage.
/// Deterministic given config.seed. Throws std::invalid_argument when the
/// initial point has no finite density and NumericalError when stepping
/// out or shrinkage exceeds its budget.
SampleSet slice_sample(const TargetSpec& target, std::span<const double> init,
                       const SamplerConfig& config);

/// Prior-sampler plus log-likelihood pair for tempered sampling.
struct TemperingProblem {
    std::string id;
    std::vector<std::string> labels;
    std::function<std::vector<double>(Rng&)> sample_prior;
    LogDensity log_prior;
    LogDensity log_likelihood;
};

struct TmcmcTrace {
    std::vector<double> betas;
    std::vector<double> acceptance;
};

/// Transitional MCMC: tempers prior * likelihood^beta from beta = 0 to 1,
/// choosing each increment so the incremental weights hit the configured
/// coefficient of variation, then resamples and moves particles with
/// Gaussian random-walk Metropolis steps. Attaches the log-evidence
/// estimate (sum of log mean incremental weights) to the result.
SampleSet tmcmc(const TemperingProblem& problem, const SamplerConfig& config,
                TmcmcTrace* trace = nullptr);

}  // namespace hbm
