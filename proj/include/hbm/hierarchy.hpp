#pragma once

#include "hbm/dataset.hpp"
#include "hbm/densities.hpp"
#include "hbm/degradation.hpp"
#include "hbm/samplers.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbm {

enum class SamplerKind { Slice, Tmcmc };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);  // "slice" | "tmcmc"

/// Per-dataset posterior under a uniform prior over `bounds` ([theta..., sigma]).
/// With TMCMC the result carries the evidence of the uniform-prior model.
SampleSet stage1_infer(const Dataset& dataset, const DegradationModel& model,
                       std::span<const Interval> bounds, const SamplerConfig& config,
                       SamplerKind sampler = SamplerKind::Slice);

/// Hyper-posterior samples from stage-1 draws. The covariance case is
/// carried by bounds.layout. With TMCMC the result carries the evidence of
/// the hyper-level target.
SampleSet stage2_infer(std::span<const SampleSet> stage1, const HyperPriorBounds& bounds,
                       double sigma_max, const SamplerConfig& config,
                       SamplerKind sampler = SamplerKind::Slice);

struct HierarchyOptions {
    SamplerKind stage2_sampler = SamplerKind::Slice;
    /// Stage-1 draws kept per dataset for the hyper target (0: all).
    std::size_t stage1_keep = 0;
    /// Run stage 1 with TMCMC as well and assemble the full log-evidence of
    /// the historical data. Forces TMCMC in stage 2.
    bool evidence = false;
};

struct HierarchyResult {
    std::vector<SampleSet> stage1;
    SampleSet hyper;
    /// log p(D_h | model) when HierarchyOptions::evidence was set.
    std::optional<Evidence> log_evidence;
    std::string config_fingerprint;
};

/// Two-step historical fit: stage 1 for every dataset (in parallel, seeded
/// by dataset id), then stage 2 over the retained draws.
HierarchyResult fit_historical(std::span<const Dataset> historical, const DegradationModel& model,
                               std::span<const Interval> stage1_bounds,
                               const HyperPriorBounds& hyper_bounds, double sigma_max,
                               const SamplerConfig& config, const HierarchyOptions& options = {});

/// Posterior of the current unit's parameters under the historically
/// informed mixture prior. With no observations, draws from the mixture
/// prior by ancestral sampling. `max_hyper` > 0 subsamples the hyper set.
SampleSet update_current(const Dataset& current, const SampleSet& hyper,
                         const DegradationModel& model, double sigma_max,
                         const SamplerConfig& config, std::size_t max_hyper = 0);

/// Independent Gaussian priors on the physical parameters (theta_j * nominal_j)
/// and a prior on sigma: uniform over `sigma_range`, or a Gaussian
/// truncated to it when `sigma_gaussian` is set.
struct ClassicalPrior {
    std::vector<double> means;
    std::vector<double> sds;
    Interval sigma_range{0.0, kCrackSigmaTruncation};
    std::optional<std::pair<double, double>> sigma_gaussian;  // (mean, sd)

    void validate(std::size_t dim) const;
};

/// Single-level Bayesian posterior for the current unit, no hierarchy.
SampleSet classical_update(const Dataset& current, const ClassicalPrior& prior,
                           const DegradationModel& model, const SamplerConfig& config);

struct ModelCandidate {
    std::string name;
    DegradationModel model;
    std::vector<Interval> stage1_bounds;
    HyperPriorBounds hyper_bounds;
    double sigma_max = kBatterySigmaTruncation;
};

struct ModelRanking {
    std::string name;
    ModelFamily family = ModelFamily::Paris;
    std::optional<Evidence> log_evidence;
    std::string error;  // non-empty when the candidate failed

    bool failed() const { return !error.empty(); }
};

/// Runs the evidence pipeline for every candidate and ranks by the
/// log-evidence of the historical data, highest first; failed candidates
/// are listed last.
std::vector<ModelRanking> model_select(std::span<const Dataset> historical,
                                       std::span<const ModelCandidate> candidates,
                                       const SamplerConfig& config,
                                       const HierarchyOptions& options = {});

}  // namespace hbm
