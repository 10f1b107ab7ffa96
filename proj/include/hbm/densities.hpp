#pragma once

#include "hbm/dataset.hpp"
#include "hbm/degradation.hpp"
#include "hbm/random.hpp"
#include "hbm/sample_set.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(xs))). Empty input or all -inf gives -inf.
double logsumexp(std::span<const double> xs);

/// Streaming log-sum-exp accumulator; one exp per element.
class LogSumExp {
public:
    void add(double x) {
        if (x == kNegInf) return;
        if (x <= max_) {
            sum_ += std::exp(x - max_);
        } else {
            sum_ = sum_ * std::exp(max_ - x) + 1.0;
            max_ = x;
        }
    }
    double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(sum_); }

private:
    double max_ = kNegInf;
    double sum_ = 0.0;
};

double normal_cdf(double x);
/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);
/// log P(lower < Z < upper) for a standard normal Z.
double log_normal_probability(double lower, double upper);

/// Lognormal measurement density whose mean equals `pred`:
/// zeta^2 = ln(1 + (sigma/pred)^2), eta = ln(pred) - zeta^2/2.
/// Throws std::domain_error for non-positive y, pred or sigma.
double lognormal_loglik(double y, double pred, double sigma);

/// Additive Gaussian measurement density. Throws std::domain_error for sigma <= 0.
double gaussian_loglik(double y, double pred, double sigma);

/// Model parameters theta plus the prediction-error scale sigma. Sampler
/// points use the flat layout [theta..., sigma].
struct ParameterVector {
    std::vector<double> theta;
    double sigma = 0.0;

    static ParameterVector from_point(std::span<const double> point);
    std::vector<double> to_point() const;
};

enum class CovarianceCase { Diagonal, Correlated };

std::string_view to_string(CovarianceCase c);
CovarianceCase parse_covariance_case(std::string_view name);  // "diag" | "corr"

/// Shape of a packed hyperparameter vector:
///   [mu_theta1..d, mu_sigma, sd_theta1..d, sd_sigma, (rho)]
struct HyperLayout {
    std::size_t dim = 0;
    CovarianceCase cov = CovarianceCase::Diagonal;

    std::size_t size() const { return 2 * dim + 2 + (cov == CovarianceCase::Correlated ? 1 : 0); }
    std::vector<std::string> labels() const;
    /// Recovers the layout from SampleSet labels; throws DataError otherwise.
    static HyperLayout from_labels(const std::vector<std::string>& labels);
};

struct HyperParameters {
    std::vector<double> mu0;
    std::vector<double> sd0;
    std::optional<double> rho;  // between theta1 and theta2 only
    double mu_sigma = 0.0;
    double sd_sigma = 1.0;

    HyperLayout layout() const;
    /// Throws std::invalid_argument when an invariant fails.
    void validate() const;
    bool valid() const noexcept;
    std::vector<double> pack() const;
    static HyperParameters unpack(std::span<const double> packed, const HyperLayout& layout);
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
    bool contains(double x) const { return x >= lower && x <= upper; }
};

/// Independent uniform hyper-priors over the packed layout.
struct HyperPriorBounds {
    HyperLayout layout;
    std::vector<Interval> bounds;

    /// Crack defaults: mu ~ U(0.8,1.4), U(0.9,1.4), mu_sigma ~ U(0,0.4),
    /// sd ~ U(0,0.3), U(0,0.1), sd_sigma ~ U(0,0.2), rho ~ U(-1,1).
    static HyperPriorBounds crack_defaults(CovarianceCase cov);
    /// Battery defaults: means U(0,1.8), standard deviations U(0,0.4), and the
    /// sigma pair U(0,0.4) each.
    static HyperPriorBounds battery_defaults(std::size_t dim);
    static HyperPriorBounds defaults_for(ModelFamily family, CovarianceCase cov);

    void validate() const;
    /// Sum of uniform log-densities; -inf outside.
    double log_density(std::span<const double> packed) const;
};

inline constexpr double kCrackSigmaTruncation = 0.2;
inline constexpr double kBatterySigmaTruncation = 0.4;
double default_sigma_truncation(ModelFamily family);

/// Gaussian hierarchical prior N(theta | mu0, Sigma0) times a Gaussian
/// (mu_sigma, sd_sigma) on sigma truncated to (0, sigma_max), evaluated for
/// one fixed psi. Construction does the per-psi work once.
class HierarchicalPrior {
public:
    HierarchicalPrior(const HyperParameters& psi, double sigma_max);

    /// Log-density at a flat point [theta..., sigma].
    double operator()(std::span<const double> point) const;

private:
    std::vector<double> mu_;
    std::vector<double> inv_sd_;
    double rho_ = 0.0;
    double inv_one_minus_rho2_ = 1.0;
    double mu_sigma_ = 0.0;
    double inv_sd_sigma_ = 1.0;
    double sigma_max_ = 0.0;
    double log_norm_ = 0.0;
};

double hier_prior_logpdf(const ParameterVector& pv, const HyperParameters& psi, double sigma_max);

/// Unnormalized log hyper-posterior built from stage-1 samples:
///   log p(psi) + sum_i [ logsumexp_k log p(theta_i^k | psi) - log N_k ].
class HyperPosteriorTarget {
public:
    HyperPosteriorTarget(std::span<const SampleSet> stage1, HyperPriorBounds bounds,
                         double sigma_max);

    const HyperPriorBounds& bounds() const { return bounds_; }
    double sigma_max() const { return sigma_max_; }

    double log_prior(std::span<const double> packed) const;
    /// Monte Carlo estimate of log prod_i p(D_i | psi), up to the stage-1
    /// evidence constants.
    double log_likelihood(std::span<const double> packed) const;
    double operator()(std::span<const double> packed) const;

private:
    HyperPriorBounds bounds_;
    double sigma_max_;
    std::size_t point_dim_;
    std::vector<std::vector<double>> samples_;  // row-major per dataset
    std::vector<double> log_counts_;
};

double hyper_posterior_logtarget(const HyperParameters& psi, std::span<const SampleSet> stage1,
                                 const HyperPriorBounds& bounds, double sigma_max);

/// Equal-weight mixture of hierarchical priors over hyper samples, the
/// historically informed prior for a new unit.
class MixturePrior {
public:
    MixturePrior(const SampleSet& hyper, double sigma_max);

    std::size_t components() const { return components_.size(); }
    std::size_t point_dim() const { return layout_.dim + 1; }
    double operator()(std::span<const double> point) const;

    /// Ancestral draw: pick psi uniformly, then theta ~ N(mu0, Sigma0) and
    /// sigma from its truncated Gaussian.
    std::vector<double> draw(Rng& rng) const;
    /// Mean of the mixture over [theta..., sigma].
    std::vector<double> mean() const;

private:
    HyperLayout layout_;
    double sigma_max_;
    std::vector<HyperParameters> psi_;
    std::vector<HierarchicalPrior> components_;
};

double mixture_prior_logpdf(const ParameterVector& pv, const SampleSet& hyper, double sigma_max);

/// Sum of per-observation log-likelihoods under the model's likelihood
/// family. -inf when the model diverges or leaves its support.
double dataset_loglik(const Dataset& data, const DegradationModel& bound_model,
                      std::span<const double> point);

double current_posterior_logtarget(const ParameterVector& pv, const Dataset& current,
                                   const SampleSet& hyper, const DegradationModel& model,
                                   double sigma_max);

}  // namespace hbm
