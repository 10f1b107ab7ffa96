#include "hbm/densities.hpp"

#include "hbm/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hbm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

double log_normal_pdf_std(double z) { return -kHalfLog2Pi - 0.5 * z * z; }

void require_same_dim(const SampleSet& s, std::size_t dim, const char* what) {
    if (s.dim() != dim)
        throw std::invalid_argument(std::string(what) + ": sample dimension " +
                                    std::to_string(s.dim()) + " != expected " +
                                    std::to_string(dim));
}

}  // namespace

double logsumexp(std::span<const double> xs) {
    if (xs.empty()) return kNegInf;
    const double m = *std::max_element(xs.begin(), xs.end());
    if (m == kNegInf) return kNegInf;
    if (m == std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
    if (x > -30.0) return std::log(normal_cdf(x));
    // Asymptotic expansion of the Mills ratio; relative error < 1e-14 here.
    const double x2 = x * x;
    const double inv = 1.0 / x2;
    const double series =
        1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv * (1.0 - 9.0 * inv))));
    return -0.5 * x2 - std::log(-x) - kHalfLog2Pi + std::log(series);
}

double log_normal_probability(double lower, double upper) {
    if (!(upper > lower)) return kNegInf;
    // Work in the lower tail where Phi carries full relative precision.
    if (lower > 0.0) {
        const double a = -upper;
        const double b = -lower;
        lower = a;
        upper = b;
    }
    const double lb = log_normal_cdf(upper);
    const double la = lower == kNegInf ? kNegInf : log_normal_cdf(lower);
    if (la == kNegInf) return lb;
    return lb + std::log1p(-std::exp(la - lb));
}

double lognormal_loglik(double y, double pred, double sigma) {
    if (!(y > 0.0)) throw std::domain_error("lognormal_loglik: observation must be positive");
    if (!(pred > 0.0)) throw std::domain_error("lognormal_loglik: prediction must be positive");
    if (!(sigma > 0.0)) throw std::domain_error("lognormal_loglik: sigma must be positive");
    const double ratio = sigma / pred;
    const double zeta2 = std::log1p(ratio * ratio);
    const double zeta = std::sqrt(zeta2);
    const double eta = std::log(pred) - 0.5 * zeta2;
    const double z = (std::log(y) - eta) / zeta;
    return -std::log(y) - std::log(zeta) - kHalfLog2Pi - 0.5 * z * z;
}

double gaussian_loglik(double y, double pred, double sigma) {
    if (!(sigma > 0.0)) throw std::domain_error("gaussian_loglik: sigma must be positive");
    const double r = (y - pred) / sigma;
    return -kHalfLog2Pi - std::log(sigma) - 0.5 * r * r;
}

ParameterVector ParameterVector::from_point(std::span<const double> point) {
    if (point.size() < 2) throw std::invalid_argument("parameter point needs theta and sigma");
    return ParameterVector{std::vector<double>(point.begin(), point.end() - 1), point.back()};
}

std::vector<double> ParameterVector::to_point() const {
    std::vector<double> p = theta;
    p.push_back(sigma);
    return p;
}

std::string_view to_string(CovarianceCase c) {
    return c == CovarianceCase::Diagonal ? "diag" : "corr";
}

CovarianceCase parse_covariance_case(std::string_view name) {
    if (name == "diag") return CovarianceCase::Diagonal;
    if (name == "corr") return CovarianceCase::Correlated;
    throw DataError("unknown covariance case '" + std::string(name) + "' (expected diag|corr)");
}

std::vector<std::string> HyperLayout::labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dim; ++i) out.push_back("mu_theta" + std::to_string(i + 1));
    out.emplace_back("mu_sigma");
    for (std::size_t i = 0; i < dim; ++i) out.push_back("sd_theta" + std::to_string(i + 1));
    out.emplace_back("sd_sigma");
    if (cov == CovarianceCase::Correlated) out.emplace_back("rho");
    return out;
}

HyperLayout HyperLayout::from_labels(const std::vector<std::string>& labels) {
    HyperLayout layout;
    layout.cov = (!labels.empty() && labels.back() == "rho") ? CovarianceCase::Correlated
                                                             : CovarianceCase::Diagonal;
    const std::size_t extra = layout.cov == CovarianceCase::Correlated ? 1 : 0;
    if (labels.size() < 4 + extra || (labels.size() - extra) % 2 != 0)
        throw DataError("sample labels do not describe a hyperparameter layout");
    layout.dim = (labels.size() - extra - 2) / 2;
    if (layout.labels() != labels)
        throw DataError("sample labels do not describe a hyperparameter layout");
    return layout;
}

HyperLayout HyperParameters::layout() const {
    return HyperLayout{mu0.size(), rho ? CovarianceCase::Correlated : CovarianceCase::Diagonal};
}

bool HyperParameters::valid() const noexcept {
    if (mu0.empty() || sd0.size() != mu0.size()) return false;
    for (std::size_t i = 0; i < mu0.size(); ++i)
        if (!std::isfinite(mu0[i]) || !(sd0[i] > 0.0) || !std::isfinite(sd0[i])) return false;
    if (rho && (!(std::abs(*rho) < 1.0) || mu0.size() < 2)) return false;
    return mu_sigma >= 0.0 && std::isfinite(mu_sigma) && sd_sigma > 0.0 && std::isfinite(sd_sigma);
}

void HyperParameters::validate() const {
    if (mu0.empty() || sd0.size() != mu0.size())
        throw std::invalid_argument("hyperparameters: mean and sd vectors must match");
    for (double s : sd0)
        if (!(s > 0.0)) throw std::invalid_argument("hyperparameters: sd components must be > 0");
    if (rho && !(std::abs(*rho) < 1.0))
        throw std::invalid_argument("hyperparameters: |rho| must be < 1");
    if (rho && mu0.size() < 2)
        throw std::invalid_argument("hyperparameters: rho needs two parameters");
    if (!(mu_sigma >= 0.0)) throw std::invalid_argument("hyperparameters: mu_sigma must be >= 0");
    if (!(sd_sigma > 0.0)) throw std::invalid_argument("hyperparameters: sd_sigma must be > 0");
}

std::vector<double> HyperParameters::pack() const {
    std::vector<double> out(mu0.begin(), mu0.end());
    out.push_back(mu_sigma);
    out.insert(out.end(), sd0.begin(), sd0.end());
    out.push_back(sd_sigma);
    if (rho) out.push_back(*rho);
    return out;
}

HyperParameters HyperParameters::unpack(std::span<const double> packed, const HyperLayout& layout) {
    if (packed.size() != layout.size())
        throw std::invalid_argument("hyperparameters: packed vector has wrong length");
    const std::size_t d = layout.dim;
    HyperParameters psi;
    psi.mu0.assign(packed.begin(), packed.begin() + d);
    psi.mu_sigma = packed[d];
    psi.sd0.assign(packed.begin() + d + 1, packed.begin() + 2 * d + 1);
    psi.sd_sigma = packed[2 * d + 1];
    if (layout.cov == CovarianceCase::Correlated) psi.rho = packed[2 * d + 2];
    return psi;
}

HyperPriorBounds HyperPriorBounds::crack_defaults(CovarianceCase cov) {
    HyperPriorBounds b;
    b.layout = HyperLayout{2, cov};
    b.bounds = {{0.8, 1.4}, {0.9, 1.4}, {0.0, 0.4}, {0.0, 0.3}, {0.0, 0.1}, {0.0, 0.2}};
    if (cov == CovarianceCase::Correlated) b.bounds.push_back({-1.0, 1.0});
    return b;
}

HyperPriorBounds HyperPriorBounds::battery_defaults(std::size_t dim) {
    HyperPriorBounds b;
    b.layout = HyperLayout{dim, CovarianceCase::Diagonal};
    for (std::size_t i = 0; i < dim; ++i) b.bounds.push_back({0.0, 1.8});
    b.bounds.push_back({0.0, 0.4});
    for (std::size_t i = 0; i < dim; ++i) b.bounds.push_back({0.0, 0.4});
    b.bounds.push_back({0.0, 0.4});
    return b;
}

HyperPriorBounds HyperPriorBounds::defaults_for(ModelFamily family, CovarianceCase cov) {
    if (family == ModelFamily::Paris) return crack_defaults(cov);
    const std::size_t d = theta_dimension(family);
    if (cov == CovarianceCase::Correlated && d != 2)
        throw DataError("correlated case is only supported for two-parameter families");
    HyperPriorBounds b = battery_defaults(d);
    if (cov == CovarianceCase::Correlated) {
        b.layout.cov = cov;
        b.bounds.push_back({-1.0, 1.0});
    }
    return b;
}

void HyperPriorBounds::validate() const {
    if (bounds.size() != layout.size())
        throw DataError("hyper-prior bounds: expected " + std::to_string(layout.size()) +
                        " intervals, got " + std::to_string(bounds.size()));
    for (const auto& iv : bounds)
        if (!(iv.lower < iv.upper) || !std::isfinite(iv.lower) || !std::isfinite(iv.upper))
            throw DataError("hyper-prior bounds: need finite lower < upper for every component");
    if (layout.cov == CovarianceCase::Correlated && layout.dim != 2)
        throw DataError("correlated case is only supported for two-parameter families");
}

double HyperPriorBounds::log_density(std::span<const double> packed) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        if (!bounds[i].contains(packed[i])) return kNegInf;
        lp -= std::log(bounds[i].width());
    }
    return lp;
}

double default_sigma_truncation(ModelFamily family) {
    return family == ModelFamily::Paris ? kCrackSigmaTruncation : kBatterySigmaTruncation;
}

HierarchicalPrior::HierarchicalPrior(const HyperParameters& psi, double sigma_max)
    : mu_(psi.mu0), mu_sigma_(psi.mu_sigma), sigma_max_(sigma_max) {
    psi.validate();
    if (!(sigma_max > 0.0)) throw std::invalid_argument("sigma truncation bound must be positive");
    const std::size_t d = mu_.size();
    inv_sd_.resize(d);
    double log_norm = -static_cast<double>(d) * kHalfLog2Pi;
    for (std::size_t i = 0; i < d; ++i) {
        inv_sd_[i] = 1.0 / psi.sd0[i];
        log_norm -= std::log(psi.sd0[i]);
    }
    if (psi.rho) {
        rho_ = *psi.rho;
        const double one_minus = 1.0 - rho_ * rho_;
        inv_one_minus_rho2_ = 1.0 / one_minus;
        log_norm -= 0.5 * std::log(one_minus);
    }
    inv_sd_sigma_ = 1.0 / psi.sd_sigma;
    const double lo = (0.0 - psi.mu_sigma) * inv_sd_sigma_;
    const double hi = (sigma_max - psi.mu_sigma) * inv_sd_sigma_;
    log_norm += -kHalfLog2Pi - std::log(psi.sd_sigma) - log_normal_probability(lo, hi);
    log_norm_ = log_norm;
}

double HierarchicalPrior::operator()(std::span<const double> point) const {
    const std::size_t d = mu_.size();
    const double sigma = point[d];
    if (!(sigma > 0.0) || !(sigma < sigma_max_)) return kNegInf;
    double q = 0.0;
    if (rho_ != 0.0) {
        const double z1 = (point[0] - mu_[0]) * inv_sd_[0];
        const double z2 = (point[1] - mu_[1]) * inv_sd_[1];
        q = (z1 * z1 - 2.0 * rho_ * z1 * z2 + z2 * z2) * inv_one_minus_rho2_;
        for (std::size_t i = 2; i < d; ++i) {
            const double z = (point[i] - mu_[i]) * inv_sd_[i];
            q += z * z;
        }
    } else {
        for (std::size_t i = 0; i < d; ++i) {
            const double z = (point[i] - mu_[i]) * inv_sd_[i];
            q += z * z;
        }
    }
    const double zs = (sigma - mu_sigma_) * inv_sd_sigma_;
    q += zs * zs;
    const double lp = log_norm_ - 0.5 * q;
    return std::isnan(lp) ? kNegInf : lp;
}

double hier_prior_logpdf(const ParameterVector& pv, const HyperParameters& psi, double sigma_max) {
    if (pv.theta.size() != psi.mu0.size())
        throw std::invalid_argument("hier_prior_logpdf: parameter dimension mismatch");
    return HierarchicalPrior(psi, sigma_max)(pv.to_point());
}

HyperPosteriorTarget::HyperPosteriorTarget(std::span<const SampleSet> stage1,
                                           HyperPriorBounds bounds, double sigma_max)
    : bounds_(std::move(bounds)), sigma_max_(sigma_max), point_dim_(bounds_.layout.dim + 1) {
    bounds_.validate();
    if (stage1.empty()) throw std::invalid_argument("hyper posterior needs at least one dataset");
    for (const auto& s : stage1) {
        if (s.empty()) throw std::invalid_argument("hyper posterior: empty stage-1 sample set");
        require_same_dim(s, point_dim_, "hyper posterior");
        samples_.push_back(s.data());
    }
    // Canonical order makes the summed target exactly invariant under
    // permutations of the datasets.
    std::sort(samples_.begin(), samples_.end());
    for (const auto& rows : samples_)
        log_counts_.push_back(std::log(static_cast<double>(rows.size() / point_dim_)));
}

double HyperPosteriorTarget::log_prior(std::span<const double> packed) const {
    return bounds_.log_density(packed);
}

double HyperPosteriorTarget::log_likelihood(std::span<const double> packed) const {
    const HyperParameters psi = HyperParameters::unpack(packed, bounds_.layout);
    if (!psi.valid()) return kNegInf;
    const HierarchicalPrior prior(psi, sigma_max_);
    double total = 0.0;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& rows = samples_[i];
        LogSumExp acc;
        for (std::size_t off = 0; off < rows.size(); off += point_dim_)
            acc.add(prior(std::span<const double>(rows).subspan(off, point_dim_)));
        const double term = acc.value();
        if (term == kNegInf) return kNegInf;
        total += term - log_counts_[i];
    }
    return total;
}

double HyperPosteriorTarget::operator()(std::span<const double> packed) const {
    const double lp = log_prior(packed);
    if (lp == kNegInf) return kNegInf;
    return lp + log_likelihood(packed);
}

double hyper_posterior_logtarget(const HyperParameters& psi, std::span<const SampleSet> stage1,
                                 const HyperPriorBounds& bounds, double sigma_max) {
    HyperPriorBounds b = bounds;
    b.layout = psi.layout();
    return HyperPosteriorTarget(stage1, std::move(b), sigma_max)(psi.pack());
}

MixturePrior::MixturePrior(const SampleSet& hyper, double sigma_max)
    : layout_(HyperLayout::from_labels(hyper.labels())), sigma_max_(sigma_max) {
    if (hyper.empty()) throw std::invalid_argument("mixture prior needs at least one hyper sample");
    psi_.reserve(hyper.size());
    components_.reserve(hyper.size());
    for (std::size_t s = 0; s < hyper.size(); ++s) {
        psi_.push_back(HyperParameters::unpack(hyper.row(s), layout_));
        components_.emplace_back(psi_.back(), sigma_max);
    }
}

double MixturePrior::operator()(std::span<const double> point) const {
    LogSumExp acc;
    for (const auto& c : components_) acc.add(c(point));
    return acc.value() - std::log(static_cast<double>(components_.size()));
}

std::vector<double> MixturePrior::draw(Rng& rng) const {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, psi_.size() - 1)(rng);
    const HyperParameters& psi = psi_[pick];
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = psi.mu0.size();
    std::vector<double> point(d + 1);
    std::vector<double> z(d);
    for (auto& zi : z) zi = normal(rng);
    if (psi.rho) {
        // Cholesky factor of the 2x2 correlation block.
        const double r = *psi.rho;
        const double z2 = r * z[0] + std::sqrt(1.0 - r * r) * z[1];
        z[1] = z2;
    }
    for (std::size_t i = 0; i < d; ++i) point[i] = psi.mu0[i] + psi.sd0[i] * z[i];

    const double lo = (0.0 - psi.mu_sigma) / psi.sd_sigma;
    const double hi = (sigma_max_ - psi.mu_sigma) / psi.sd_sigma;
    const double mass = std::exp(log_normal_probability(lo, hi));
    double sigma = 0.0;
    if (mass > 0.05) {
        do {
            sigma = psi.mu_sigma + psi.sd_sigma * normal(rng);
        } while (!(sigma > 0.0 && sigma < sigma_max_));
    } else {
        // Inverse CDF on the tail side that keeps precision.
        const boost::math::normal_distribution<double> std_normal;
        const double u = uniform01(rng);
        double z_draw;
        if (lo > 0.0) {
            const double qa = normal_cdf(-lo), qb = normal_cdf(-hi);
            z_draw = -boost::math::quantile(std_normal, std::max(qb + u * (qa - qb), 1e-300));
        } else {
            const double pa = normal_cdf(lo), pb = normal_cdf(hi);
            z_draw = boost::math::quantile(std_normal, std::max(pa + u * (pb - pa), 1e-300));
        }
        sigma = std::clamp(psi.mu_sigma + psi.sd_sigma * z_draw, 0.0, sigma_max_);
        if (!(sigma > 0.0 && sigma < sigma_max_))
            sigma = std::clamp(psi.mu_sigma, 1e-12 * sigma_max_, (1.0 - 1e-12) * sigma_max_);
    }
    point[d] = sigma;
    return point;
}

std::vector<double> MixturePrior::mean() const {
    const std::size_t d = layout_.dim;
    std::vector<double> m(d + 1, 0.0);
    for (const auto& psi : psi_) {
        for (std::size_t i = 0; i < d; ++i) m[i] += psi.mu0[i];
        const double lo = (0.0 - psi.mu_sigma) / psi.sd_sigma;
        const double hi = (sigma_max_ - psi.mu_sigma) / psi.sd_sigma;
        const double log_mass = log_normal_probability(lo, hi);
        const double shift = std::exp(log_normal_pdf_std(lo) - log_mass) -
                             std::exp(log_normal_pdf_std(hi) - log_mass);
        m[d] += psi.mu_sigma + psi.sd_sigma * shift;
    }
    for (auto& v : m) v /= static_cast<double>(psi_.size());
    return m;
}

double mixture_prior_logpdf(const ParameterVector& pv, const SampleSet& hyper, double sigma_max) {
    const MixturePrior prior(hyper, sigma_max);
    if (pv.theta.size() + 1 != prior.point_dim())
        throw std::invalid_argument("mixture_prior_logpdf: parameter dimension mismatch");
    return prior(pv.to_point());
}

double dataset_loglik(const Dataset& data, const DegradationModel& model,
                      std::span<const double> point) {
    const std::size_t d = model.dimension();
    if (point.size() != d + 1) throw std::invalid_argument("dataset_loglik: point dimension mismatch");
    const double sigma = point[d];
    if (!(sigma > 0.0)) return kNegInf;
    const auto theta = point.first(d);
    const bool lognormal = model.likelihood() == LikelihoodFamily::Lognormal;
    double total = 0.0;
    for (const auto& obs : data.points) {
        const auto pred = model.evaluate(theta, static_cast<double>(obs.cycle));
        if (!pred || !std::isfinite(*pred)) return kNegInf;
        if (lognormal) {
            if (!(*pred > 0.0)) return kNegInf;
            total += lognormal_loglik(obs.value, *pred, sigma);
        } else {
            total += gaussian_loglik(obs.value, *pred, sigma);
        }
    }
    return std::isnan(total) ? kNegInf : total;
}

double current_posterior_logtarget(const ParameterVector& pv, const Dataset& current,
                                   const SampleSet& hyper, const DegradationModel& model,
                                   double sigma_max) {
    const double prior = mixture_prior_logpdf(pv, hyper, sigma_max);
    if (prior == kNegInf) return kNegInf;
    const DegradationModel bound = bind_model(model, current.meta);
    return prior + dataset_loglik(current, bound, pv.to_point());
}

}  // namespace hbm
