#include "hbm/degradation.hpp"

#include "hbm/error.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hbm {

namespace {

bool all_finite(std::span<const double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

// ln(C (dsigma sqrt(pi))^m), the growth-rate prefactor of Paris' law.
double log_paris_rate(const CrackParams& p, const LoadingSpec& loading) {
    const double m = p.m();
    const double ds = equivalent_stress(loading, m);
    return p.log_c() + m * std::log(ds * std::sqrt(std::numbers::pi));
}

}  // namespace

std::string_view to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::Paris: return "paris";
        case ModelFamily::BatterySingle: return "batt-single";
        case ModelFamily::BatteryDouble: return "batt-double";
        case ModelFamily::ConstantCapacity: return "batt-constant";
        case ModelFamily::Linear: return "linear";
    }
    return "unknown";
}

std::string_view to_string(LikelihoodFamily family) {
    return family == LikelihoodFamily::Lognormal ? "lognormal" : "gaussian";
}

ModelFamily parse_model_family(std::string_view name) {
    if (name == "paris") return ModelFamily::Paris;
    if (name == "batt-single") return ModelFamily::BatterySingle;
    if (name == "batt-double") return ModelFamily::BatteryDouble;
    if (name == "batt-constant") return ModelFamily::ConstantCapacity;
    if (name == "linear") return ModelFamily::Linear;
    throw DataError("unknown model family '" + std::string(name) + "'");
}

LikelihoodFamily likelihood_for(ModelFamily family) {
    return family == ModelFamily::Paris ? LikelihoodFamily::Lognormal : LikelihoodFamily::Gaussian;
}

std::size_t theta_dimension(ModelFamily family) { return default_nominals(family).size(); }

std::vector<double> default_nominals(ModelFamily family) {
    switch (family) {
        case ModelFamily::Paris: return {2.0, -18.6};
        case ModelFamily::BatterySingle: return {2.0, -1.0, -100.0};
        case ModelFamily::BatteryDouble: return {1.92, -0.02, -0.003, -0.05};
        case ModelFamily::ConstantCapacity: return {2.0};
        case ModelFamily::Linear: return {1.0};
    }
    return {};
}

LoadingSpec LoadingSpec::constant(double delta_sigma) {
    LoadingSpec s;
    s.mode = Mode::Constant;
    s.delta_sigma = delta_sigma;
    return s;
}

LoadingSpec LoadingSpec::two_block(double delta_sigma1, double cycles1, double delta_sigma2,
                                   double cycles2) {
    LoadingSpec s;
    s.mode = Mode::TwoBlock;
    s.delta_sigma1 = delta_sigma1;
    s.cycles1 = cycles1;
    s.delta_sigma2 = delta_sigma2;
    s.cycles2 = cycles2;
    return s;
}

void LoadingSpec::validate() const {
    if (mode == Mode::Constant) {
        if (!(delta_sigma > 0.0) || !std::isfinite(delta_sigma))
            throw std::invalid_argument("loading: stress amplitude must be positive");
        return;
    }
    if (!(delta_sigma1 > 0.0) || !(delta_sigma2 > 0.0) || !std::isfinite(delta_sigma1) ||
        !std::isfinite(delta_sigma2))
        throw std::invalid_argument("loading: block amplitudes must be positive");
    if (cycles1 < 0.0 || cycles2 < 0.0)
        throw std::invalid_argument("loading: block cycle counts must be non-negative");
    if (!(cycles1 + cycles2 > 0.0))
        throw std::invalid_argument("loading: two-block mode needs N1 + N2 > 0");
}

void CrackGeometry::validate() const {
    if (!(a0 > 0.0) || !(af >= a0) || !std::isfinite(af))
        throw std::invalid_argument("geometry: need 0 < a0 <= a_f");
    if (!(n0 >= 0.0)) throw std::invalid_argument("geometry: N0 must be non-negative");
}

double equivalent_stress(const LoadingSpec& loading, double m) {
    loading.validate();
    if (loading.mode == LoadingSpec::Mode::Constant) return loading.delta_sigma;
    if (!std::isfinite(m)) throw std::invalid_argument("equivalent_stress: m must be finite");
    if (m == 0.0) throw std::invalid_argument("equivalent_stress: undefined for m = 0");

    const double total = loading.cycles1 + loading.cycles2;
    const double w1 = loading.cycles1 / total;
    const double w2 = loading.cycles2 / total;
    // Power mean evaluated around the larger amplitude so that large m
    // does not overflow.
    const double ref = std::max(loading.delta_sigma1, loading.delta_sigma2);
    const double r1 = loading.delta_sigma1 / ref;
    const double r2 = loading.delta_sigma2 / ref;
    double s = 0.0;
    if (w1 > 0.0) s += w1 * std::pow(r1, m);
    if (w2 > 0.0) s += w2 * std::pow(r2, m);
    return ref * std::pow(s, 1.0 / m);
}

std::optional<double> crack_length(const CrackParams& params, const CrackGeometry& geometry,
                                   const LoadingSpec& loading, double n) {
    geometry.validate();
    if (!(n >= geometry.n0))
        throw std::invalid_argument("crack_length: cycle precedes the initial observation");
    if (n == geometry.n0) return geometry.a0;

    const double log_c = params.log_c();
    if (std::exp(log_c) == 0.0) return geometry.a0;

    const double m = params.m();
    const double log_k = log_paris_rate(params, loading);
    const double dn = n - geometry.n0;

    if (std::abs(m - 2.0) < kParisSingularTolerance)
        return geometry.a0 * std::exp(std::exp(log_k) * dn);

    // u = a^e with e = 1 - m/2 grows linearly in n:
    //   u(n) = a0^e + e K (n - n0),
    // written as a = a0 * (1 + z)^(1/e) with z = e K dn a0^-e.
    const double e = 1.0 - 0.5 * m;
    const double z = e * std::exp(log_k + std::log(dn) - e * std::log(geometry.a0));
    if (!(z > -1.0)) return std::nullopt;
    return geometry.a0 * std::exp(std::log1p(z) / e);
}

double cycles_to_failure(const CrackParams& params, const CrackGeometry& geometry,
                         const LoadingSpec& loading) {
    geometry.validate();
    const double log_c = params.log_c();
    if (!std::isfinite(log_c) || std::exp(log_c) <= 0.0)
        throw NumericalError("cycles_to_failure: no finite failure time (C <= 0)");
    if (geometry.af == geometry.a0) return geometry.n0;

    const double m = params.m();
    const double log_k = log_paris_rate(params, loading);
    const double r = std::log(geometry.af / geometry.a0);

    if (std::abs(m - 2.0) < kParisSingularTolerance) return geometry.n0 + r * std::exp(-log_k);

    const double e = 1.0 - 0.5 * m;
    const double dn = std::exp(e * std::log(geometry.a0) - log_k) * std::expm1(e * r) / e;
    if (!(dn >= 0.0) || !std::isfinite(dn))
        throw NumericalError("cycles_to_failure: no finite failure time");
    return geometry.n0 + dn;
}

double battery_capacity_single(const BatterySingleParams& p, double k) {
    if (!(k >= 1.0)) throw std::domain_error("battery_capacity_single: cycle index below model domain");
    return p.c0() + p.a() * std::exp(p.b() / k);
}

double battery_capacity_double(const BatteryDoubleParams& p, double k) {
    if (!(k >= 0.0)) throw std::domain_error("battery_capacity_double: negative cycle index");
    const double params[] = {p.a(), p.b(), p.c(), p.d()};
    if (!all_finite(params)) throw std::domain_error("battery_capacity_double: non-finite parameter");
    return p.a() * std::exp(p.b() * k) + p.c() * std::exp(p.d() * k);
}

DegradationModel::DegradationModel(ModelFamily family, std::vector<double> nominals)
    : family_(family), nominals_(std::move(nominals)) {
    if (nominals_.empty()) nominals_ = default_nominals(family_);
    if (nominals_.size() != theta_dimension(family_))
        throw DataError("model '" + std::string(to_string(family_)) + "' expects " +
                        std::to_string(theta_dimension(family_)) + " nominal values");
}

DegradationModel DegradationModel::bind(const CrackGeometry& geometry,
                                        const LoadingSpec& loading) const {
    geometry.validate();
    loading.validate();
    DegradationModel bound = *this;
    bound.crack_ = CrackSetup{geometry, loading};
    return bound;
}

std::vector<std::string> DegradationModel::labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dimension(); ++i) out.push_back("theta" + std::to_string(i + 1));
    out.emplace_back("sigma");
    return out;
}

CrackParams DegradationModel::crack_params(std::span<const double> theta) const {
    return CrackParams{theta[0], theta[1], nominals_[0], nominals_[1]};
}

std::optional<double> DegradationModel::evaluate(std::span<const double> theta, double t) const {
    if (theta.size() < dimension()) throw std::invalid_argument("evaluate: parameter vector too short");
    switch (family_) {
        case ModelFamily::Paris: {
            if (!crack_) throw std::logic_error("paris model evaluated without geometry and loading");
            return crack_length(crack_params(theta), crack_->geometry, crack_->loading, t);
        }
        case ModelFamily::BatterySingle:
            return battery_capacity_single(
                {theta[0], theta[1], theta[2], nominals_[0], nominals_[1], nominals_[2]}, t);
        case ModelFamily::BatteryDouble:
            return battery_capacity_double({theta[0], theta[1], theta[2], theta[3], nominals_[0],
                                            nominals_[1], nominals_[2], nominals_[3]},
                                           t);
        case ModelFamily::ConstantCapacity: return theta[0] * nominals_[0];
        case ModelFamily::Linear: return theta[0] * nominals_[0] * t;
    }
    return std::nullopt;
}

}  // namespace hbm
