#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbm {

/// Closed-form degradation model families. Paris and the two battery
/// families are the physical models; ConstantCapacity and Linear are
/// reference families used as dummies in model comparison and as
/// analytically tractable toys.
enum class ModelFamily { Paris, BatterySingle, BatteryDouble, ConstantCapacity, Linear };

enum class LikelihoodFamily { Lognormal, Gaussian };

std::string_view to_string(ModelFamily family);
std::string_view to_string(LikelihoodFamily family);
/// Accepts "paris", "batt-single", "batt-double", "batt-constant", "linear".
ModelFamily parse_model_family(std::string_view name);

LikelihoodFamily likelihood_for(ModelFamily family);
std::size_t theta_dimension(ModelFamily family);
std::vector<double> default_nominals(ModelFamily family);

/// Half-width of the band around m = 2 where the exponential solution of
/// Paris' law replaces the power-law closed form.
inline constexpr double kParisSingularTolerance = 1e-6;

struct LoadingSpec {
    enum class Mode { Constant, TwoBlock };

    Mode mode = Mode::Constant;
    double delta_sigma = 0.0;  // MPa, constant mode
    double delta_sigma1 = 0.0;
    double cycles1 = 0.0;
    double delta_sigma2 = 0.0;
    double cycles2 = 0.0;

    static LoadingSpec constant(double delta_sigma);
    static LoadingSpec two_block(double delta_sigma1, double cycles1, double delta_sigma2,
                                 double cycles2);

    /// Throws std::invalid_argument when amplitudes or block counts are inadmissible.
    void validate() const;
};

struct CrackGeometry {
    double a0 = 0.0;  // initial crack length (mm) observed at n0
    double n0 = 0.0;
    double af = 0.0;  // critical crack length (mm)

    void validate() const;
};

/// Normalized Paris parameters: m = theta1 * m0, ln C = theta2 * log_c0.
struct CrackParams {
    double theta1 = 1.0;
    double theta2 = 1.0;
    double m0 = 2.0;
    double log_c0 = -18.6;

    double m() const { return theta1 * m0; }
    double log_c() const { return theta2 * log_c0; }
};

/// Power-mean amplitude collapsing two-block loading into one constant
/// amplitude with the same cycle-averaged (delta sigma)^m driving term.
double equivalent_stress(const LoadingSpec& loading, double m);

/// Crack length after n cycles, integrating da/dN = C (dsigma sqrt(pi a))^m
/// from a0 at n0. Returns std::nullopt when the crack diverges in finite
/// time before n (possible for m > 2); callers treat that as failure.
std::optional<double> crack_length(const CrackParams& params, const CrackGeometry& geometry,
                                   const LoadingSpec& loading, double n);

/// Cycle count at which crack_length reaches geometry.af. Exact algebraic
/// inverse of crack_length, including the m ~ 2 branch.
/// Throws NumericalError when C is not positive.
double cycles_to_failure(const CrackParams& params, const CrackGeometry& geometry,
                         const LoadingSpec& loading);

struct BatterySingleParams {
    double theta1 = 1.0;
    double theta2 = 1.0;
    double theta3 = 1.0;
    double c00 = 2.0;
    double a0 = -1.0;
    double b0 = -100.0;

    double c0() const { return theta1 * c00; }
    double a() const { return theta2 * a0; }
    double b() const { return theta3 * b0; }
};

/// Q = C0 + a exp(b / k). Defined for k >= 1.
double battery_capacity_single(const BatterySingleParams& params, double k);

struct BatteryDoubleParams {
    double theta1 = 1.0;
    double theta2 = 1.0;
    double theta3 = 1.0;
    double theta4 = 1.0;
    double a0 = 1.92;
    double b0 = -0.02;
    double c0 = -0.003;
    double d0 = -0.05;

    double a() const { return theta1 * a0; }
    double b() const { return theta2 * b0; }
    double c() const { return theta3 * c0; }
    double d() const { return theta4 * d0; }
};

/// Q = a exp(b k) + c exp(d k). Defined for k >= 0.
double battery_capacity_double(const BatteryDoubleParams& params, double k);

struct CrackSetup {
    CrackGeometry geometry;
    LoadingSpec loading;
};

/// A model family with its nominal values, optionally bound to the
/// geometry and loading of one crack specimen. Value type; evaluation is
/// a pure function of the arguments.
class DegradationModel {
public:
    explicit DegradationModel(ModelFamily family, std::vector<double> nominals = {});

    DegradationModel bind(const CrackGeometry& geometry, const LoadingSpec& loading) const;

    ModelFamily family() const { return family_; }
    LikelihoodFamily likelihood() const { return likelihood_for(family_); }
    std::size_t dimension() const { return nominals_.size(); }
    std::span<const double> nominals() const { return nominals_; }
    const std::optional<CrackSetup>& crack() const { return crack_; }

    /// Degradation grows toward the threshold (crack) rather than decaying
    /// toward it (capacity).
    bool grows() const { return family_ == ModelFamily::Paris || family_ == ModelFamily::Linear; }

    /// Labels for [theta..., sigma].
    std::vector<std::string> labels() const;

    /// g(theta, t). std::nullopt signals crack divergence before t.
    std::optional<double> evaluate(std::span<const double> theta, double t) const;

    CrackParams crack_params(std::span<const double> theta) const;

private:
    ModelFamily family_;
    std::vector<double> nominals_;
    std::optional<CrackSetup> crack_;
};

}  // namespace hbm
