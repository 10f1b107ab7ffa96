#include "hbm/dataset.hpp"
#include "hbm/densities.hpp"
#include "hbm/error.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <boost/math/constants/constants.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace hbm;
using boost::multiprecision::cpp_bin_float_50;
using F50 = cpp_bin_float_50;

namespace {

HyperParameters psi2(double rho_or_nan = std::nan("")) {
    HyperParameters p;
    p.mu0 = {1.1, 1.05};
    p.sd0 = {0.12, 0.05};
    p.mu_sigma = 0.08;
    p.sd_sigma = 0.05;
    if (!std::isnan(rho_or_nan)) p.rho = rho_or_nan;
    return p;
}

// Explicit bivariate normal plus truncated Gaussian on sigma, in extended precision.
F50 brute_prior(const std::vector<double>& point, const HyperParameters& p, double sigma_max) {
    const F50 pi = boost::math::constants::pi<F50>();
    const double rho = p.rho.value_or(0.0);
    const F50 s11 = F50(p.sd0[0]) * p.sd0[0], s22 = F50(p.sd0[1]) * p.sd0[1];
    const F50 s12 = F50(rho) * p.sd0[0] * p.sd0[1];
    const F50 det = s11 * s22 - s12 * s12;
    const F50 d1 = F50(point[0]) - p.mu0[0], d2 = F50(point[1]) - p.mu0[1];
    const F50 q = (s22 * d1 * d1 - 2 * s12 * d1 * d2 + s11 * d2 * d2) / det;
    const F50 theta = exp(-q / 2) / (2 * pi * sqrt(det));
    const F50 zs = (F50(point[2]) - p.mu_sigma) / p.sd_sigma;
    auto cdf = [](F50 x) { return erfc(-x / sqrt(F50(2))) / 2; };
    const F50 mass = cdf((F50(sigma_max) - p.mu_sigma) / p.sd_sigma) - cdf(F50(-p.mu_sigma) / p.sd_sigma);
    const F50 sig = exp(-zs * zs / 2) / (sqrt(2 * pi) * p.sd_sigma) / mass;
    return theta * sig;
}

SampleSet stage1_set(std::vector<std::vector<double>> rows) {
    SampleSet s({"theta1", "theta2", "sigma"});
    for (auto& r : rows) s.push_back(r);
    return s;
}

}  // namespace

TEST(Logsumexp, ShiftInvariance) {
    const std::vector<double> x{-1.0, 0.5, 3.0, -700.0};
    for (double c : {-1000.0, -3.0, 0.0, 5.0, 800.0}) {
        std::vector<double> y = x;
        for (auto& v : y) v += c;
        EXPECT_NEAR(logsumexp(y), logsumexp(x) + c, 1e-12 * std::max(1.0, std::abs(c)));
    }
}

TEST(Logsumexp, StreamingMatchesTwoPass) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 300.0);
    std::vector<double> x(500);
    LogSumExp acc;
    for (auto& v : x) {
        v = n(rng);
        acc.add(v);
    }
    EXPECT_NEAR(acc.value(), logsumexp(x), 1e-12 * std::abs(logsumexp(x)));
}

TEST(Logsumexp, AllNegativeInfinity) {
    const std::vector<double> x{kNegInf, kNegInf};
    EXPECT_EQ(logsumexp(x), kNegInf);
    EXPECT_EQ(logsumexp(std::vector<double>{}), kNegInf);
}

TEST(NormalCdf, LogTailIsAccurate) {
    for (double x : {-5.0, -20.0, -29.9, -30.1, -40.0, -100.0}) {
        const F50 ref = log(erfc(-F50(x) / sqrt(F50(2))) / 2);
        EXPECT_NEAR(log_normal_cdf(x), ref.convert_to<double>(), 1e-12 * std::abs(ref.convert_to<double>()));
    }
}

TEST(NormalCdf, IntervalProbabilityUpperTail) {
    const F50 a = 9.0, b = 12.0;
    auto cdf = [](F50 x) { return erfc(-x / sqrt(F50(2))) / 2; };
    const double ref = log(cdf(b) - cdf(a)).convert_to<double>();
    EXPECT_NEAR(log_normal_probability(9.0, 12.0), ref, 1e-10 * std::abs(ref));
}

TEST(Lognormal, FiniteAtSmallRelativeNoise) {
    const double v = lognormal_loglik(10.0, 10.0, 0.5);
    const F50 zeta2 = log1p(F50(0.05) * F50(0.05));
    const F50 zeta = sqrt(zeta2);
    const F50 z = (zeta2 / 2) / zeta;
    const F50 ref = -log(F50(10)) - log(zeta) - log(sqrt(2 * boost::math::constants::pi<F50>())) - z * z / 2;
    EXPECT_NEAR(v, ref.convert_to<double>(), 1e-12);
}

TEST(Lognormal, PeaksWithVanishingNoise) {
    double prev = -1e300;
    for (double s : {1.0, 0.1, 0.01, 0.001}) {
        const double v = lognormal_loglik(10.0, 10.0, s);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(Lognormal, IntegratesToOne) {
    using boost::math::quadrature::gauss_kronrod;
    for (auto [pred, sigma] : {std::pair{10.0, 0.5}, {2.0, 0.3}, {25.0, 0.05}, {1.0, 1.5}}) {
        auto f = [&](double y) { return y > 0.0 ? std::exp(lognormal_loglik(y, pred, sigma)) : 0.0; };
        const double mass = gauss_kronrod<double, 61>::integrate(f, 0.0, pred, 15, 1e-13) +
                            gauss_kronrod<double, 61>::integrate(f, pred, std::numeric_limits<double>::infinity(), 15, 1e-13);
        EXPECT_NEAR(mass, 1.0, 1e-6) << pred << " " << sigma;
    }
}

TEST(Lognormal, ImpliedMeanEqualsPrediction) {
    using boost::math::quadrature::gauss_kronrod;
    for (auto [pred, sigma] : {std::pair{10.0, 0.5}, {2.0, 0.3}, {1.0, 1.5}}) {
        auto f = [&](double y) { return y > 0.0 ? y * std::exp(lognormal_loglik(y, pred, sigma)) : 0.0; };
        const double mean = gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13);
        EXPECT_NEAR(mean / pred, 1.0, 1e-6);
        // Closed form: exp(eta + zeta^2 / 2) with the density's own eta, zeta.
        const double zeta2 = std::log1p((sigma / pred) * (sigma / pred));
        const double eta = std::log(pred) - 0.5 * zeta2;
        EXPECT_NEAR(std::exp(eta + 0.5 * zeta2), pred, 1e-14 * pred);
    }
}

TEST(Lognormal, RejectsBadInput) {
    EXPECT_THROW(lognormal_loglik(0.0, 1.0, 0.1), std::domain_error);
    EXPECT_THROW(lognormal_loglik(1.0, 1.0, 0.0), std::domain_error);
}

TEST(Gaussian, ZeroResidual) {
    EXPECT_NEAR(gaussian_loglik(1.7, 1.7, 0.3), -0.5 * std::log(2 * std::numbers::pi * 0.09), 1e-15);
}

TEST(Gaussian, UnitResidual) { EXPECT_NEAR(gaussian_loglik(2.0, 1.0, 1.0), -1.41893853320467, 1e-12); }

TEST(Gaussian, Symmetric) { EXPECT_EQ(gaussian_loglik(1.0 + 0.3, 1.0, 0.2), gaussian_loglik(1.0 - 0.3, 1.0, 0.2)); }

TEST(Gaussian, IntegratesToOne) {
    using boost::math::quadrature::gauss_kronrod;
    auto f = [](double y) { return std::exp(gaussian_loglik(y, 1.8, 0.02)); };
    EXPECT_NEAR((gauss_kronrod<double, 61>::integrate(f, 1.0, 2.6, 15, 1e-13)), 1.0, 1e-6);
}

TEST(Gaussian, RejectsNonPositiveSigma) { EXPECT_THROW(gaussian_loglik(1, 1, -1), std::domain_error); }

TEST(HierPrior, DiagonalFactorizes) {
    const auto p = psi2(0.0);
    const std::vector<double> x{1.0, 1.1, 0.1};
    auto uni = [](double v, double m, double s) {
        return -0.5 * std::log(2 * std::numbers::pi) - std::log(s) - 0.5 * ((v - m) / s) * ((v - m) / s);
    };
    const double mass = normal_cdf((0.2 - 0.08) / 0.05) - normal_cdf(-0.08 / 0.05);
    const double ref = uni(1.0, 1.1, 0.12) + uni(1.1, 1.05, 0.05) + uni(0.1, 0.08, 0.05) - std::log(mass);
    EXPECT_NEAR(hier_prior_logpdf(ParameterVector::from_point(x), p, 0.2), ref, 1e-12);
}

TEST(HierPrior, StandardizedModeValue) {
    HyperParameters p;
    p.mu0 = {1.0, 2.0, 3.0};
    p.sd0 = {1.0, 1.0, 1.0};
    p.mu_sigma = 0.1;
    p.sd_sigma = 0.1;
    const HierarchicalPrior prior(p, 0.4);
    const std::vector<double> at_mode{1.0, 2.0, 3.0, 0.15};
    const double z = 0.5;
    const double mass = normal_cdf(3.0) - normal_cdf(-1.0);
    const double sigma_part = -0.5 * std::log(2 * std::numbers::pi) - std::log(0.1) - 0.5 * z * z - std::log(mass);
    EXPECT_NEAR(prior(at_mode), -1.5 * std::log(2 * std::numbers::pi) + sigma_part, 1e-12);
}

TEST(HierPrior, CorrelatedMatchesExplicitMatrixAlgebra) {
    const auto p = psi2(0.6);
    for (const auto& x : std::vector<std::vector<double>>{{1.0, 1.1, 0.1}, {1.3, 0.95, 0.02}, {0.7, 1.2, 0.19}}) {
        const double v = hier_prior_logpdf(ParameterVector::from_point(x), p, 0.2);
        EXPECT_NEAR(v, log(brute_prior(x, p, 0.2)).convert_to<double>(), 1e-11);
    }
}

TEST(HierPrior, SigmaOutsideTruncationIsNegInf) {
    const auto p = psi2();
    EXPECT_EQ(hier_prior_logpdf({{1.0, 1.0}, 0.25}, p, 0.2), kNegInf);
    EXPECT_EQ(hier_prior_logpdf({{1.0, 1.0}, 0.0}, p, 0.2), kNegInf);
    EXPECT_EQ(hier_prior_logpdf({{1.0, 1.0}, -0.1}, p, 0.2), kNegInf);
}

TEST(HierPrior, InvalidRhoThrows) {
    EXPECT_THROW(hier_prior_logpdf({{1.0, 1.0}, 0.1}, psi2(1.0), 0.2), std::invalid_argument);
}

TEST(HierPrior, NeverNaNInsideSupport) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-50, 50), us(1e-9, 0.2);
    const HierarchicalPrior prior(psi2(0.9), 0.2);
    for (int i = 0; i < 2000; ++i) {
        const std::vector<double> x{u(rng), u(rng), us(rng)};
        EXPECT_FALSE(std::isnan(prior(x)));
    }
}

TEST(HyperTarget, SingleDatasetSingleSampleReduces) {
    const auto p = psi2();
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Diagonal);
    const std::vector<SampleSet> s{stage1_set({{1.0, 1.1, 0.1}})};
    const double v = hyper_posterior_logtarget(p, s, bounds, 0.2);
    const double ref = bounds.log_density(p.pack()) + hier_prior_logpdf({{1.0, 1.1}, 0.1}, p, 0.2);
    EXPECT_NEAR(v, ref, 1e-12);
}

TEST(HyperTarget, MatchesBruteForceSummation) {
    for (auto cov : {CovarianceCase::Diagonal, CovarianceCase::Correlated}) {
        const auto p = cov == CovarianceCase::Correlated ? psi2(0.4) : psi2();
        const auto bounds = HyperPriorBounds::crack_defaults(cov);
        const std::vector<std::vector<std::vector<double>>> rows{
            {{1.0, 1.1, 0.1}, {1.2, 1.0, 0.05}, {1.05, 1.02, 0.12}},
            {{0.9, 1.08, 0.07}, {1.3, 1.01, 0.15}},
            {{1.1, 1.05, 0.08}, {1.12, 1.06, 0.09}, {1.0, 1.0, 0.1}, {0.95, 1.1, 0.03}, {1.2, 1.0, 0.11}}};
        std::vector<SampleSet> sets;
        for (const auto& r : rows) sets.push_back(stage1_set(r));
        F50 total = 0;
        for (const auto& r : rows) {
            F50 s = 0;
            for (const auto& x : r) s += brute_prior(x, p, 0.2);
            total += log(s / r.size());
        }
        F50 lp = 0;
        for (const auto& b : bounds.bounds) lp -= log(F50(b.width()));
        const double ref = (total + lp).convert_to<double>();
        EXPECT_NEAR(hyper_posterior_logtarget(p, sets, bounds, 0.2), ref, 1e-10);
    }
}

TEST(HyperTarget, DuplicatingSamplesLeavesValueUnchanged) {
    const auto p = psi2();
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Diagonal);
    const std::vector<std::vector<double>> r{{1.0, 1.1, 0.1}, {1.2, 1.0, 0.05}, {1.05, 1.02, 0.12}};
    std::vector<std::vector<double>> doubled = r;
    doubled.insert(doubled.end(), r.begin(), r.end());
    const std::vector<SampleSet> a{stage1_set(r)}, b{stage1_set(doubled)};
    EXPECT_NEAR(hyper_posterior_logtarget(p, a, bounds, 0.2), hyper_posterior_logtarget(p, b, bounds, 0.2), 1e-12);
}

TEST(HyperTarget, ExactlyInvariantUnderDatasetPermutation) {
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Correlated);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0, 0.05);
    std::vector<SampleSet> sets;
    for (int i = 0; i < 5; ++i) {
        std::vector<std::vector<double>> r;
        for (int k = 0; k < 7; ++k) r.push_back({1.1 + n(rng), 1.05 + n(rng) / 5, 0.1 + n(rng) / 2});
        sets.push_back(stage1_set(r));
    }
    const HyperPosteriorTarget t1(sets, bounds, 0.2);
    std::vector<SampleSet> shuffled = sets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const HyperPosteriorTarget t2(shuffled, bounds, 0.2);
    const std::vector<double> psi{1.1, 1.05, 0.1, 0.1, 0.03, 0.05, 0.3};
    EXPECT_EQ(t1(psi), t2(psi));
}

TEST(HyperTarget, InvariantUnderWithinSetPermutation) {
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Diagonal);
    const std::vector<std::vector<double>> r{{1.0, 1.1, 0.1}, {1.2, 1.0, 0.05}, {1.05, 1.02, 0.12}};
    const std::vector<std::vector<double>> rr{r[2], r[0], r[1]};
    const std::vector<SampleSet> a{stage1_set(r)}, b{stage1_set(rr)};
    const auto p = psi2();
    EXPECT_NEAR(hyper_posterior_logtarget(p, a, bounds, 0.2), hyper_posterior_logtarget(p, b, bounds, 0.2), 1e-13);
}

TEST(HyperTarget, OutsideBoundsIsNegInf) {
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Diagonal);
    const std::vector<SampleSet> s{stage1_set({{1.0, 1.1, 0.1}})};
    const HyperPosteriorTarget t(s, bounds, 0.2);
    EXPECT_EQ(t(std::vector<double>{1.5, 1.0, 0.1, 0.1, 0.05, 0.05}), kNegInf);
    EXPECT_EQ(t(std::vector<double>{1.1, 1.0, 0.1, -0.01, 0.05, 0.05}), kNegInf);
}

TEST(HyperTarget, EmptySampleSetThrows) {
    const auto bounds = HyperPriorBounds::crack_defaults(CovarianceCase::Diagonal);
    const std::vector<SampleSet> s{SampleSet({"theta1", "theta2", "sigma"})};
    EXPECT_THROW(HyperPosteriorTarget(s, bounds, 0.2), std::invalid_argument);
}

TEST(Bounds, CorrelatedOnlyForTwoParameters) {
    EXPECT_THROW(HyperPriorBounds::defaults_for(ModelFamily::BatteryDouble, CovarianceCase::Correlated), DataError);
    EXPECT_NO_THROW(HyperPriorBounds::defaults_for(ModelFamily::Paris, CovarianceCase::Correlated));
}

TEST(Layout, LabelsRoundTrip) {
    const HyperLayout l{4, CovarianceCase::Diagonal};
    EXPECT_EQ(HyperLayout::from_labels(l.labels()).dim, 4u);
    const HyperLayout c{2, CovarianceCase::Correlated};
    EXPECT_EQ(HyperLayout::from_labels(c.labels()).cov, CovarianceCase::Correlated);
    EXPECT_THROW(HyperLayout::from_labels({"a", "b", "c", "d"}), DataError);
}

TEST(Mixture, SingleComponentReducesToHierPrior) {
    const auto p = psi2(0.3);
    SampleSet hyper(p.layout().labels());
    hyper.push_back(p.pack());
    const ParameterVector x{{1.05, 1.07}, 0.09};
    EXPECT_NEAR(mixture_prior_logpdf(x, hyper, 0.2), hier_prior_logpdf(x, p, 0.2), 1e-13);
}

TEST(Mixture, RepeatedComponentsEqualSingle) {
    const auto p = psi2();
    SampleSet one(p.layout().labels()), many(p.layout().labels());
    one.push_back(p.pack());
    for (int i = 0; i < 7; ++i) many.push_back(p.pack());
    const ParameterVector x{{1.05, 1.07}, 0.09};
    EXPECT_NEAR(mixture_prior_logpdf(x, one, 0.2), mixture_prior_logpdf(x, many, 0.2), 1e-13);
}

TEST(Mixture, ThreeComponentsMatchBruteForce) {
    std::vector<HyperParameters> comps{psi2(), psi2(0.5), psi2(-0.2)};
    comps[1].mu0 = {0.9, 1.1};
    comps[2].sd0 = {0.3, 0.02};
    comps[2].mu_sigma = 0.15;
    SampleSet hyper(comps[1].layout().labels());
    for (auto& c : comps) {
        if (!c.rho) c.rho = 0.0;
        hyper.push_back(c.pack());
    }
    const std::vector<double> x{1.0, 1.08, 0.11};
    F50 s = 0;
    for (const auto& c : comps) s += brute_prior(x, c, 0.2);
    const double ref = log(s / 3).convert_to<double>();
    EXPECT_NEAR(mixture_prior_logpdf(ParameterVector::from_point(x), hyper, 0.2), ref, 1e-12);
}

TEST(Mixture, PermutationInvariant) {
    std::vector<HyperParameters> comps{psi2(0.0), psi2(0.5), psi2(-0.2)};
    comps[1].mu0 = {0.9, 1.1};
    SampleSet a(comps[0].layout().labels()), b(comps[0].layout().labels());
    for (int i : {0, 1, 2}) a.push_back(comps[i].pack());
    for (int i : {2, 0, 1}) b.push_back(comps[i].pack());
    const ParameterVector x{{1.0, 1.08}, 0.11};
    EXPECT_NEAR(mixture_prior_logpdf(x, a, 0.2), mixture_prior_logpdf(x, b, 0.2), 1e-13);
}

TEST(Mixture, EmptyHyperSetRejected) {
    SampleSet empty(psi2().layout().labels());
    EXPECT_THROW(MixturePrior(empty, 0.2), std::invalid_argument);
}

TEST(Mixture, AncestralDrawsStayInSupport) {
    const auto p = psi2();
    SampleSet hyper(p.layout().labels());
    hyper.push_back(p.pack());
    const MixturePrior m(hyper, 0.2);
    Rng rng = make_stream(3);
    for (int i = 0; i < 1000; ++i) {
        const auto x = m.draw(rng);
        EXPECT_GT(x[2], 0.0);
        EXPECT_LT(x[2], 0.2);
    }
}

TEST(CurrentTarget, ComposesLikelihoodAndMixture) {
    const auto p = psi2();
    SampleSet hyper(p.layout().labels());
    hyper.push_back(p.pack());
    auto q = p;
    q.mu0 = {1.2, 1.0};
    hyper.push_back(q.pack());

    Dataset d;
    d.id = "C";
    d.meta.family = ModelFamily::Paris;
    d.meta.geometry = CrackGeometry{9.0, 0.0, 40.0};
    d.meta.loading = LoadingSpec::constant(78.0);
    d.points = {{1000, 9.5}, {3000, 10.8}};
    const DegradationModel model(ModelFamily::Paris);
    const ParameterVector x{{1.05, 1.1}, 0.1};
    const DegradationModel bound = bind_model(model, d.meta);
    double ll = 0.0;
    for (const auto& o : d.points)
        ll += lognormal_loglik(o.value, *bound.evaluate(x.theta, static_cast<double>(o.cycle)), 0.1);
    const double ref = ll + mixture_prior_logpdf(x, hyper, 0.2);
    EXPECT_NEAR(current_posterior_logtarget(x, d, hyper, model, 0.2), ref, 1e-12);
}

TEST(CurrentTarget, DivergenceIsNegInfNotNaN) {
    Dataset d;
    d.id = "C";
    d.meta.family = ModelFamily::Paris;
    d.meta.geometry = CrackGeometry{9.0, 0.0, 40.0};
    d.meta.loading = LoadingSpec::constant(400.0);
    d.points = {{1000000, 9.5}};
    const DegradationModel model(ModelFamily::Paris);
    const DegradationModel bound = bind_model(model, d.meta);
    const std::vector<double> x{2.0, 0.6, 0.1};
    const double v = dataset_loglik(d, bound, x);
    EXPECT_EQ(v, kNegInf);
}

TEST(CurrentTarget, EmptyDataEqualsMixturePrior) {
    const auto p = psi2();
    SampleSet hyper(p.layout().labels());
    hyper.push_back(p.pack());
    Dataset d;
    d.id = "C";
    d.meta.family = ModelFamily::Paris;
    d.meta.geometry = CrackGeometry{9.0, 0.0, 40.0};
    d.meta.loading = LoadingSpec::constant(78.0);
    const ParameterVector x{{1.05, 1.1}, 0.1};
    EXPECT_NEAR(current_posterior_logtarget(x, d, hyper, DegradationModel(ModelFamily::Paris), 0.2),
                mixture_prior_logpdf(x, hyper, 0.2), 1e-13);
}
