#include "hbm/error.hpp"
#include "hbm/samplers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace hbm;

namespace {

TargetSpec gaussian_2d(double rho) {
    TargetSpec t;
    t.id = "gauss2";
    t.labels = {"x", "y"};
    t.log_target = [rho](std::span<const double> p) {
        const double q = (p[0] * p[0] - 2 * rho * p[0] * p[1] + p[1] * p[1]) / (1 - rho * rho);
        return -0.5 * q;
    };
    t.support = TargetSpec::unbounded(2);
    return t;
}

SamplerConfig cfg(std::size_t n, std::uint64_t seed) {
    SamplerConfig c;
    c.n_samples = n;
    c.seed = seed;
    c.threads = 1;
    return c;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// N(0, 1) prior with likelihood N(y | x, s^2): Z = N(y | 0, 1 + s^2).
TemperingProblem conjugate(double y, double s) {
    TemperingProblem p;
    p.id = "conj";
    p.labels = {"x"};
    p.sample_prior = [](Rng& rng) { return std::vector<double>{std::normal_distribution<double>(0, 1)(rng)}; };
    p.log_prior = [](std::span<const double> x) { return -0.5 * x[0] * x[0] - 0.5 * std::log(2 * std::numbers::pi); };
    p.log_likelihood = [y, s](std::span<const double> x) {
        const double r = (y - x[0]) / s;
        return -0.5 * r * r - std::log(s) - 0.5 * std::log(2 * std::numbers::pi);
    };
    return p;
}

}  // namespace

TEST(Slice, StandardNormalMarginalsPassKs) {
    const auto s = slice_sample(gaussian_2d(0.0), std::vector<double>{0.0, 0.0}, cfg(4000, 1));
    ASSERT_EQ(s.size(), 4000u);
    for (std::size_t j = 0; j < 2; ++j) {
        auto col = s.column(j);
        const double tau = std::max(1.0, oracle::autocorr_time(col));
        const double n_eff = 4000.0 / tau;
        // Critical value at 0.1% scaled by the effective size.
        EXPECT_LT(oracle::ks_statistic(col, phi), 1.95 / std::sqrt(n_eff));
        EXPECT_NEAR(oracle::mean(col), 0.0, 4.0 / std::sqrt(n_eff));
        EXPECT_NEAR(oracle::variance(col), 1.0, 0.15);
    }
}

TEST(Slice, RecoversStrongCorrelation) {
    const auto s = slice_sample(gaussian_2d(0.95), std::vector<double>{0.0, 0.0}, cfg(4000, 2));
    EXPECT_NEAR(oracle::correlation(s.column(0), s.column(1)), 0.95, 0.03);
}

TEST(Slice, AdaptationOffStillSamplesCorrectly) {
    auto c = cfg(4000, 3);
    c.slice_adapt = false;
    const auto s = slice_sample(gaussian_2d(0.5), std::vector<double>{0.0, 0.0}, c);
    EXPECT_NEAR(oracle::correlation(s.column(0), s.column(1)), 0.5, 0.08);
    EXPECT_NEAR(oracle::variance(s.column(0)), 1.0, 0.15);
}

TEST(Slice, StaysInsideBoxSupportAndIsUniform) {
    TargetSpec t;
    t.id = "box";
    t.labels = {"u", "v"};
    t.log_target = [](std::span<const double>) { return 0.0; };
    t.support = {{-1.0, 2.0}, {0.0, 0.5}};
    const auto s = slice_sample(t, std::vector<double>{0.5, 0.25}, cfg(3000, 4));
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_GE(s.row(i)[0], -1.0);
        EXPECT_LE(s.row(i)[0], 2.0);
        EXPECT_GE(s.row(i)[1], 0.0);
        EXPECT_LE(s.row(i)[1], 0.5);
    }
    EXPECT_LT(oracle::ks_statistic(s.column(0), [](double x) { return (x + 1.0) / 3.0; }), 0.06);
}

TEST(Slice, TruncatedTargetMatchesHalfNormal) {
    TargetSpec t;
    t.id = "half";
    t.labels = {"x"};
    t.log_target = [](std::span<const double> p) { return p[0] < 0.0 ? kNegInf : -0.5 * p[0] * p[0]; };
    t.support = TargetSpec::unbounded(1);
    const auto s = slice_sample(t, std::vector<double>{0.5}, cfg(4000, 5));
    auto col = s.column(0);
    for (double x : col) EXPECT_GE(x, 0.0);
    EXPECT_NEAR(oracle::mean(col), std::sqrt(2.0 / std::numbers::pi), 0.05);
}

TEST(Slice, SameSeedSameDraws) {
    const auto a = slice_sample(gaussian_2d(0.3), std::vector<double>{0.0, 0.0}, cfg(500, 7));
    const auto b = slice_sample(gaussian_2d(0.3), std::vector<double>{0.0, 0.0}, cfg(500, 7));
    const auto c = slice_sample(gaussian_2d(0.3), std::vector<double>{0.0, 0.0}, cfg(500, 8));
    EXPECT_EQ(a.data(), b.data());
    EXPECT_NE(a.data(), c.data());
}

TEST(Slice, ThinningKeepsRequestedCount) {
    auto c = cfg(300, 9);
    c.thin = 5;
    const auto s = slice_sample(gaussian_2d(0.0), std::vector<double>{0.0, 0.0}, c);
    EXPECT_EQ(s.size(), 300u);
    EXPECT_EQ(s.provenance.sampler, "slice");
    EXPECT_EQ(s.provenance.seed, 9u);
}

TEST(Slice, ThinningReducesAutocorrelation) {
    auto c1 = cfg(2000, 10);
    c1.slice_adapt = false;
    auto c5 = c1;
    c5.thin = 5;
    const auto a = slice_sample(gaussian_2d(0.9), std::vector<double>{0.0, 0.0}, c1);
    const auto b = slice_sample(gaussian_2d(0.9), std::vector<double>{0.0, 0.0}, c5);
    EXPECT_LT(oracle::autocorr_time(b.column(0)), oracle::autocorr_time(a.column(0)));
}

TEST(Slice, NonFiniteInitialPointThrows) {
    TargetSpec t = gaussian_2d(0.0);
    t.log_target = [](std::span<const double> p) { return p[0] > 0 ? 0.0 : kNegInf; };
    EXPECT_THROW(slice_sample(t, std::vector<double>{-1.0, 0.0}, cfg(10, 1)), std::invalid_argument);
}

TEST(Slice, InitialPointOutsideSupportThrows) {
    TargetSpec t = gaussian_2d(0.0);
    t.support = {{0.0, 1.0}, {0.0, 1.0}};
    EXPECT_THROW(slice_sample(t, std::vector<double>{2.0, 0.5}, cfg(10, 1)), std::invalid_argument);
}

TEST(Slice, StepOutBudgetExhaustionIsNumericalError) {
    TargetSpec t;
    t.id = "flat";
    t.labels = {"x"};
    t.log_target = [](std::span<const double>) { return 0.0; };
    t.support = TargetSpec::unbounded(1);
    auto c = cfg(10, 1);
    c.max_step_out = 5;
    EXPECT_THROW(slice_sample(t, std::vector<double>{0.0}, c), NumericalError);
}

TEST(Config, ValidationRejectsBadValues) {
    SamplerConfig c;
    c.burn_in = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SamplerConfig{};
    c.thin = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = SamplerConfig{};
    c.tmcmc_target_cov = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, CanonicalFormTracksSettings) {
    SamplerConfig a, b;
    EXPECT_EQ(a.canonical(), b.canonical());
    b.slice_adapt = false;
    EXPECT_NE(a.canonical(), b.canonical());
}

TEST(Tmcmc, ConjugateEvidenceAndPosterior) {
    const double y = 1.5, s = 0.5;
    auto c = cfg(2000, 11);
    const auto out = tmcmc(conjugate(y, s), c);
    ASSERT_TRUE(out.evidence);
    const double v = 1.0 + s * s;
    const double log_z = -0.5 * y * y / v - 0.5 * std::log(2 * std::numbers::pi * v);
    EXPECT_NEAR(out.evidence->log_evidence, log_z, std::max(0.05, 4 * out.evidence->std_error));
    const double post_var = 1.0 / (1.0 + 1.0 / (s * s));
    const double post_mean = post_var * y / (s * s);
    auto col = out.column(0);
    EXPECT_NEAR(oracle::mean(col), post_mean, 0.05);
    EXPECT_NEAR(oracle::variance(col), post_var, 0.04);
}

TEST(Tmcmc, BetaScheduleIsIncreasingToOne) {
    TmcmcTrace trace;
    tmcmc(conjugate(2.0, 0.1), cfg(1000, 12), &trace);
    ASSERT_GE(trace.betas.size(), 2u);
    for (std::size_t i = 1; i < trace.betas.size(); ++i) EXPECT_GT(trace.betas[i], trace.betas[i - 1]);
    EXPECT_EQ(trace.betas.back(), 1.0);
}

TEST(Tmcmc, SharperLikelihoodNeedsMoreStages) {
    TmcmcTrace wide, sharp;
    tmcmc(conjugate(0.5, 1.0), cfg(1000, 13), &wide);
    tmcmc(conjugate(0.5, 0.01), cfg(1000, 13), &sharp);
    EXPECT_GT(sharp.betas.size(), wide.betas.size());
}

TEST(Tmcmc, ThreadCountDoesNotChangeDraws) {
    auto c1 = cfg(800, 14);
    auto c4 = c1;
    c4.threads = 4;
    const auto a = tmcmc(conjugate(1.0, 0.3), c1);
    const auto b = tmcmc(conjugate(1.0, 0.3), c4);
    EXPECT_EQ(a.data(), b.data());
    EXPECT_EQ(a.evidence->log_evidence, b.evidence->log_evidence);
}

TEST(Tmcmc, ZeroLikelihoodEverywhereIsNumericalError) {
    auto p = conjugate(0.0, 1.0);
    p.log_likelihood = [](std::span<const double>) { return kNegInf; };
    EXPECT_THROW(tmcmc(p, cfg(100, 1)), NumericalError);
}
