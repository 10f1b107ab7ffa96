#include "hbm/error.hpp"
#include "hbm/prognostics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace hbm;

namespace {

const CrackGeometry kGeo{9.0, 0.0, 40.0};

DegradationModel paris() { return DegradationModel(ModelFamily::Paris).bind(kGeo, LoadingSpec::constant(78.0)); }

PrognosisConfig crack_cfg(double tc, double horizon = 1e6) {
    PrognosisConfig c;
    c.threshold = 40.0;
    c.current_cycle = tc;
    c.horizon = horizon;
    return c;
}

SampleSet crack_samples(std::size_t n, std::uint64_t seed) {
    SampleSet s({"theta1", "theta2", "sigma"});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> a(1.1, 0.01), b(1.085, 0.002);
    for (std::size_t i = 0; i < n; ++i) s.push_back(std::vector<double>{a(rng), b(rng), 0.05});
    return s;
}

// First integer cycle after tc whose capacity is at or below the floor.
double brute_battery_eol(const DegradationModel& m, std::span<const double> p, double tc, double thr, double horizon) {
    for (double k = std::floor(tc) + 1; k <= horizon; k += 1.0)
        if (*m.evaluate(p, k) <= thr) return k;
    return horizon;
}

}  // namespace

TEST(CrackEol, EqualsClosedFormInverse) {
    const std::vector<double> p{1.1, 1.085, 0.05};
    const double nf = cycles_to_failure({1.1, 1.085}, kGeo, LoadingSpec::constant(78.0));
    const auto e = end_of_life(p, paris(), crack_cfg(1000.0));
    EXPECT_FALSE(e.censored);
    EXPECT_NEAR(e.cycle, nf, 1e-9 * nf);
    const auto a = crack_length({1.1, 1.085}, kGeo, LoadingSpec::constant(78.0), e.cycle);
    EXPECT_NEAR(*a, 40.0, 1e-8);
}

TEST(CrackEol, MatchesOdeCrossing) {
    const std::vector<double> p{1.1, 1.085, 0.05};
    const auto e = end_of_life(p, paris(), crack_cfg(0.0));
    const double a = oracle::paris_ode(2.2, 1.085 * -18.6, 78.0, 9.0, e.cycle);
    EXPECT_NEAR(a, 40.0, 40.0 * 1e-6);
}

TEST(CrackEol, ThresholdBelowInitialLength) {
    auto c = crack_cfg(5000.0);
    c.threshold = 5.0;
    const auto e = end_of_life(std::vector<double>{1.1, 1.085, 0.05}, paris(), c);
    EXPECT_EQ(e.cycle, 5000.0);
    EXPECT_FALSE(e.censored);
}

TEST(CrackEol, FailureBeforeTcIsClampedToTc) {
    const auto e = end_of_life(std::vector<double>{1.1, 1.085, 0.05}, paris(), crack_cfg(9e5, 2e6));
    EXPECT_EQ(e.cycle, 9e5);
}

TEST(CrackEol, BeyondHorizonIsCensored) {
    const auto e = end_of_life(std::vector<double>{1.1, 1.085, 0.05}, paris(), crack_cfg(0.0, 100.0));
    EXPECT_TRUE(e.censored);
    EXPECT_EQ(e.cycle, 100.0);
}

TEST(BatteryEol, ScanAndBisectionFindTheFirstCrossing) {
    const DegradationModel m(ModelFamily::BatteryDouble);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n1(1.0, 0.02), n2(0.25, 0.02), n3(1.0, 0.1), n4(1.0, 0.1);
    for (int i = 0; i < 30; ++i) {
        const std::vector<double> p{n1(rng), n2(rng), n3(rng), n4(rng), 0.01};
        for (std::int64_t stride : {1, 8, 37}) {
            PrognosisConfig c;
            c.threshold = 1.4;
            c.current_cycle = 20.5;
            c.horizon = 2000;
            c.scan_stride = stride;
            const auto e = end_of_life(p, m, c);
            EXPECT_EQ(e.cycle, brute_battery_eol(m, p, 20.5, 1.4, 2000));
        }
    }
}

TEST(BatteryEol, AlreadyBelowFloorGivesTc) {
    const DegradationModel m(ModelFamily::BatteryDouble);
    PrognosisConfig c;
    c.threshold = 1.9;
    c.current_cycle = 50;
    c.horizon = 500;
    EXPECT_EQ(end_of_life(std::vector<double>{1.0, 1.0, 1.0, 1.0, 0.01}, m, c).cycle, 50.0);
}

TEST(BatteryEol, NoCrossingIsCensoredAtHorizon) {
    const DegradationModel m(ModelFamily::ConstantCapacity);
    PrognosisConfig c;
    c.threshold = 1.0;
    c.current_cycle = 10;
    c.horizon = 300;
    const auto e = end_of_life(std::vector<double>{1.0, 0.01}, m, c);
    EXPECT_TRUE(e.censored);
    EXPECT_EQ(e.cycle, 300.0);
}

TEST(Rul, IsEolMinusTcAndSummaryMatchesSamples) {
    const auto s = crack_samples(500, 4);
    const auto r = rul_distribution(s, paris(), crack_cfg(10000.0));
    ASSERT_EQ(r.rul.size(), 500u);
    for (std::size_t i = 0; i < r.rul.size(); ++i) EXPECT_EQ(r.rul[i], r.eol[i] - 10000.0);
    ASSERT_TRUE(r.summary);
    EXPECT_NEAR(r.summary->mean, oracle::mean(r.rul), 1e-9 * r.summary->mean);
    auto sorted = r.rul;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(r.summary->median, quantile_sorted(sorted, 0.5));
    EXPECT_LE(r.summary->lower, r.summary->median);
    EXPECT_GE(r.summary->upper, r.summary->median);
    EXPECT_EQ(r.summary->censored_fraction, 0.0);
    EXPECT_TRUE(r.summary->informative);
}

TEST(Rul, AllCensoredIsUninformative) {
    const auto r = rul_distribution(crack_samples(50, 5), paris(), crack_cfg(0.0, 10.0));
    EXPECT_FALSE(r.summary->informative);
    EXPECT_EQ(r.summary->censored_fraction, 1.0);
}

TEST(Rul, ThreadCountDoesNotMatter) {
    auto c1 = crack_cfg(1000.0);
    auto c4 = c1;
    c4.threads = 4;
    const auto s = crack_samples(200, 6);
    EXPECT_EQ(rul_distribution(s, paris(), c1).eol, rul_distribution(s, paris(), c4).eol);
}

TEST(Bands, QuantilesAreOrderedAndMatchEmpiricalQuantiles) {
    const auto s = crack_samples(400, 7);
    std::vector<double> grid;
    for (double t = 0; t <= 30000; t += 2500) grid.push_back(t);
    const auto r = predict_trajectory(s, paris(), grid, crack_cfg(0.0));
    ASSERT_EQ(r.bands.size(), 3u);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        EXPECT_LE(r.bands[0][g], r.bands[1][g]);
        EXPECT_LE(r.bands[1][g], r.bands[2][g]);
        std::vector<double> col;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto v = crack_length({s.row(i)[0], s.row(i)[1]}, kGeo, LoadingSpec::constant(78.0), grid[g]);
            col.push_back(v ? *v : std::numeric_limits<double>::infinity());
        }
        std::sort(col.begin(), col.end());
        EXPECT_EQ(r.bands[1][g], quantile_sorted(col, 0.5));
    }
    EXPECT_EQ(r.bands[1][0], 9.0);
}

TEST(Bands, DivergedSamplesAreInfinite) {
    SampleSet s({"theta1", "theta2", "sigma"});
    s.push_back(std::vector<double>{1.3, 1.0, 0.05});
    const std::vector<double> grid{0.0, 1e7};
    const auto r = predict_trajectory(s, paris(), grid, crack_cfg(0.0));
    EXPECT_TRUE(std::isinf(r.bands[1][1]));
}

TEST(Bands, ObservationNoiseWidensAndIsReproducible) {
    SampleSet s({"theta1", "theta2", "sigma"});
    for (int i = 0; i < 400; ++i) s.push_back(std::vector<double>{1.1, 1.085, 0.5});
    const std::vector<double> grid{5000.0, 15000.0};
    auto c = crack_cfg(0.0);
    const auto plain = predict_trajectory(s, paris(), grid, c);
    c.include_observation_noise = true;
    c.seed = 9;
    const auto noisy = predict_trajectory(s, paris(), grid, c);
    const auto again = predict_trajectory(s, paris(), grid, c);
    EXPECT_EQ(noisy.bands, again.bands);
    EXPECT_EQ(plain.bands[2][1], plain.bands[0][1]);
    EXPECT_GT(noisy.bands[2][1] - noisy.bands[0][1], 0.5);
}

TEST(Config, RejectsBadSettings) {
    auto c = crack_cfg(100.0, 50.0);
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = crack_cfg(0.0);
    c.quantiles = {0.5, 0.2};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = crack_cfg(0.0);
    c.interval_mass = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, DimensionMismatchIsDataError) {
    SampleSet s({"a", "b"});
    s.push_back(std::vector<double>{1.0, 1.0});
    EXPECT_THROW(rul_distribution(s, paris(), crack_cfg(0.0)), DataError);
}
