#include "polymerlab/errors.hpp"
#include "polymerlab/spine.hpp"
#include "polymerlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace polymer;

namespace {

double law_expectation(const std::vector<LawAtom>& law, const std::function<double(double)>& g)
{
    double s = 0.0;
    for (const auto& a : law) s += a.probability * g(a.value);
    return s;
}

} // namespace

TEST(SpineExact, MatchesSizeBiasedLaw)
{
    const auto k = WalkKernel::simple(1);
    for (const auto& env : {EnvModel::two_point(-1.0, 2.0, 0.3), EnvModel::two_point(0.0, 1.0, 0.5)}) {
        for (double beta : {0.4, 1.3}) {
            for (int n : {1, 2}) {
                const auto spine = exact_spine_law(env, k, beta, n);
                const auto biased = size_biased_law(exact_law_of_Wn(env, k, beta, n));
                EXPECT_LE(total_variation(spine, biased), 1e-12) << env.describe() << " " << beta << " " << n;
                EXPECT_NEAR(law_expectation(spine, [](double) { return 1.0; }), 1.0, 1e-13);
            }
        }
    }
}

TEST(SpineExact, TotalVariationBasics)
{
    const std::vector<LawAtom> a{{1.0, 0.5}, {2.0, 0.5}};
    const std::vector<LawAtom> b{{1.0, 0.25}, {3.0, 0.75}};
    EXPECT_DOUBLE_EQ(total_variation(a, a), 0.0);
    EXPECT_DOUBLE_EQ(total_variation(a, b), 0.75);
    EXPECT_THROW(exact_spine_law(EnvModel::gaussian(), WalkKernel::simple(1), 0.5, 1), ConfigError);
}

TEST(Spine, BetaZeroGivesUnitPartition)
{
    const auto k = WalkKernel::simple(2);
    for (std::uint64_t id = 0; id < 20; ++id) {
        const auto s = sample_spine(k, EnvModel::gaussian(), 0.0, 6, replica_key(1, id));
        EXPECT_EQ(s.log_w, 0.0);
        EXPECT_EQ(s.path.size(), 7u);
        EXPECT_EQ(s.tilted.size(), 6u);
    }
    EXPECT_EQ(size_biased_expectation(k, EnvModel::gaussian(), 0.0, 6, [](double w) { return w * w; }, 10, 1).value,
              1.0);
}

TEST(Spine, OverrideReplacesOnlySpineSites)
{
    const auto env = EnvModel::gaussian();
    const auto s = sample_spine(WalkKernel::simple(3), env, 0.8, 5, replica_key(3, 4));
    const EnvironmentStream bg(env, s.background_key);
    for (int t = 1; t <= 5; ++t) {
        const Site& x = s.path[static_cast<std::size_t>(t)];
        EXPECT_EQ(s.omega(env, t, x), s.tilted[static_cast<std::size_t>(t) - 1]);
        Site y = x;
        y[0] += 2;
        EXPECT_EQ(s.omega(env, t, y), bg.omega(t, coords(y)));
    }
    for (std::size_t i = 1; i < s.path.size(); ++i) EXPECT_EQ((s.path[i] - s.path[i - 1]).cwiseAbs().sum(), 1);
}

TEST(Spine, InverseMeanIsOne)
{
    const auto recs = spine_records(WalkKernel::simple(3), EnvModel::gaussian(), 0.5, 5, 21, 0, 100000, 1);
    const auto est = spine_estimate(recs, [](double w) { return 1.0 / w; });
    EXPECT_LT(std::fabs(est.value - 1.0), 4 * est.sigma) << est.value << " ± " << est.sigma;
}

TEST(Spine, MinTwoAgreesWithExactLaw)
{
    const auto env = EnvModel::two_point(-1.0, 2.0, 0.3);
    const auto k = WalkKernel::simple(1);
    const double beta = 0.6;
    auto g = [](double w) { return std::min(w, 2.0); };
    const double exact = law_expectation(size_biased_law(exact_law_of_Wn(env, k, beta, 2)), g);
    const auto est = size_biased_expectation(k, env, beta, 2, g, 100000, 5);
    EXPECT_LT(std::fabs(est.value - exact), 4 * est.sigma) << est.value << " vs " << exact;
}

TEST(Spine, BatteryAgreesWithWeightedPlainSamples)
{
    const auto k = WalkKernel::simple(3);
    const auto env = EnvModel::gaussian();
    const auto spine = spine_records(k, env, 0.4, 5, 8, 0, 20000, 1);
    const auto plain = plain_records(k, env, 0.4, 5, 8, 0, 20000, 1);
    for (const auto& [name, g] : spine_battery()) {
        const auto a = spine_estimate(spine, g);
        const auto b = weighted_estimate(plain, g);
        EXPECT_LT(std::fabs(a.value - b.value), 4 * std::hypot(a.sigma, b.sigma)) << name;
    }
}

TEST(Spine, OnSpineValuesFollowTiltedLaw)
{
    const auto env = EnvModel::gaussian();
    const double beta = 0.9;
    std::vector<double> on;
    for (std::uint64_t id = 0; id < 5000; ++id) {
        on.push_back(sample_spine(WalkKernel::simple(1), env, beta, 3, replica_key(2, id)).tilted[2]);
    }
    const auto ks = ks_one_sample(on, [&](double x) { return env.tilted_cdf(beta, x); });
    EXPECT_GT(ks.p_value, 1e-3) << ks.statistic;
    const auto wrong = ks_one_sample(on, [&](double x) { return env.cdf(x); });
    EXPECT_LT(wrong.p_value, 1e-6);
}

TEST(Spine, OffSpineValuesFollowBaseLaw)
{
    const auto env = EnvModel::two_point(-1.0, 1.0, 0.5);
    const double beta = 1.0;
    const Site x0 = origin(1);
    std::vector<double> off;
    for (std::uint64_t id = 0; id < 8000; ++id) {
        const auto s = sample_spine(WalkKernel::simple(1), env, beta, 2, replica_key(6, id));
        if (s.path[2] != x0) off.push_back(s.omega(env, 2, x0));
    }
    ASSERT_GT(off.size(), 3000u);
    double frac_a = 0.0;
    for (double v : off) frac_a += v == -1.0 ? 1.0 : 0.0;
    frac_a /= static_cast<double>(off.size());
    EXPECT_LT(std::fabs(frac_a - 0.5), 4 * std::sqrt(0.25 / static_cast<double>(off.size())));
}
