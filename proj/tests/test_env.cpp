#include "polymerlab/env.hpp"
#include "polymerlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace polymer;

namespace {

// Composite Simpson rule on [lo, hi] with n (even) intervals.
template <class F>
double simpson(F f, double lo, double hi, int n)
{
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
    return s * h / 3.0;
}

double mgf_by_quadrature(const EnvModel& env, double beta)
{
    switch (env.family()) {
    case EnvFamily::standard_gaussian:
        return simpson([&](double x) { return std::exp(beta * x - 0.5 * x * x) / std::sqrt(2.0 * M_PI); }, -40.0,
                       40.0, 1000000);
    case EnvFamily::two_point:
        return env.p() * std::exp(beta * env.a()) + (1.0 - env.p()) * std::exp(beta * env.b());
    case EnvFamily::uniform:
        return simpson([&](double x) { return std::exp(beta * x); }, env.lo(), env.hi(), 1000000) /
               (env.hi() - env.lo());
    }
    return 0.0;
}

} // namespace

TEST(Env, LogMgfClosedForms)
{
    EXPECT_DOUBLE_EQ(log_mgf(EnvModel::gaussian(), 1.0), 0.5);
    EXPECT_DOUBLE_EQ(log_mgf(EnvModel::two_point(-1, 1, 0.5), 0.0), 0.0);
    EXPECT_NEAR(log_mgf(EnvModel::uniform(0, 1), 2.0), 1.16143, 1e-5);
    EXPECT_NEAR(log_mgf(EnvModel::uniform(0, 1), 2.0), std::log(mgf_by_quadrature(EnvModel::uniform(0, 1), 2.0)),
                1e-12);
}

TEST(Env, LogMgfMatchesNumericalIntegral)
{
    const std::vector<EnvModel> envs{EnvModel::gaussian(), EnvModel::two_point(-1, 2, 0.3),
                                     EnvModel::uniform(-0.5, 1.5)};
    for (const auto& env : envs) {
        for (double beta : {0.0, 1e-9, 0.05, 0.3, 1.0, 2.5, 5.0}) {
            const double exact = std::exp(log_mgf(env, beta));
            const double num = mgf_by_quadrature(env, beta);
            EXPECT_NEAR(exact / num, 1.0, 1e-8) << env.describe() << " beta " << beta;
        }
        EXPECT_EQ(log_mgf(env, 0.0), 0.0);
    }
}

TEST(Env, UniformSmallBetaSeries)
{
    const auto env = EnvModel::uniform(1.0, 3.0);
    const double b = 5e-9;
    EXPECT_NEAR(log_mgf(env, b), b * 2.0 + b * b * 4.0 / 24.0, 1e-20);
    EXPECT_TRUE(std::isfinite(log_mgf(env, 700.0)));
}

TEST(Env, NegativeBetaRejected)
{
    EXPECT_THROW(log_mgf(EnvModel::gaussian(), -0.1), ConfigError);
    EXPECT_THROW(log_mgf(EnvModel::uniform(0, 1), -1.0), ConfigError);
    EXPECT_THROW(overlap_factor(EnvModel::gaussian(), -1.0), ConfigError);
}

TEST(Env, ParameterValidation)
{
    EXPECT_THROW(EnvModel::two_point(1, 0, 0.5), ConfigError);
    EXPECT_THROW(EnvModel::two_point(0, 1, 1.5), ConfigError);
    EXPECT_THROW(EnvModel::uniform(1, 1), ConfigError);
    EXPECT_TRUE(EnvModel::two_point(0.5, 0.5, 0.3).degenerate());
    EXPECT_FALSE(EnvModel::two_point(0, 1, 0.3).degenerate());
}

TEST(Env, DegenerateTwoPointDraws)
{
    RandomStream rng(1);
    const auto all_b = EnvModel::two_point(0, 1, 0.0);
    const auto all_a = EnvModel::two_point(0, 1, 1.0);
    for (int i = 0; i < 10000; ++i) {
        ASSERT_EQ(sample_env(all_b, rng), 1.0);
        ASSERT_EQ(sample_env(all_a, rng), 0.0);
    }
}

TEST(Env, GaussianSampleMean)
{
    RandomStream rng(2);
    const int n = 100000;
    Moments m;
    for (int i = 0; i < n; ++i) m.add(sample_env(EnvModel::gaussian(), rng));
    EXPECT_NEAR(m.mean(), 0.0, 4.0 / std::sqrt(n));
}

TEST(Env, UniformSupport)
{
    RandomStream rng(3);
    const auto env = EnvModel::uniform(0, 1);
    for (int i = 0; i < 100000; ++i) {
        const double w = sample_env(env, rng);
        ASSERT_GE(w, 0.0);
        ASSERT_LE(w, 1.0);
        const double t = sample_tilted(env, 3.0, rng);
        ASSERT_GE(t, 0.0);
        ASSERT_LE(t, 1.0);
    }
}

TEST(Env, ZeroTiltMatchesBaseLaw)
{
    const std::vector<EnvModel> envs{EnvModel::gaussian(), EnvModel::two_point(-1, 2, 0.3),
                                     EnvModel::uniform(-0.5, 1.5)};
    for (const auto& env : envs) {
        RandomStream base(10);
        RandomStream tilt(11);
        std::vector<double> a;
        std::vector<double> b;
        for (int i = 0; i < 100000; ++i) {
            a.push_back(sample_env(env, base));
            b.push_back(sample_tilted(env, 0.0, tilt));
        }
        EXPECT_GT(ks_two_sample(a, b).p_value, 1e-3) << env.describe();
    }
}

TEST(Env, GaussianTiltShiftsMean)
{
    RandomStream rng(4);
    const int n = 100000;
    Moments m;
    for (int i = 0; i < n; ++i) m.add(sample_tilted(EnvModel::gaussian(), 0.7, rng));
    EXPECT_NEAR(m.mean(), 0.7, 4.0 / std::sqrt(n));
}

TEST(Env, TwoPointTiltFrequency)
{
    RandomStream rng(5);
    const auto env = EnvModel::two_point(0, 1, 0.5);
    const int n = 100000;
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += sample_tilted(env, 1.0, rng) == 1.0;
    const double p = std::exp(1.0) / (1.0 + std::exp(1.0));
    EXPECT_NEAR(p, 0.73106, 1e-5);
    EXPECT_NEAR(ones / double(n), p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Env, TiltedUniformMatchesTiltedCdf)
{
    const auto env = EnvModel::uniform(-1, 2);
    for (double beta : {0.4, 3.0, 40.0}) {
        RandomStream rng(6);
        std::vector<double> xs;
        for (int i = 0; i < 100000; ++i) xs.push_back(sample_tilted(env, beta, rng));
        const auto ks = ks_one_sample(xs, [&](double x) { return env.tilted_cdf(beta, x); });
        EXPECT_GT(ks.p_value, 1e-3) << "beta " << beta;
    }
}

TEST(Env, WeightsHaveMeanOne)
{
    const std::vector<EnvModel> envs{EnvModel::gaussian(), EnvModel::two_point(-1, 2, 0.3),
                                     EnvModel::uniform(-0.5, 1.5)};
    for (const auto& env : envs) {
        const double beta = 0.6;
        const double lambda = log_mgf(env, beta);
        RandomStream rng(7);
        Moments m;
        for (int i = 0; i < 1000000; ++i) m.add(std::exp(beta * sample_env(env, rng) - lambda));
        EXPECT_NEAR(m.mean(), 1.0, 5.0 * m.stderr_mean()) << env.describe();
    }
}

TEST(Env, EnvironmentStreamIsPure)
{
    EnvironmentStream a(EnvModel::gaussian(), 77);
    EnvironmentStream b(EnvModel::gaussian(), 77);
    const int x[3] = {1, -2, 5};
    const int y[3] = {1, -2, 6};
    EXPECT_EQ(a.omega(4, x), b.omega(4, x));
    EXPECT_NE(a.omega(4, x), a.omega(4, y));
    EXPECT_NE(a.omega(4, x), a.omega(5, x));
}

TEST(Env, OverlapFactor)
{
    EXPECT_NEAR(overlap_factor(EnvModel::gaussian(), 0.8), std::exp(0.64), 1e-14);
    EXPECT_DOUBLE_EQ(overlap_factor(EnvModel::two_point(0.3, 0.3, 0.5), 2.0), 1.0);
}
