#include "polymerlab/errors.hpp"
#include "polymerlab/exact.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace polymer;

namespace {

Site at(std::initializer_list<int> c)
{
    Site s(static_cast<Eigen::Index>(c.size()));
    int i = 0;
    for (int v : c) s[i++] = v;
    return s;
}

// All paths of length n as position lists, with their probabilities.
void all_paths(const WalkKernel& k, int n, std::vector<std::vector<Site>>& paths, std::vector<double>& probs)
{
    paths.assign(1, {origin(k.dim())});
    probs.assign(1, 1.0);
    for (int t = 0; t < n; ++t) {
        std::vector<std::vector<Site>> np;
        std::vector<double> nq;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            for (std::size_t s = 0; s < k.steps().size(); ++s) {
                auto p = paths[i];
                p.push_back(Site(p.back() + k.steps()[s]));
                np.push_back(std::move(p));
                nq.push_back(probs[i] * k.probs()[static_cast<Eigen::Index>(s)]);
            }
        }
        paths = std::move(np);
        probs = std::move(nq);
    }
}

// E[W_n^p] by enumerating every p-tuple of paths and its occupation counts.
double tuple_moment(const WalkKernel& k, const EnvModel& env, double beta, int p, int n)
{
    std::vector<std::vector<Site>> paths;
    std::vector<double> probs;
    all_paths(k, n, paths, probs);
    const double lambda = log_mgf(env, beta);
    std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
    double total = 0;
    for (;;) {
        double w = 1;
        double expo = -p * n * lambda;
        for (std::size_t i : idx) w *= probs[i];
        for (int t = 1; t <= n; ++t) {
            std::map<Site, int, SiteLess> occ;
            for (std::size_t i : idx) ++occ[paths[i][static_cast<std::size_t>(t)]];
            for (const auto& kv : occ) expo += log_mgf(env, beta * kv.second);
        }
        total += w * std::exp(expo);
        int j = p - 1;
        for (; j >= 0; --j) {
            if (++idx[static_cast<std::size_t>(j)] < paths.size()) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
        if (j < 0) break;
    }
    return total;
}

RenewalTable table_for(const WalkKernel& k, int horizon) { return first_collision_law(return_prob_series(k, horizon)); }

} // namespace

TEST(ExactPartition, BetaZeroAndOneStep)
{
    const EnvModel env = EnvModel::gaussian();
    const WalkKernel k = WalkKernel::simple(1);
    const EnvironmentStream s(env, 9);
    const auto table = OmegaTable::from_stream(s, k, 5);
    EXPECT_EQ(exact_partition(table, k, env, 0.0, 5), 1.0);
    const double beta = 0.6;
    const double want =
        (std::exp(beta * table.at(1, at({-1}))) + std::exp(beta * table.at(1, at({1})))) / (2 * std::exp(beta * beta / 2));
    EXPECT_NEAR(exact_partition(table, k, env, beta, 1), want, 1e-15 * want);
}

TEST(ExactPartition, Errors)
{
    const EnvModel env = EnvModel::gaussian();
    const WalkKernel k = WalkKernel::simple(1);
    OmegaTable partial;
    partial.set(1, at({1}), 0.3);
    EXPECT_THROW(exact_partition(partial, k, env, 0.5, 1), ConfigError);
    const auto table = OmegaTable::from_stream(EnvironmentStream(env, 1), WalkKernel::simple(3), 3);
    EnumerationBudget tiny{100};
    EXPECT_THROW(exact_partition(table, WalkKernel::simple(3), env, 0.5, 3, tiny), BudgetExceeded);
}

TEST(ExactPartition, ReachableSites)
{
    const auto r = reachable_sites(WalkKernel::simple(2), 2);
    EXPECT_EQ(r.size(), 9u);
    EXPECT_EQ(reachable_sites(WalkKernel::simple(1), 0).size(), 1u);
    EXPECT_EQ(reachable_sites(WalkKernel::simple(1), 4).size(), 5u);
}

TEST(ExactLaw, TrivialCases)
{
    const EnvModel env = EnvModel::two_point(-1, 1, 0.5);
    for (const auto& law : {exact_law_of_Wn(env, WalkKernel::simple(1), 0.7, 0),
                            exact_law_of_Wn(env, WalkKernel::simple(1), 0.0, 3)}) {
        ASSERT_EQ(law.size(), 1u);
        EXPECT_EQ(law[0].value, 1.0);
        EXPECT_EQ(law[0].probability, 1.0);
    }
    EXPECT_THROW(exact_law_of_Wn(EnvModel::gaussian(), WalkKernel::simple(1), 0.5, 2), ConfigError);
}

TEST(ExactLaw, MeanOneAndSecondMomentMatchesReplica)
{
    for (const auto& env : {EnvModel::two_point(-1, 1, 0.5), EnvModel::two_point(0, 2, 0.3)}) {
        for (const auto& [k, n] : std::vector<std::pair<WalkKernel, int>>{{WalkKernel::simple(1), 2},
                                                                         {WalkKernel::simple(1), 4},
                                                                         {WalkKernel::simple(2), 2}}) {
            const double beta = 0.8;
            const auto law = exact_law_of_Wn(env, k, beta, n);
            double mass = 0, mean = 0, second = 0;
            for (const auto& a : law) {
                mass += a.probability;
                mean += a.probability * a.value;
                second += a.probability * a.value * a.value;
            }
            EXPECT_NEAR(mass, 1.0, 1e-12);
            EXPECT_NEAR(mean, 1.0, 1e-12);
            EXPECT_NEAR(second, replica_moment(k, env, beta, 2, n), 1e-10);
            EXPECT_NEAR(second, tuple_moment(k, env, beta, 2, n), 1e-10);
        }
    }
}

TEST(ExactLaw, SymmetricValuesMerge)
{
    // d = 1, n = 1: W takes three values when the two sites are exchangeable.
    const auto law = exact_law_of_Wn(EnvModel::two_point(-1, 1, 0.5), WalkKernel::simple(1), 0.5, 1);
    ASSERT_EQ(law.size(), 3u);
    EXPECT_NEAR(law[1].probability, 0.5, 1e-15);
}

TEST(Replica, FirstMomentIsOne)
{
    EXPECT_EQ(replica_moment(WalkKernel::simple(2), EnvModel::gaussian(), 0.9, 1, 5), 1.0);
}

TEST(Replica, OneStepThreeDims)
{
    const EnvModel env = EnvModel::gaussian();
    for (double beta : {0.2, 0.5, 1.0}) {
        const double chi = overlap_factor(env, beta);
        EXPECT_NEAR(replica_moment(WalkKernel::simple(3), env, beta, 2, 1), 1 + (chi - 1) / 6, 1e-14);
    }
}

TEST(Replica, AgreesWithRenewal)
{
    for (const auto& env : {EnvModel::gaussian(), EnvModel::two_point(-1, 2, 0.4)}) {
        for (int d : {1, 2}) {
            const WalkKernel k = WalkKernel::simple(d);
            const auto table = table_for(k, 8);
            for (double beta : {0.2, 0.5}) {
                const double chi = overlap_factor(env, beta);
                for (int n = 0; n <= 8; ++n) {
                    const double a = replica_moment(k, env, beta, 2, n);
                    const double b = second_moment_renewal(table, chi, n);
                    EXPECT_NEAR(a, b, 1e-10 * b) << "d " << d << " beta " << beta << " n " << n;
                }
            }
        }
    }
}

TEST(Replica, AgreesWithTupleEnumeration)
{
    const EnvModel env = EnvModel::two_point(-0.5, 1.5, 0.7);
    EXPECT_NEAR(replica_moment(WalkKernel::simple(1), env, 0.7, 3, 4), tuple_moment(WalkKernel::simple(1), env, 0.7, 3, 4),
                1e-11);
    EXPECT_NEAR(replica_moment(WalkKernel::simple(2), env, 0.4, 3, 2), tuple_moment(WalkKernel::simple(2), env, 0.4, 3, 2),
                1e-12);
    const auto nu = WalkKernel::finite(1, {{at({0}), 0.5}, {at({2}), 0.25}, {at({-1}), 0.25}});
    EXPECT_NEAR(replica_moment(nu, EnvModel::gaussian(), 0.6, 2, 5), tuple_moment(nu, EnvModel::gaussian(), 0.6, 2, 5),
                1e-11);
}

TEST(Replica, Budget)
{
    EXPECT_THROW(replica_moment(WalkKernel::simple(3), EnvModel::gaussian(), 0.5, 3, 8, EnumerationBudget{1e4}),
                 BudgetExceeded);
    EXPECT_THROW(replica_moment(WalkKernel::simple(1), EnvModel::gaussian(), 0.5, 0, 3), ConfigError);
}

TEST(Renewal, BaseCases)
{
    const auto table = table_for(WalkKernel::simple(3), 50);
    EXPECT_EQ(second_moment_renewal(table, 1.7, 0), 1.0);
    for (int n : {1, 7, 50}) EXPECT_NEAR(second_moment_renewal(table, 1.0, n), 1.0, 1e-14);
    const double chi = 1.3;
    EXPECT_NEAR(second_moment_renewal(table, chi, 1), 1 + (chi - 1) * table.r[1], 1e-15);
    const auto f = pinning_series(table, chi, 50);
    for (int n = 1; n <= 50; ++n) EXPECT_GE(f[n], f[n - 1]);
    EXPECT_THROW(second_moment_renewal(table, chi, 51), ConfigError);
    EXPECT_THROW(second_moment_renewal(table, 0.5, 3), ConfigError);
}

TEST(Renewal, SubcriticalStaysBounded)
{
    // χπ < 1: f(n) increases to (1 - π) / (1 - χπ).
    const double pi = 0.340537329550;
    const double chi = 0.8 / pi;
    const auto table = table_for(WalkKernel::simple(3), 5000);
    const auto f = pinning_series(table, chi, 5000);
    const double limit = (1 - pi) / (1 - chi * pi);
    EXPECT_LT(f[5000], limit);
    EXPECT_LT(limit - f[5000], 0.05 * limit);
    EXPECT_LT(std::log(f[5000] / f[500]) / std::log(10.0), 0.05);
}

TEST(Beta2, Examples)
{
    const EnvModel g = EnvModel::gaussian();
    const auto one = solve_beta2(WalkKernel::simple(1), g);
    EXPECT_EQ(one.verdict, Beta2Verdict::zero);
    EXPECT_EQ(one.beta2, 0.0);

    const auto three = solve_beta2(WalkKernel::simple(3), g);
    ASSERT_EQ(three.verdict, Beta2Verdict::finite);
    EXPECT_LE(three.residual, 1e-10);
    EXPECT_NEAR(three.beta2, std::sqrt(-std::log(three.pi)), 1e-9);
    EXPECT_NEAR(three.pi, 0.340537329550, 1e-9);
    EXPECT_LE(std::fabs(overlap_factor(g, three.beta2) * three.pi - 1), 1e-10);

    const auto flat = solve_beta2(WalkKernel::simple(3), EnvModel::two_point(0.5, 0.5, 0.5));
    EXPECT_EQ(flat.verdict, Beta2Verdict::infinite);
    EXPECT_TRUE(std::isinf(flat.beta2));
}

TEST(Beta2, BoundedOverlapReportsRange)
{
    // χ = cosh(2β)/cosh²(β) < 2 for the symmetric sign environment.
    const auto r = solve_beta2_with_pi(EnvModel::two_point(-1, 1, 0.5), 0.34);
    EXPECT_EQ(r.verdict, Beta2Verdict::infinite_in_range);
    const auto hit = solve_beta2_with_pi(EnvModel::two_point(-1, 1, 0.5), 0.6);
    ASSERT_EQ(hit.verdict, Beta2Verdict::finite);
    EXPECT_LE(hit.residual, 1e-10);
    // cosh(2β)/cosh²β = 2 - sech²β = 1/0.6
    EXPECT_NEAR(1.0 / std::cosh(hit.beta2), std::sqrt(2 - 1 / 0.6), 1e-9);
}

TEST(GrowthFit, CriticalSlopes)
{
    const auto grid = log_grid(100, 10000, 25);
    {
        const auto k = WalkKernel::simple(3);
        const auto b2 = solve_beta2(k, EnvModel::gaussian());
        const auto table = table_for(k, 10000);
        const auto fit = critical_growth_fit(table, overlap_factor(EnvModel::gaussian(), b2.beta2), grid, b2.pi);
        EXPECT_NEAR(fit.slope, 0.5, 0.05);
    }
    {
        const auto k = WalkKernel::simple(5);
        const auto c = collision_probability(k);
        const auto table = table_for(k, 10000);
        const auto fit = critical_growth_fit(table, 1.0 / c.pi, grid, c.pi);
        EXPECT_NEAR(fit.slope, 1.0, 0.05);
    }
}

TEST(GrowthFit, RejectsBadInput)
{
    const auto table = table_for(WalkKernel::simple(3), 1000);
    EXPECT_THROW(critical_growth_fit(table, 2.0, log_grid(10, 1000, 10), 0.34), ConfigError);
    EXPECT_THROW(critical_growth_fit(table, 1 / 0.34, log_grid(10, 500, 10), 0.34), ConfigError);
    EXPECT_THROW(log_grid(5, 5, 3), ConfigError);
}
