#include "polymerlab/exact.hpp"

#include "polymerlab/errors.hpp"
#include "polymerlab/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <unordered_map>

namespace polymer {

namespace {

double log_add(double a, double b)
{
    if (a == -INFINITY) return b;
    if (b == -INFINITY) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log Σ over paths continuing from (t, x) to time n.
double path_sum(const OmegaTable& omega, const WalkKernel& kernel, double beta, double lambda, int t, const Site& x,
                int n)
{
    if (t == n) return 0.0;
    double acc = -INFINITY;
    for (std::size_t s = 0; s < kernel.steps().size(); ++s) {
        const Site y = x + kernel.steps()[s];
        const double w = std::log(kernel.probs()[static_cast<Eigen::Index>(s)]) + beta * omega.at(t + 1, y) - lambda;
        acc = log_add(acc, w + path_sum(omega, kernel, beta, lambda, t + 1, y, n));
    }
    return acc;
}

// Per-time site lists and predecessor links for small forward sweeps.
struct Sweep {
    std::vector<std::vector<Site>> sites; // sites[t], t = 0..n
    // links[t][i] = (index at t-1, ν(step)) for site i at time t
    std::vector<std::vector<std::vector<std::pair<int, double>>>> links;

    Sweep(const WalkKernel& kernel, int n)
    {
        for (int t = 0; t <= n; ++t) sites.push_back(reachable_sites(kernel, t));
        links.resize(static_cast<std::size_t>(n) + 1);
        for (int t = 1; t <= n; ++t) {
            const auto& prev = sites[static_cast<std::size_t>(t) - 1];
            std::map<Site, int, SiteLess> where;
            for (std::size_t i = 0; i < prev.size(); ++i) where.emplace(prev[i], static_cast<int>(i));
            auto& lt = links[static_cast<std::size_t>(t)];
            lt.resize(sites[static_cast<std::size_t>(t)].size());
            for (std::size_t i = 0; i < lt.size(); ++i) {
                const Site& x = sites[static_cast<std::size_t>(t)][i];
                for (std::size_t s = 0; s < kernel.steps().size(); ++s) {
                    const auto it = where.find(Site(x - kernel.steps()[s]));
                    if (it != where.end()) lt[i].emplace_back(it->second, kernel.probs()[static_cast<Eigen::Index>(s)]);
                }
            }
        }
    }
};

} // namespace

void EnumerationBudget::charge(double count, const std::string& what) const
{
    if (count > max_objects) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s needs %.3g enumerated objects, above the cap of %.3g", what.c_str(), count,
                      max_objects);
        throw BudgetExceeded(buf);
    }
}

void OmegaTable::set(int time, const Site& x, double omega) { values_[Key{time, x}] = omega; }

double OmegaTable::at(int time, const Site& x) const
{
    const auto it = values_.find(Key{time, x});
    if (it == values_.end()) {
        throw ConfigError("environment table has no entry at time " + std::to_string(time) + ", site " +
                          format_site(x));
    }
    return it->second;
}

std::vector<Site> reachable_sites(const WalkKernel& kernel, int time)
{
    std::set<Site, SiteLess> cur{origin(kernel.dim())};
    for (int t = 0; t < time; ++t) {
        std::set<Site, SiteLess> next;
        for (const Site& x : cur) {
            for (const Site& s : kernel.steps()) next.insert(Site(x + s));
        }
        cur = std::move(next);
    }
    return {cur.begin(), cur.end()};
}

OmegaTable OmegaTable::from_stream(const EnvironmentStream& stream, const WalkKernel& kernel, int n)
{
    OmegaTable table;
    for (int t = 1; t <= n; ++t) {
        for (const Site& x : reachable_sites(kernel, t)) table.set(t, x, stream.omega(t, coords(x)));
    }
    return table;
}

double exact_log_partition(const OmegaTable& omega, const WalkKernel& kernel, const EnvModel& env, double beta,
                           int n, const EnumerationBudget& budget)
{
    if (n < 0) throw ConfigError("horizon must be nonnegative");
    budget.charge(std::pow(static_cast<double>(kernel.steps().size()), n), "path enumeration");
    return path_sum(omega, kernel, beta, log_mgf(env, beta), 0, origin(kernel.dim()), n);
}

double exact_partition(const OmegaTable& omega, const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                       const EnumerationBudget& budget)
{
    return std::exp(exact_log_partition(omega, kernel, env, beta, n, budget));
}

std::vector<LawAtom> exact_law_of_Wn(const EnvModel& env, const WalkKernel& kernel, double beta, int n,
                                     const EnumerationBudget& budget)
{
    if (env.family() != EnvFamily::two_point) throw ConfigError("exact law of W_n needs a two-point environment");
    if (n < 0) throw ConfigError("horizon must be nonnegative");
    if (n == 0 || beta == 0.0 || env.degenerate()) return {{1.0, 1.0}};
    const Sweep sweep(kernel, n);
    int m = 0;
    for (int t = 1; t <= n; ++t) m += static_cast<int>(sweep.sites[static_cast<std::size_t>(t)].size());
    if (m > 62) throw BudgetExceeded("exact law of W_n: " + std::to_string(m) + " environment sites");
    budget.charge(std::ldexp(1.0, m), "environment enumeration");

    const double lambda = log_mgf(env, beta);
    const double xi_a = std::exp(beta * env.a() - lambda);
    const double xi_b = std::exp(beta * env.b() - lambda);
    const double log_pa = std::log(env.p());
    const double log_pb = std::log1p(-env.p());
    std::vector<LawAtom> atoms;
    atoms.reserve(std::size_t{1} << m);
    std::vector<double> prev;
    std::vector<double> cur;
    const std::uint64_t states = std::uint64_t{1} << m;
    for (std::uint64_t mask = 0; mask < states; ++mask) {
        prev.assign(1, 1.0);
        int bit = 0;
        for (int t = 1; t <= n; ++t) {
            const auto& lt = sweep.links[static_cast<std::size_t>(t)];
            cur.assign(lt.size(), 0.0);
            for (std::size_t i = 0; i < lt.size(); ++i) {
                double s = 0.0;
                for (const auto& [j, p] : lt[i]) s += p * prev[static_cast<std::size_t>(j)];
                cur[i] = s * (((mask >> bit) & 1) ? xi_b : xi_a);
                ++bit;
            }
            std::swap(prev, cur);
        }
        double w = 0.0;
        for (double v : prev) w += v;
        const int nb = std::popcount(mask);
        atoms.push_back({w, std::exp((m - nb) * log_pa + nb * log_pb)});
    }
    std::sort(atoms.begin(), atoms.end(), [](const LawAtom& a, const LawAtom& b) { return a.value < b.value; });
    std::vector<LawAtom> merged;
    for (const auto& a : atoms) {
        if (!merged.empty() && a.value - merged.back().value <= 1e-12 * std::fabs(a.value)) {
            merged.back().probability += a.probability;
        } else {
            merged.push_back(a);
        }
    }
    return merged;
}

double replica_moment(const WalkKernel& kernel, const EnvModel& env, double beta, int p, int n,
                      const EnumerationBudget& budget)
{
    if (p < 1) throw ConfigError("replica count p must be at least 1");
    if (n < 0) throw ConfigError("horizon must be nonnegative");
    if (p == 1 || n == 0) return 1.0;

    const double lambda = log_mgf(env, beta);
    std::vector<double> lam_m(static_cast<std::size_t>(p) + 1);
    for (int m = 1; m <= p; ++m) lam_m[static_cast<std::size_t>(m)] = log_mgf(env, beta * m);

    const auto nsteps = static_cast<std::int64_t>(kernel.steps().size());
    double moves = 1.0;
    for (int i = 0; i < p; ++i) moves *= static_cast<double>(nsteps);

    // Positions are indices into the reachable set at the current time; a
    // state is the p-tuple in mixed radix.
    std::vector<Site> sites = reachable_sites(kernel, 0);
    std::unordered_map<std::int64_t, double> weights{{0, 1.0}};
    std::vector<int> pos(static_cast<std::size_t>(p));
    std::vector<int> next_pos(static_cast<std::size_t>(p));
    std::vector<std::int64_t> choice(static_cast<std::size_t>(p));
    for (int t = 1; t <= n; ++t) {
        const std::vector<Site> next_sites = reachable_sites(kernel, t);
        std::map<Site, int, SiteLess> where;
        for (std::size_t i = 0; i < next_sites.size(); ++i) where.emplace(next_sites[i], static_cast<int>(i));
        // step_to[i][s] = index of sites[i] + step s at time t
        std::vector<std::vector<int>> step_to(sites.size(), std::vector<int>(static_cast<std::size_t>(nsteps)));
        for (std::size_t i = 0; i < sites.size(); ++i) {
            for (std::int64_t s = 0; s < nsteps; ++s) {
                step_to[i][static_cast<std::size_t>(s)] = where.at(Site(sites[i] + kernel.steps()[static_cast<std::size_t>(s)]));
            }
        }
        budget.charge(static_cast<double>(weights.size()) * moves * (n - t + 1), "replica tuple propagation");
        const auto radix_old = static_cast<std::int64_t>(sites.size());
        const auto radix_new = static_cast<std::int64_t>(next_sites.size());
        std::unordered_map<std::int64_t, double> next;
        next.reserve(weights.size() * 4);
        for (const auto& [code, w] : weights) {
            std::int64_t c = code;
            for (int i = p - 1; i >= 0; --i) {
                pos[static_cast<std::size_t>(i)] = static_cast<int>(c % radix_old);
                c /= radix_old;
            }
            std::fill(choice.begin(), choice.end(), 0);
            for (;;) {
                double prob = w;
                for (int i = 0; i < p; ++i) {
                    const auto s = static_cast<std::size_t>(choice[static_cast<std::size_t>(i)]);
                    next_pos[static_cast<std::size_t>(i)] = step_to[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])][s];
                    prob *= kernel.probs()[static_cast<Eigen::Index>(s)];
                }
                // Occupation factor exp(Σ_x λ(β m_x) - p λ(β)).
                double expo = -p * lambda;
                for (int i = 0; i < p; ++i) {
                    bool first = true;
                    int count = 0;
                    for (int j = 0; j < p; ++j) {
                        if (next_pos[static_cast<std::size_t>(j)] == next_pos[static_cast<std::size_t>(i)]) {
                            if (j < i) first = false;
                            ++count;
                        }
                    }
                    if (first) expo += lam_m[static_cast<std::size_t>(count)];
                }
                std::int64_t key = 0;
                for (int i = 0; i < p; ++i) key = key * radix_new + next_pos[static_cast<std::size_t>(i)];
                next[key] += prob * std::exp(expo);

                int i = p - 1;
                for (; i >= 0; --i) {
                    if (++choice[static_cast<std::size_t>(i)] < nsteps) break;
                    choice[static_cast<std::size_t>(i)] = 0;
                }
                if (i < 0) break;
            }
        }
        weights = std::move(next);
        sites = next_sites;
    }
    // Sum in key order so the result does not depend on hash iteration order.
    std::vector<std::pair<std::int64_t, double>> sorted(weights.begin(), weights.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (const auto& kv : sorted) total += kv.second;
    return total;
}

Eigen::ArrayXd pinning_series(const RenewalTable& table, double chi, int n)
{
    if (n < 0) throw ConfigError("horizon must be nonnegative");
    if (n > table.horizon) {
        throw ConfigError("renewal table horizon " + std::to_string(table.horizon) + " is shorter than n = " +
                          std::to_string(n));
    }
    if (!(chi >= 1.0)) throw ConfigError("overlap factor chi must be at least 1");
    Eigen::ArrayXd f(n + 1);
    f[0] = 1.0;
    for (int k = 1; k <= n; ++k) {
        double s = 0.0;
        for (int m = 1; m <= k; ++m) s += table.K[m] * f[k - m];
        f[k] = table.Q[k] + chi * s;
    }
    return f;
}

double second_moment_renewal(const RenewalTable& table, double chi, int n) { return pinning_series(table, chi, n)[n]; }

std::string to_string(Beta2Verdict v)
{
    switch (v) {
    case Beta2Verdict::finite:
        return "finite";
    case Beta2Verdict::zero:
        return "zero-recurrent";
    case Beta2Verdict::infinite:
        return "infinite-degenerate";
    case Beta2Verdict::infinite_in_range:
        return "infinite-within-range";
    }
    return "unknown";
}

Beta2Result solve_beta2_with_pi(const EnvModel& env, double pi, double tol, double beta_max)
{
    if (!(tol > 0.0)) throw ConfigError("beta2 tolerance must be positive");
    if (!(beta_max > 0.0)) throw ConfigError("beta2 search range must be positive");
    Beta2Result out;
    out.pi = pi;
    if (env.degenerate()) {
        out.beta2 = INFINITY;
        out.verdict = Beta2Verdict::infinite;
        return out;
    }
    if (pi >= 1.0) {
        out.beta2 = 0.0;
        out.verdict = Beta2Verdict::zero;
        out.residual = 0.0;
        return out;
    }
    // g is nondecreasing: λ(2β) - 2λ(β) has derivative 2(λ'(2β) - λ'(β)) >= 0.
    const double log_pi = std::log(pi);
    auto g = [&](double b) { return log_mgf(env, 2.0 * b) - 2.0 * log_mgf(env, b) + log_pi; };
    if (g(beta_max) < 0.0) {
        out.beta2 = INFINITY;
        out.verdict = Beta2Verdict::infinite_in_range;
        out.residual = 1.0 - std::exp(g(beta_max));
        return out;
    }
    double lo = 0.0;
    double hi = beta_max;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    const double rl = std::fabs(std::expm1(g(lo)));
    const double rh = std::fabs(std::expm1(g(hi)));
    out.beta2 = rl <= rh ? lo : hi;
    out.residual = std::min(rl, rh);
    if (out.residual > tol) {
        throw ConvergenceError("beta2 bisection residual " + std::to_string(out.residual) + " above tolerance",
                               out.residual);
    }
    return out;
}

Beta2Result solve_beta2(const WalkKernel& kernel, const EnvModel& env, double tol, double beta_max)
{
    if (env.degenerate()) {
        Beta2Result out = solve_beta2_with_pi(env, 0.0, tol, beta_max);
        return out;
    }
    const CollisionResult c = collision_probability(kernel, std::min(tol, 1e-10));
    if (c.verdict == GreenVerdict::indeterminate) {
        throw ConvergenceError("collision probability is indeterminate for " + kernel.describe(), c.achieved_tol);
    }
    Beta2Result out = solve_beta2_with_pi(env, c.pi, tol, beta_max);
    out.collision = c;
    return out;
}

std::vector<int> log_grid(int lo, int hi, int points)
{
    if (lo < 1 || hi <= lo || points < 2) throw ConfigError("log grid needs 1 <= lo < hi and at least two points");
    std::vector<int> out;
    for (int i = 0; i < points; ++i) {
        const double x = std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1);
        const int v = static_cast<int>(std::lround(std::exp(x)));
        if (out.empty() || v > out.back()) out.push_back(v);
    }
    return out;
}

GrowthFit critical_growth_fit(const RenewalTable& table, double chi, const std::vector<int>& n_grid, double pi)
{
    if (n_grid.size() < 3) throw ConfigError("critical growth fit needs at least three grid points");
    const auto [lo, hi] = std::minmax_element(n_grid.begin(), n_grid.end());
    if (*lo < 2 || static_cast<double>(*hi) < 100.0 * *lo) {
        throw ConfigError("critical growth grid must span at least two decades");
    }
    if (std::fabs(chi * pi - 1.0) > 1e-8) {
        throw ConfigError("critical growth fit needs chi * pi = 1 within 1e-8; got " + std::to_string(chi * pi));
    }
    const Eigen::ArrayXd f = pinning_series(table, chi, *hi);
    GrowthFit out;
    const auto m = static_cast<Eigen::Index>(n_grid.size());
    Eigen::ArrayXd x(m);
    Eigen::ArrayXd y(m);
    Eigen::ArrayXd xt(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const int n = n_grid[static_cast<std::size_t>(i)];
        x[i] = std::log(static_cast<double>(n));
        xt[i] = std::log(n / std::log(static_cast<double>(n)));
        y[i] = std::log(f[n]);
        out.n.push_back(n);
        out.f.push_back(f[n]);
    }
    const LinearFit fit = least_squares(x, y);
    out.slope = fit.slope;
    out.slope_stderr = fit.slope_stderr;
    out.intercept = fit.intercept;
    out.template_slope = least_squares(xt, y).slope;
    return out;
}

} // namespace polymer
