#include "polymerlab/spine.hpp"

#include "polymerlab/errors.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace polymer {

namespace {

constexpr std::uint64_t kPlainSalt = 0x706c61696eULL;

std::uint64_t spine_background_key(std::uint64_t key) { return derive_key(key, StreamTag::environment); }

} // namespace

double SpineSample::omega(const EnvModel& env, int time, const Site& x) const
{
    if (time >= 1 && static_cast<std::size_t>(time) < path.size() && path[static_cast<std::size_t>(time)] == x) {
        return tilted[static_cast<std::size_t>(time) - 1];
    }
    return EnvironmentStream(env, background_key).omega(time, coords(x));
}

EnvironmentOverride SpineSample::override_table() const
{
    EnvironmentOverride o;
    for (std::size_t i = 1; i < path.size(); ++i) o.set(static_cast<int>(i), path[i], tilted[i - 1]);
    return o;
}

SpineSample sample_spine(const WalkKernel& kernel, const EnvModel& env, double beta, int n, std::uint64_t key)
{
    if (n < 1) throw ConfigError("spine length n must be at least 1");
    if (!(beta >= 0.0)) throw ConfigError("run.beta must be nonnegative");
    SpineSample s;
    s.background_key = spine_background_key(key);
    RandomStream walk(derive_key(key, StreamTag::spine_path));
    RandomStream tilt(derive_key(key, StreamTag::spine_tilt));
    const double lambda = log_mgf(env, beta);
    s.path.push_back(origin(kernel.dim()));
    for (int i = 1; i <= n; ++i) {
        s.path.push_back(Site(s.path.back() + kernel.sample(walk)));
        s.tilted.push_back(env.draw_tilted(beta, lambda, tilt()));
    }
    const EnvironmentStream background(env, s.background_key);
    const EnvironmentOverride o = s.override_table();
    PolymerField field = PolymerField::init_point(kernel, env, beta);
    for (int t = 0; t < n; ++t) field.evolve_step(background, &o);
    s.log_w = field.log_total();
    return s;
}

double plain_log_partition(const WalkKernel& kernel, const EnvModel& env, double beta, int n, std::uint64_t key)
{
    const EnvironmentStream background(env, spine_background_key(key));
    PolymerField field = PolymerField::init_point(kernel, env, beta);
    for (int t = 0; t < n; ++t) field.evolve_step(background);
    return field.log_total();
}

std::vector<TestG> spine_battery()
{
    return {
        {"one", [](double) { return 1.0; }},
        {"min_w_2", [](double w) { return std::min(w, 2.0); }},
        {"inv_1_plus_w", [](double w) { return 1.0 / (1.0 + w); }},
        {"w_above_1", [](double w) { return w > 1.0 ? 1.0 : 0.0; }},
    };
}

std::vector<ReplicaRecord> spine_records(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                         std::uint64_t master_seed, std::uint64_t first, std::uint64_t count,
                                         int workers)
{
    return run_tasks(
        [&](std::uint64_t id) {
            ReplicaRecord r;
            r.id = id;
            r.samples = {sample_spine(kernel, env, beta, n, replica_key(master_seed, id)).log_w};
            return r;
        },
        first, count, workers);
}

std::vector<ReplicaRecord> plain_records(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                         std::uint64_t master_seed, std::uint64_t first, std::uint64_t count,
                                         int workers)
{
    const std::uint64_t seed = hash_combine(master_seed, kPlainSalt);
    return run_tasks(
        [&](std::uint64_t id) {
            ReplicaRecord r;
            r.id = id;
            r.samples = {plain_log_partition(kernel, env, beta, n, replica_key(seed, id))};
            return r;
        },
        first, count, workers);
}

namespace {

Estimate mean_of(const std::vector<ReplicaRecord>& records, const std::function<double(double)>& h)
{
    Moments m;
    for (const auto& r : records) m.add(h(std::exp(r.samples.at(0))));
    return {m.mean(), records.size() > 1 ? m.stderr_mean() : 0.0, records.size()};
}

} // namespace

Estimate spine_estimate(const std::vector<ReplicaRecord>& spine, const std::function<double(double)>& g)
{
    return mean_of(spine, g);
}

Estimate weighted_estimate(const std::vector<ReplicaRecord>& plain, const std::function<double(double)>& g)
{
    return mean_of(plain, [&](double w) { return w * g(w); });
}

Estimate size_biased_expectation(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                 const std::function<double(double)>& g, std::uint64_t replicas,
                                 std::uint64_t master_seed, int workers)
{
    if (replicas < 1) throw ConfigError("run.R must be at least 1");
    if (beta == 0.0) return {g(1.0), 0.0, replicas};
    return spine_estimate(spine_records(kernel, env, beta, n, master_seed, 0, replicas, workers), g);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<LawAtom> merge_atoms(std::vector<LawAtom> atoms)
{
    std::sort(atoms.begin(), atoms.end(), [](const LawAtom& a, const LawAtom& b) { return a.value < b.value; });
    std::vector<LawAtom> out;
    for (const auto& a : atoms) {
        if (!out.empty() && a.value - out.back().value <= 1e-12 * std::fabs(a.value)) {
            out.back().probability += a.probability;
        } else {
            out.push_back(a);
        }
    }
    return out;
}

} // namespace

std::vector<LawAtom> exact_spine_law(const EnvModel& env, const WalkKernel& kernel, double beta, int n,
                                     const EnumerationBudget& budget)
{
    if (env.family() != EnvFamily::two_point) throw ConfigError("exact spine law needs a two-point environment");
    if (n < 1) throw ConfigError("spine length n must be at least 1");

    struct Cell {
        int time;
        Site site;
    };
    std::vector<Cell> cells;
    std::map<std::pair<int, Site>, int, bool (*)(const std::pair<int, Site>&, const std::pair<int, Site>&)> where(
        [](const std::pair<int, Site>& a, const std::pair<int, Site>& b) {
            if (a.first != b.first) return a.first < b.first;
            return SiteLess{}(a.second, b.second);
        });
    for (int t = 1; t <= n; ++t) {
        for (const Site& x : reachable_sites(kernel, t)) {
            where.emplace(std::make_pair(t, x), static_cast<int>(cells.size()));
            cells.push_back({t, x});
        }
    }
    const auto m = static_cast<int>(cells.size());
    if (m > 40) throw BudgetExceeded("exact spine law: " + std::to_string(m) + " environment sites");
    const double paths = std::pow(static_cast<double>(kernel.steps().size()), n);
    budget.charge(std::ldexp(1.0, m) * paths, "spine enumeration");

    const double lambda = log_mgf(env, beta);
    const double pa = env.p();
    const double qa = pa == 0.0 ? 0.0 : pa * std::exp(beta * env.a() - lambda);

    // Spine paths as cell-index lists with their probabilities.
    std::vector<std::pair<std::vector<int>, double>> spines{{{}, 1.0}};
    {
        std::vector<Site> ends{origin(kernel.dim())};
        for (int t = 1; t <= n; ++t) {
            std::vector<std::pair<std::vector<int>, double>> grown;
            std::vector<Site> grown_ends;
            for (std::size_t i = 0; i < spines.size(); ++i) {
                for (std::size_t s = 0; s < kernel.steps().size(); ++s) {
                    const Site y = ends[i] + kernel.steps()[s];
                    auto cellsOnPath = spines[i].first;
                    cellsOnPath.push_back(where.at(std::make_pair(t, y)));
                    grown.emplace_back(std::move(cellsOnPath),
                                       spines[i].second * kernel.probs()[static_cast<Eigen::Index>(s)]);
                    grown_ends.push_back(y);
                }
            }
            spines = std::move(grown);
            ends = std::move(grown_ends);
        }
    }

    std::vector<LawAtom> atoms;
    const std::uint64_t states = std::uint64_t{1} << m;
    for (std::uint64_t mask = 0; mask < states; ++mask) {
        // bit set = value b
        OmegaTable table;
        for (int i = 0; i < m; ++i) {
            table.set(cells[static_cast<std::size_t>(i)].time, cells[static_cast<std::size_t>(i)].site,
                      ((mask >> i) & 1) ? env.b() : env.a());
        }
        const double w = exact_partition(table, kernel, env, beta, n, budget);
        double prob = 0.0;
        for (const auto& [on, pp] : spines) {
            double q = pp;
            std::uint64_t on_mask = 0;
            for (int c : on) on_mask |= std::uint64_t{1} << c;
            for (int i = 0; i < m && q > 0.0; ++i) {
                const bool is_b = (mask >> i) & 1;
                const double mass_a = ((on_mask >> i) & 1) ? qa : pa;
                q *= is_b ? 1.0 - mass_a : mass_a;
            }
            prob += q;
        }
        if (prob > 0.0) atoms.push_back({w, prob});
    }
    return merge_atoms(std::move(atoms));
}

std::vector<LawAtom> size_biased_law(const std::vector<LawAtom>& law)
{
    std::vector<LawAtom> out;
    for (const auto& a : law) out.push_back({a.value, a.value * a.probability});
    return merge_atoms(std::move(out));
}

double total_variation(std::vector<LawAtom> a, std::vector<LawAtom> b)
{
    a = merge_atoms(std::move(a));
    b = merge_atoms(std::move(b));
    double tv = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].value < b[j].value &&
                              b[j].value - a[i].value > 1e-12 * std::fabs(b[j].value))) {
            tv += std::fabs(a[i++].probability);
        } else if (i == a.size() || (b[j].value < a[i].value &&
                                     a[i].value - b[j].value > 1e-12 * std::fabs(a[i].value))) {
            tv += std::fabs(b[j++].probability);
        } else {
            tv += std::fabs(a[i++].probability - b[j++].probability);
        }
    }
    return 0.5 * tv;
}

} // namespace polymer
