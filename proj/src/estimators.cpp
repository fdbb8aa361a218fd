#include "polymerlab/estimators.hpp"

#include "polymerlab/errors.hpp"
#include "polymerlab/exact.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace polymer {

std::uint64_t ReplicaSummary::next_id() const noexcept
{
    std::uint64_t k = 0;
    for (const auto& r : records) {
        if (r.id != k) break;
        ++k;
    }
    return k;
}

ReplicaSummary merge(const ReplicaSummary& a, const ReplicaSummary& b)
{
    if (a.master_seed != b.master_seed || a.horizon != b.horizon || a.levels != b.levels ||
        a.grid_times != b.grid_times) {
        throw ConfigError("cannot merge replica summaries from different runs");
    }
    ReplicaSummary out = a;
    out.records.clear();
    out.records.reserve(a.records.size() + b.records.size());
    std::merge(a.records.begin(), a.records.end(), b.records.begin(), b.records.end(), std::back_inserter(out.records),
               [](const ReplicaRecord& x, const ReplicaRecord& y) { return x.id < y.id; });
    for (std::size_t i = 1; i < out.records.size(); ++i) {
        if (out.records[i].id == out.records[i - 1].id) {
            throw ConfigError("replica " + std::to_string(out.records[i].id) + " appears in both summaries");
        }
    }
    return out;
}

ReplicaRecord run_replica(const ReplicaPlan& plan, std::uint64_t master_seed, std::uint64_t id)
{
    const std::uint64_t key = replica_key(master_seed, id);
    const EnvironmentStream stream(plan.env, derive_key(key, StreamTag::environment));
    PolymerField field = PolymerField::init_point(plan.kernel, plan.env, plan.beta);

    ReplicaRecord rec;
    rec.id = id;
    rec.overshoot.resize(plan.levels.size());
    std::vector<double> log_levels;
    for (double a : plan.levels) log_levels.push_back(std::log(a));
    std::size_t next_level = 0;
    std::size_t next_grid = 0;
    for (int n = 1; n <= plan.horizon; ++n) {
        field.evolve_step(stream);
        const double lw = field.log_total();
        rec.log_sup_w = std::max(rec.log_sup_w, lw);
        const double lp = field.log_max_value();
        rec.log_sup_point = std::max(rec.log_sup_point, lp);
        while (next_level < log_levels.size() && lw >= log_levels[next_level]) {
            OvershootHit& h = rec.overshoot[next_level];
            h.hit = true;
            h.time = n;
            h.log_w = lw;
            h.max_mu = field.max_endpoint(&h.argmax);
            h.log_max_point = lp;
            ++next_level;
        }
        while (next_grid < plan.grid_times.size() && plan.grid_times[next_grid] == n) {
            rec.log_w_grid.push_back(lw);
            rec.log_sup_grid.push_back(rec.log_sup_w);
            ++next_grid;
        }
        rec.log_w_final = lw;
        if (plan.stop_at_top_level && next_level == log_levels.size() && next_grid == plan.grid_times.size()) break;
    }
    return rec;
}

std::vector<ReplicaRecord> run_tasks(const ReplicaTask& task, std::uint64_t first, std::uint64_t count, int workers)
{
    std::vector<ReplicaRecord> out(count);
    if (count == 0) return out;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<std::uint64_t>(count, 1024))));
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = task(first + i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

int workers_from_environment()
{
    const char* v = std::getenv("POLYMERLAB_WORKERS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1 || n > 4096) throw ConfigError("POLYMERLAB_WORKERS must be a positive integer");
    return static_cast<int>(n);
}

namespace {

void validate_plan(const ReplicaPlan& plan)
{
    if (plan.horizon < 1) throw ConfigError("horizon must be at least 1");
    if (!(plan.beta >= 0.0)) throw ConfigError("run.beta must be nonnegative");
    for (std::size_t i = 0; i < plan.levels.size(); ++i) {
        if (!(plan.levels[i] > 1.0)) throw ConfigError("overshoot levels must exceed 1");
        if (i > 0 && !(plan.levels[i] > plan.levels[i - 1])) throw ConfigError("overshoot levels must increase");
    }
    for (std::size_t i = 0; i < plan.grid_times.size(); ++i) {
        const int t = plan.grid_times[i];
        if (t < 1 || t > plan.horizon) throw ConfigError("grid times must lie in [1, horizon]");
        if (i > 0 && t <= plan.grid_times[i - 1]) throw ConfigError("grid times must increase");
    }
}

} // namespace

ReplicaSummary run_task_replicas(const ReplicaTask& task, std::uint64_t count, int workers, ReplicaSummary summary,
                                 const RunControl& control)
{
    if (summary.next_id() != summary.records.size()) {
        throw ConfigError("resumed records do not form a contiguous replica range");
    }
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto last_checkpoint = t0;
    std::uint64_t since_checkpoint = 0;
    std::uint64_t produced = 0;
    const std::uint64_t chunk =
        control.chunk ? control.chunk
                      : std::max<std::uint64_t>(16, 16 * static_cast<std::uint64_t>(std::max(1, workers)));

    while (summary.records.size() < count) {
        std::uint64_t todo = std::min<std::uint64_t>(chunk, count - summary.records.size());
        if (control.stop_after) {
            if (produced >= control.stop_after) break;
            todo = std::min(todo, control.stop_after - produced);
        }
        if (control.checkpoint_every) todo = std::min(todo, control.checkpoint_every - since_checkpoint);
        auto batch = run_tasks(task, summary.records.size(), todo, workers);
        for (auto& r : batch) summary.records.push_back(std::move(r));
        produced += todo;
        since_checkpoint += todo;
        const auto now = clock::now();
        const bool due = (control.checkpoint_every && since_checkpoint >= control.checkpoint_every) ||
                         std::chrono::duration<double>(now - last_checkpoint).count() >= control.checkpoint_seconds;
        if (due && control.on_checkpoint) {
            since_checkpoint = 0;
            last_checkpoint = now;
            if (!control.on_checkpoint(summary)) break;
        }
        if (control.wall_limit > 0 && std::chrono::duration<double>(now - t0).count() >= control.wall_limit) break;
    }
    return summary;
}

ReplicaSummary run_replicas(const ReplicaPlan& plan, std::uint64_t master_seed, std::uint64_t count, int workers,
                            ReplicaSummary start, const RunControl& control)
{
    validate_plan(plan);
    ReplicaSummary summary = std::move(start);
    if (summary.records.empty()) {
        summary.master_seed = master_seed;
        summary.horizon = plan.horizon;
        summary.levels = plan.levels;
        summary.grid_times = plan.grid_times;
    } else if (summary.master_seed != master_seed || summary.horizon != plan.horizon || summary.levels != plan.levels ||
               summary.grid_times != plan.grid_times) {
        throw ConfigError("resumed records were produced by a different configuration");
    }
    const ReplicaTask task = [&](std::uint64_t id) { return run_replica(plan, master_seed, id); };
    return run_task_replicas(task, count, workers, std::move(summary), control);
}

ReplicaSummary simulate_suprema(const WalkKernel& kernel, const EnvModel& env, double beta, int horizon,
                                std::uint64_t replicas, std::uint64_t master_seed, int workers)
{
    if (replicas < 1) throw ConfigError("run.R must be at least 1");
    ReplicaPlan plan;
    plan.kernel = kernel;
    plan.env = env;
    plan.beta = beta;
    plan.horizon = horizon;
    return run_replicas(plan, master_seed, replicas, workers);
}

// ---------------------------------------------------------------------------

int default_hill_k(std::size_t sample_count)
{
    return static_cast<int>(std::floor(std::sqrt(static_cast<double>(sample_count))));
}

namespace {

// Samples sorted in decreasing order.
HillPoint hill_at(const std::vector<double>& desc, int k)
{
    const double floor_value = desc[static_cast<std::size_t>(k)];
    if (!(floor_value > 0.0)) throw ConfigError("Hill estimator needs positive top order statistics");
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += std::log(desc[static_cast<std::size_t>(i)] / floor_value);
    if (!(s > 0.0)) throw ConfigError("Hill estimator: the top " + std::to_string(k + 1) + " order statistics are tied");
    const double p = k / s;
    const double half = 1.96 / std::sqrt(static_cast<double>(k));
    return {k, p, p * (1.0 - half), p * (1.0 + half)};
}

} // namespace

std::vector<SurvivalPoint> survival_curve(const std::vector<double>& samples, int points)
{
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    std::vector<SurvivalPoint> out;
    if (sorted.empty() || points < 2) return out;
    const auto first_positive = std::upper_bound(sorted.begin(), sorted.end(), 0.0);
    if (first_positive == sorted.end()) return out;
    const double lo = std::log(*first_positive);
    const double hi = std::log(sorted.back());
    const double n = static_cast<double>(sorted.size());
    for (int i = 0; i < points; ++i) {
        const double u = hi > lo ? std::exp(lo + (hi - lo) * i / (points - 1)) : std::exp(lo);
        const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), u);
        out.push_back({u, static_cast<double>(above) / n});
    }
    return out;
}

TailFit hill_tail(std::vector<double> samples, int k, int horizon)
{
    const std::size_t n = samples.size();
    if (k == 0) k = default_hill_k(n);
    if (k < 2) throw ConfigError("Hill estimator needs k >= 2");
    if (static_cast<std::size_t>(k) >= n) {
        throw ConfigError("Hill estimator needs k < sample count (k = " + std::to_string(k) + ", n = " +
                          std::to_string(n) + ")");
    }
    TailFit fit;
    fit.survival = survival_curve(samples);
    std::sort(samples.begin(), samples.end(), std::greater<>());
    const HillPoint main = hill_at(samples, k);
    fit.p_hat = main.p_hat;
    fit.k = k;
    fit.lo = main.lo;
    fit.hi = main.hi;
    fit.sample_count = n;
    fit.horizon = horizon;
    for (int kk : {k / 2, k, 2 * k}) {
        if (kk < 2 || static_cast<std::size_t>(kk) >= n) continue;
        try {
            fit.sweep.push_back(hill_at(samples, kk));
        } catch (const ConfigError&) {
            // a tied block at a sweep point is skipped, the main k already passed
        }
    }
    return fit;
}

// ---------------------------------------------------------------------------

std::vector<SupermultCell> supermultiplicativity_check(const ReplicaSummary& summary, const std::vector<double>& u_grid)
{
    for (double u : u_grid) {
        if (!(u > 1.0)) throw ConfigError("supermultiplicativity grid values must exceed 1");
    }
    const auto R = static_cast<double>(summary.records.size());
    std::vector<SupermultCell> out;
    if (summary.records.empty()) return out;
    auto indicator = [&](double u) {
        std::vector<double> ind;
        ind.reserve(summary.records.size());
        const double lu = std::log(u);
        for (const auto& r : summary.records) ind.push_back(r.log_sup_point > lu ? 1.0 : 0.0);
        return ind;
    };
    for (double u : u_grid) {
        for (double v : u_grid) {
            SupermultCell c;
            c.u = u;
            c.v = v;
            const auto iu = indicator(u);
            const auto iv = indicator(v);
            const auto iuv = indicator(u * v);
            for (std::size_t i = 0; i < iu.size(); ++i) {
                c.zeta_u += iu[i];
                c.zeta_v += iv[i];
                c.zeta_uv += iuv[i];
            }
            c.zeta_u /= R;
            c.zeta_v /= R;
            c.zeta_uv /= R;
            c.diff = c.zeta_uv - c.zeta_u * c.zeta_v;
            c.empty = c.zeta_u == 0.0 || c.zeta_v == 0.0;
            // Delta method: influence of replica i on ζ(uv) - ζ(u)ζ(v).
            double m = 0.0;
            double m2 = 0.0;
            for (std::size_t i = 0; i < iu.size(); ++i) {
                const double phi = iuv[i] - c.zeta_v * iu[i] - c.zeta_u * iv[i];
                m += phi;
                m2 += phi * phi;
            }
            m /= R;
            const double var = R > 1 ? (m2 - R * m * m) / (R - 1) : 0.0;
            c.sigma = std::sqrt(std::max(0.0, var) / R);
            c.violation = !c.empty && c.diff < -3.0 * c.sigma;
            out.push_back(c);
        }
    }
    return out;
}

std::vector<OvershootRow> overshoot_moments(const ReplicaSummary& summary, double p)
{
    if (!(p > 0.0)) throw ConfigError("overshoot moment order must be positive");
    std::vector<OvershootRow> out;
    for (std::size_t l = 0; l < summary.levels.size(); ++l) {
        OvershootRow row;
        row.A = summary.levels[l];
        row.replicas = summary.records.size();
        Moments m;
        const double la = std::log(row.A);
        for (const auto& r : summary.records) {
            const OvershootHit& h = r.overshoot.at(l);
            if (!h.hit) continue;
            ++row.hits;
            m.add(std::exp(p * (h.log_w - la)));
        }
        row.censored = row.replicas - row.hits;
        const double R = static_cast<double>(row.replicas);
        row.p_hit = R > 0 ? row.hits / R : 0.0;
        row.p_hit_se = R > 0 ? std::sqrt(row.p_hit * (1 - row.p_hit) / R) : 0.0;
        row.empty = row.hits == 0;
        row.moment = row.empty ? std::numeric_limits<double>::quiet_NaN() : m.mean();
        row.moment_se = row.hits > 1 ? m.stderr_mean() : std::numeric_limits<double>::quiet_NaN();
        out.push_back(row);
    }
    return out;
}

std::vector<LocalizationRow> endpoint_localization(const ReplicaSummary& summary, const std::vector<double>& delta_grid)
{
    std::vector<LocalizationRow> out;
    for (std::size_t l = 0; l < summary.levels.size(); ++l) {
        for (double delta : delta_grid) {
            if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("localization delta must lie in (0, 1]");
            LocalizationRow row;
            row.u = summary.levels[l];
            row.delta = delta;
            for (const auto& r : summary.records) {
                const OvershootHit& h = r.overshoot.at(l);
                if (!h.hit) continue;
                ++row.hits;
                if (h.max_mu >= delta) ++row.localized;
            }
            row.empty = row.hits == 0;
            if (!row.empty) {
                row.frequency = static_cast<double>(row.localized) / row.hits;
                row.se = std::sqrt(row.frequency * (1 - row.frequency) / row.hits);
            }
            out.push_back(row);
        }
    }
    return out;
}

std::vector<double> localization_distribution(const ReplicaSummary& summary, std::size_t level)
{
    std::vector<double> out;
    for (const auto& r : summary.records) {
        const OvershootHit& h = r.overshoot.at(level);
        if (h.hit) out.push_back(h.max_mu);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<MomentGrowthRow> moment_growth(const ReplicaSummary& summary, double p, const WalkKernel& kernel,
                                           const EnvModel& env, double beta)
{
    if (!(p >= 1.0)) throw ConfigError("moment order p must be at least 1");
    std::vector<MomentGrowthRow> out;
    RenewalTable table;
    const bool exact = p == 2.0 && !summary.grid_times.empty();
    if (exact) table = first_collision_law(return_prob_series(kernel, summary.grid_times.back()));
    for (std::size_t g = 0; g < summary.grid_times.size(); ++g) {
        MomentGrowthRow row;
        row.n = summary.grid_times[g];
        Moments m;
        for (const auto& r : summary.records) m.add(std::exp(p * r.log_w_grid.at(g)));
        const double mean = m.mean();
        row.rate = std::log(mean) / row.n;
        row.rate_se = summary.records.size() > 1 ? m.stderr_mean() / (mean * row.n) : 0.0;
        if (exact) row.exact_rate = std::log(second_moment_renewal(table, overlap_factor(env, beta), row.n)) / row.n;
        row.verdict = row.rate > 3.0 * row.rate_se ? "> 3 sigma above 0" : "indistinguishable from 0";
        out.push_back(row);
    }
    return out;
}

SecondMomentCheck second_moment_check(const ReplicaSummary& summary, std::size_t grid_index, double exact)
{
    if (grid_index >= summary.grid_times.size()) throw ConfigError("second moment: grid index out of range");
    SecondMomentCheck c;
    c.n = summary.grid_times[grid_index];
    c.replicas = summary.records.size();
    c.exact = exact;
    if (c.replicas < 4) throw ConfigError("second moment: need at least four replicas");
    Moments m2;
    Moments halves[2];
    for (std::size_t i = 0; i < summary.records.size(); ++i) {
        const double w2 = std::exp(2.0 * summary.records[i].log_w_grid.at(grid_index));
        m2.add(w2);
        halves[2 * i < summary.records.size() ? 0 : 1].add(w2 * w2);
    }
    c.mean = m2.mean();
    c.sigma = m2.stderr_mean();
    c.fourth_half[0] = halves[0].mean();
    c.fourth_half[1] = halves[1].mean();
    const double lo = std::min(c.fourth_half[0], c.fourth_half[1]);
    const double hi = std::max(c.fourth_half[0], c.fourth_half[1]);
    c.heavy_tail = !(hi <= 2.0 * lo);
    c.z = c.sigma > 0.0 ? (c.mean - exact) / c.sigma : 0.0;
    return c;
}

// ---------------------------------------------------------------------------

std::vector<ReplicaRecord> fluctuation_samples(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                               int box_half, const TestFunction& f, std::uint64_t master_seed,
                                               std::uint64_t first, std::uint64_t count, int workers)
{
    const std::uint64_t seed_n = hash_combine(master_seed, static_cast<std::uint64_t>(n));
    return run_tasks(
        [&](std::uint64_t id) {
            const std::uint64_t key = replica_key(seed_n, id);
            const EnvironmentStream stream(env, derive_key(key, StreamTag::environment));
            const PlaneFunctional v = plane_field_functional(kernel, env, beta, n, box_half, f, stream);
            ReplicaRecord rec;
            rec.id = id;
            rec.samples = {v.fluctuation, v.riemann};
            return rec;
        },
        first, count, workers);
}

FluctuationRow summarize_fluctuation(int n, const std::vector<ReplicaRecord>& records)
{
    FluctuationRow row;
    row.n = n;
    row.replicas = records.size();
    const auto R = static_cast<double>(records.size());
    if (records.empty()) return row;
    double sx = 0.0;
    double sr = 0.0;
    for (const auto& r : records) {
        sx += r.samples.at(0);
        sr += r.samples.at(1);
    }
    row.mean = sx / R;
    row.riemann_mean = sr / R;
    double m2 = 0.0;
    double m4 = 0.0;
    double r2 = 0.0;
    for (const auto& r : records) {
        const double c = r.samples[0] - row.mean;
        m2 += c * c;
        m4 += c * c * c * c;
        const double cr = r.samples[1] - row.riemann_mean;
        r2 += cr * cr;
    }
    if (R > 1) {
        row.variance = m2 / (R - 1);
        const double mu2 = m2 / R;
        const double mu4 = m4 / R;
        row.variance_se = std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / R);
        row.riemann_se = std::sqrt(r2 / (R - 1) / R);
    }
    return row;
}

FluctuationScaling fit_fluctuation_scaling(std::vector<FluctuationRow> rows, int dim)
{
    if (rows.size() < 3) throw ConfigError("fluctuation slope needs at least three grid points");
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
    FluctuationScaling out;
    out.predicted_slope = -(dim - 2) / 2.0;
    out.short_span = rows.back().n < 10 * rows.front().n;
    Eigen::ArrayXd x(static_cast<Eigen::Index>(rows.size()));
    Eigen::ArrayXd y(x.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i].variance > 0.0)) {
            out.rows = rows;
            out.slope = std::numeric_limits<double>::quiet_NaN();
            out.slope_se = std::numeric_limits<double>::quiet_NaN();
            return out;
        }
        x[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(rows[i].n));
        y[static_cast<Eigen::Index>(i)] = std::log(rows[i].variance);
    }
    const LinearFit fit = least_squares(x, y);
    out.rows = std::move(rows);
    out.slope = fit.slope;
    out.slope_se = fit.slope_stderr;
    return out;
}

FluctuationScaling fluctuation_scaling(const WalkKernel& kernel, const EnvModel& env, double beta,
                                       const TestFunction& f, const std::vector<int>& n_grid, std::uint64_t replicas,
                                       std::uint64_t master_seed, int workers)
{
    if (n_grid.size() < 3) throw ConfigError("fluctuation slope needs at least three grid points");
    std::vector<FluctuationRow> rows;
    for (int n : n_grid) {
        rows.push_back(summarize_fluctuation(
            n, fluctuation_samples(kernel, env, beta, n, 0, f, master_seed, 0, replicas, workers)));
    }
    return fit_fluctuation_scaling(std::move(rows), kernel.dim());
}

} // namespace polymer
