// Replica engine and the statistics built on it: Hill tails, overshoot
// moments, endpoint localization, supermultiplicativity, moment growth and
// fluctuation scaling.
#ifndef POLYMERLAB_ESTIMATORS_HPP
#define POLYMERLAB_ESTIMATORS_HPP

#include "polymerlab/env.hpp"
#include "polymerlab/field.hpp"
#include "polymerlab/walk.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace polymer {

/// First passage of W_n over one level A.
struct OvershootHit {
    bool hit = false;
    int time = 0;               // τ_A, 0 when censored
    double log_w = 0.0;         // log W_{τ_A}
    double max_mu = 0.0;        // max_x μ_{τ_A}(x)
    double log_max_point = 0.0; // max_x log Ŵ_{τ_A}(x)
    Site argmax;

    friend bool operator==(const OvershootHit& a, const OvershootHit& b)
    {
        return a.hit == b.hit && a.time == b.time && a.log_w == b.log_w && a.max_mu == b.max_mu &&
               a.log_max_point == b.log_max_point && a.argmax.size() == b.argmax.size() &&
               (a.argmax.array() == b.argmax.array()).all();
    }
};

struct ReplicaRecord {
    std::uint64_t id = 0;
    double log_sup_w = 0.0;     // log sup_{n<=N} W_n
    double log_sup_point = 0.0; // log sup_{n<=N, x} Ŵ_n(x)
    double log_w_final = 0.0;
    std::vector<double> log_w_grid;
    std::vector<double> log_sup_grid; // log sup_{m<=n} W_m at the grid times
    std::vector<OvershootHit> overshoot; // one per level of the plan
    std::vector<double> samples;         // free-form scalars (fluctuation, spine, ...)

    friend bool operator==(const ReplicaRecord&, const ReplicaRecord&) = default;
};

/// Records kept sorted by replica id; merge is a sorted union, so it is
/// associative and independent of which worker produced what.
struct ReplicaSummary {
    std::uint64_t master_seed = 0;
    int horizon = 0;
    std::vector<double> levels; // A grid of the overshoot records
    std::vector<int> grid_times;
    std::vector<ReplicaRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    /// Next id after the contiguous prefix 0..k-1.
    std::uint64_t next_id() const noexcept;

    friend bool operator==(const ReplicaSummary&, const ReplicaSummary&) = default;
};

/// Throws ConfigError on mismatched headers or duplicated ids.
ReplicaSummary merge(const ReplicaSummary& a, const ReplicaSummary& b);

/// What one replica does.
struct ReplicaPlan {
    WalkKernel kernel = WalkKernel::simple(1);
    EnvModel env = EnvModel::gaussian();
    double beta = 0.0;
    int horizon = 1;
    std::vector<double> levels;  // increasing, each > 1
    std::vector<int> grid_times; // log W_n recorded at these n
    /// Stop as soon as the top level is hit (sup fields then cover [0, τ]).
    bool stop_at_top_level = false;
};

ReplicaRecord run_replica(const ReplicaPlan& plan, std::uint64_t master_seed, std::uint64_t id);

/// Checkpoint cadence and early stop for long runs.
struct RunControl {
    std::uint64_t checkpoint_every = 10000;
    double checkpoint_seconds = 60.0;
    /// Called from the calling thread with all records so far (a contiguous
    /// id range); returning false stops the run there.
    std::function<bool(const ReplicaSummary&)> on_checkpoint;
    /// Stop after this many new replicas (0 = no limit).
    std::uint64_t stop_after = 0;
    /// Wall-clock limit in seconds for this call (0 = none).
    double wall_limit = 0.0;
    /// Replicas per batch between limit checks (0 = 16 per worker).
    std::uint64_t chunk = 0;
};

/// Runs ids [start.next_id(), count) on `workers` threads, appending to
/// `start`, which may hold the records of an earlier interrupted run.
ReplicaSummary run_replicas(const ReplicaPlan& plan, std::uint64_t master_seed, std::uint64_t count, int workers,
                            ReplicaSummary start = {}, const RunControl& control = {});

/// Generic form: any per-id task producing a record.
using ReplicaTask = std::function<ReplicaRecord(std::uint64_t id)>;
std::vector<ReplicaRecord> run_tasks(const ReplicaTask& task, std::uint64_t first, std::uint64_t count, int workers);
/// Chunked, checkpointed loop over ids [summary.next_id(), count).
ReplicaSummary run_task_replicas(const ReplicaTask& task, std::uint64_t count, int workers, ReplicaSummary summary,
                                 const RunControl& control = {});

/// Worker count from POLYMERLAB_WORKERS, default 1.
int workers_from_environment();

ReplicaSummary simulate_suprema(const WalkKernel& kernel, const EnvModel& env, double beta, int horizon,
                                std::uint64_t replicas, std::uint64_t master_seed, int workers = 1);

// ---------------------------------------------------------------------------
// Tails

struct SurvivalPoint {
    double u;
    double survival;
};

struct HillPoint {
    int k;
    double p_hat;
    double lo;
    double hi;
};

struct TailFit {
    double p_hat = 0.0;
    int k = 0;
    double lo = 0.0; // p̂(1 - 1.96/√k)
    double hi = 0.0;
    std::size_t sample_count = 0;
    int horizon = 0;
    std::vector<HillPoint> sweep; // k/2, k, 2k where defined
    std::vector<SurvivalPoint> survival;
};

int default_hill_k(std::size_t sample_count);
/// Hill estimator on the top k order statistics. k = 0 picks the default.
TailFit hill_tail(std::vector<double> samples, int k = 0, int horizon = 0);
/// Empirical P(X > u) on a log-spaced grid over the sample range.
std::vector<SurvivalPoint> survival_curve(const std::vector<double>& samples, int points = 40);

// ---------------------------------------------------------------------------
// Conditional statistics from replica summaries

struct SupermultCell {
    double u = 0.0;
    double v = 0.0;
    double zeta_u = 0.0;
    double zeta_v = 0.0;
    double zeta_uv = 0.0;
    double diff = 0.0; // ζ̂(uv) - ζ̂(u) ζ̂(v)
    double sigma = 0.0;
    bool empty = false;
    bool violation = false; // diff < -3σ
};

/// ζ(u) = P(sup Ŵ > u) from log_sup_point.
std::vector<SupermultCell> supermultiplicativity_check(const ReplicaSummary& summary, const std::vector<double>& u_grid);

struct OvershootRow {
    double A = 0.0;
    std::uint64_t replicas = 0;
    std::uint64_t hits = 0;
    std::uint64_t censored = 0;
    double p_hit = 0.0;
    double p_hit_se = 0.0;
    double moment = 0.0;    // Ê[(W_τ / A)^p | hit]
    double moment_se = 0.0;
    bool empty = false;
};

std::vector<OvershootRow> overshoot_moments(const ReplicaSummary& summary, double p);

struct LocalizationRow {
    double u = 0.0;
    double delta = 0.0;
    std::uint64_t hits = 0;
    std::uint64_t localized = 0;
    double frequency = 0.0;
    double se = 0.0;
    bool empty = false;
};

/// P̂(max μ_{τ_u} >= δ | τ_u <= N) for each level u of the summary.
std::vector<LocalizationRow> endpoint_localization(const ReplicaSummary& summary, const std::vector<double>& delta_grid);
/// max μ_{τ_u} over hits at level index `level`, sorted.
std::vector<double> localization_distribution(const ReplicaSummary& summary, std::size_t level);

struct MomentGrowthRow {
    int n = 0;
    double rate = 0.0;    // (1/n) log Ê[W_n^p]
    double rate_se = 0.0;
    double exact_rate = std::numeric_limits<double>::quiet_NaN(); // p = 2 only
    std::string verdict;  // "indistinguishable from 0" or "> 3σ above 0"
};

/// Moment growth from the log_w_grid of the summary.
std::vector<MomentGrowthRow> moment_growth(const ReplicaSummary& summary, double p, const WalkKernel& kernel,
                                           const EnvModel& env, double beta);

struct SecondMomentCheck {
    int n = 0;
    std::uint64_t replicas = 0;
    double mean = 0.0;  // Ê[W_n²]
    double sigma = 0.0; // from the empirical fourth moment
    double exact = 0.0;
    double z = 0.0;
    double fourth_half[2] = {0.0, 0.0}; // Ê[W_n⁴] on each half-sample
    bool heavy_tail = false;            // halves differ by more than 2x
};

SecondMomentCheck second_moment_check(const ReplicaSummary& summary, std::size_t grid_index, double exact);

struct FluctuationRow {
    int n = 0;
    std::uint64_t replicas = 0;
    double mean = 0.0;
    double variance = 0.0;
    double variance_se = 0.0;
    double riemann_mean = 0.0;
    double riemann_se = 0.0;
};

struct FluctuationScaling {
    std::vector<FluctuationRow> rows;
    double slope = 0.0;
    double slope_se = 0.0;
    double predicted_slope = 0.0; // -(d - 2)/2
    bool short_span = false;      // grid spans less than a decade
};

/// Samples of 𝒳_n(f) for replica ids [first, first + count) at one n;
/// records carry {fluctuation, riemann} in `samples`.
std::vector<ReplicaRecord> fluctuation_samples(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                               int box_half, const TestFunction& f, std::uint64_t master_seed,
                                               std::uint64_t first, std::uint64_t count, int workers);
FluctuationRow summarize_fluctuation(int n, const std::vector<ReplicaRecord>& records);
/// Least-squares slope of log variance on log n over at least three rows.
FluctuationScaling fit_fluctuation_scaling(std::vector<FluctuationRow> rows, int dim);

FluctuationScaling fluctuation_scaling(const WalkKernel& kernel, const EnvModel& env, double beta,
                                       const TestFunction& f, const std::vector<int>& n_grid, std::uint64_t replicas,
                                       std::uint64_t master_seed, int workers = 1);

} // namespace polymer

#endif
