// Size-biased environments built by tilting the environment along one walk.
#ifndef POLYMERLAB_SPINE_HPP
#define POLYMERLAB_SPINE_HPP

#include "polymerlab/env.hpp"
#include "polymerlab/estimators.hpp"
#include "polymerlab/exact.hpp"
#include "polymerlab/field.hpp"
#include "polymerlab/walk.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace polymer {

struct SpineSample {
    std::vector<Site> path;     // X_0 .. X_n
    std::vector<double> tilted; // ω̂_1 .. ω̂_n
    std::uint64_t background_key = 0;
    double log_w = 0.0;         // log W_n(ω̃)

    /// ω̃ at (time, x): the tilted value on the spine, the background draw elsewhere.
    double omega(const EnvModel& env, int time, const Site& x) const;
    EnvironmentOverride override_table() const;
};

/// Streams for the walk, the tilted values and the background all derive
/// from `key`.
SpineSample sample_spine(const WalkKernel& kernel, const EnvModel& env, double beta, int n, std::uint64_t key);

/// W_n under the plain environment of the same replica key.
double plain_log_partition(const WalkKernel& kernel, const EnvModel& env, double beta, int n, std::uint64_t key);

struct TestG {
    std::string name;
    std::function<double(double)> g;
};

/// {1, min(w, 2), 1/(1 + w), 1{w > 1}}.
std::vector<TestG> spine_battery();

struct Estimate {
    double value = 0.0;
    double sigma = 0.0;
    std::uint64_t replicas = 0;
};

/// Ẽ[g(W_n)] from spine samples; records carry {log W_n(ω̃)}.
std::vector<ReplicaRecord> spine_records(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                         std::uint64_t master_seed, std::uint64_t first, std::uint64_t count,
                                         int workers);
/// Plain samples of log W_n; records carry {log W_n}.
std::vector<ReplicaRecord> plain_records(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                         std::uint64_t master_seed, std::uint64_t first, std::uint64_t count,
                                         int workers);

/// Mean of g(W) over spine records.
Estimate spine_estimate(const std::vector<ReplicaRecord>& spine, const std::function<double(double)>& g);
/// Mean of W g(W) over plain records.
Estimate weighted_estimate(const std::vector<ReplicaRecord>& plain, const std::function<double(double)>& g);

Estimate size_biased_expectation(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                 const std::function<double(double)>& g, std::uint64_t replicas,
                                 std::uint64_t master_seed, int workers = 1);

/// Exact law of W_n(ω̃) for a two-point environment, by enumerating spine
/// paths, tilted spine values and off-spine values.
std::vector<LawAtom> exact_spine_law(const EnvModel& env, const WalkKernel& kernel, double beta, int n,
                                     const EnumerationBudget& budget = {});
/// The size-biased law {(w, w·P(W = w))} from the plain exact law.
std::vector<LawAtom> size_biased_law(const std::vector<LawAtom>& law);
/// Total variation distance between two finite laws; values within 1e-12
/// relative are identified.
double total_variation(std::vector<LawAtom> a, std::vector<LawAtom> b);

} // namespace polymer

#endif
