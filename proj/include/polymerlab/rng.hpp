// Counter-based random numbers.
//
// Every random quantity in the toolkit is a pure function of a 64-bit key and
// a counter, so environments can be regenerated lazily at any (time, site)
// and replicas are reproducible independently of scheduling.
#ifndef POLYMERLAB_RNG_HPP
#define POLYMERLAB_RNG_HPP

#include <cstdint>
#include <limits>

namespace polymer {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t key, std::uint64_t value) noexcept
{
    return mix64(key + kGolden * (value + 1) + (key << 6) + (key >> 2));
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1).
constexpr double to_open_unit(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Exact standard normal from one well-mixed 64-bit word. The fast path uses
/// the word directly; rejections draw further words by SplitMix stepping
/// from it, so the result is a pure function of `seed_word`.
double ziggurat_normal(std::uint64_t seed_word) noexcept;

struct ZigguratTables {
    double x[129];
    double ratio[128];
    double f[129]; // e^{-x²/2}
};
const ZigguratTables& ziggurat_tables() noexcept;

/// ziggurat_normal with the accepting first round inlined.
inline double ziggurat_normal_fast(std::uint64_t seed_word) noexcept
{
    const ZigguratTables& t = ziggurat_tables();
    const int block = static_cast<int>(seed_word & 0x7f);
    const double u = 2.0 * to_unit(seed_word) - 1.0;
    if (u < t.ratio[block] && u > -t.ratio[block]) return u * t.x[block];
    return ziggurat_normal(seed_word);
}

/// Sequential stream: the k-th output is mix64(key + (k+1)·golden).
/// Satisfies UniformRandomBitGenerator.
class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream() = default;
    explicit RandomStream(std::uint64_t key) noexcept : state_(mix64(key)) {}
    RandomStream(std::uint64_t key, std::uint64_t stream) noexcept
        : state_(hash_combine(mix64(key), stream))
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        state_ += kGolden;
        return mix64(state_);
    }

    double uniform() noexcept { return to_unit((*this)()); }
    double open_uniform() noexcept { return to_open_unit((*this)()); }
    double normal() noexcept { return ziggurat_normal((*this)()); }

    /// Independent child stream (replica, worker, purpose...).
    RandomStream split(std::uint64_t tag) const noexcept { return RandomStream(state_, tag); }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0;
};

/// Seed for replica `replica_id` under `master_seed`; the first R replicas of
/// a run are the same whatever the total replica count.
constexpr std::uint64_t replica_key(std::uint64_t master_seed, std::uint64_t replica_id) noexcept
{
    return hash_combine(mix64(master_seed ^ 0x5ca1ab1e0ddba11ULL), replica_id);
}

/// Purpose tags for streams derived from a replica key.
enum class StreamTag : std::uint64_t {
    environment = 1,
    spine_path = 2,
    spine_tilt = 3,
    auxiliary = 4,
};

constexpr std::uint64_t derive_key(std::uint64_t key, StreamTag tag) noexcept
{
    return hash_combine(key, static_cast<std::uint64_t>(tag));
}

} // namespace polymer

#endif
