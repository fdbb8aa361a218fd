// Environment laws: ω families with closed-form log-MGF and exponential tilts.
#ifndef POLYMERLAB_ENV_HPP
#define POLYMERLAB_ENV_HPP

#include "polymerlab/errors.hpp"
#include "polymerlab/rng.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace polymer {

enum class EnvFamily { standard_gaussian, two_point, uniform };

/// Law of a single environment value ω. Immutable once built.
class EnvModel {
public:
    static EnvModel gaussian();
    /// Mass p on a, 1 - p on b. Requires a <= b and p in [0, 1]; a == b is the
    /// degenerate (disorder-free) law.
    static EnvModel two_point(double a, double b, double p);
    static EnvModel uniform(double lo, double hi);

    EnvFamily family() const noexcept { return family_; }
    double a() const noexcept { return a_; }
    double b() const noexcept { return b_; }
    double p() const noexcept { return p_; }
    double lo() const noexcept { return a_; }
    double hi() const noexcept { return b_; }

    /// True when ω is almost surely constant.
    bool degenerate() const noexcept;
    /// Essential supremum of ω (infinite for the Gaussian).
    double ess_sup() const noexcept;

    /// ω from one well-mixed 64-bit word.
    double draw(std::uint64_t word) const noexcept;
    /// ω under the β-tilted law e^{βω - λ(β)} dP, from one word.
    double draw_tilted(double beta, double log_mgf_beta, std::uint64_t word) const noexcept;

    double cdf(double x) const noexcept;
    double tilted_cdf(double beta, double x) const;

    std::string describe() const;

private:
    EnvModel(EnvFamily f, double a, double b, double p) : family_(f), a_(a), b_(b), p_(p) {}

    EnvFamily family_;
    double a_;
    double b_;
    double p_;
};

/// λ(β) = log E[e^{βω}]. Rejects β < 0.
double log_mgf(const EnvModel& env, double beta);

/// χ(β) = exp(λ(2β) - 2λ(β)), the one-site replica overlap factor.
double overlap_factor(const EnvModel& env, double beta);

double sample_env(const EnvModel& env, RandomStream& rng);

/// out[i] = env.draw(site_word(row, zlo + stride·i)) for i < count.
void draw_row(const EnvModel& env, std::uint64_t row, int zlo, int stride, int count, double* out);
double sample_tilted(const EnvModel& env, double beta, RandomStream& rng);

/// Lazily addressed i.i.d. field ω_{n,x}: a pure function of
/// (key, n, x) so the same environment can be replayed by any consumer.
class EnvironmentStream {
public:
    EnvironmentStream(EnvModel env, std::uint64_t key) : env_(env), key_(key) {}

    const EnvModel& model() const noexcept { return env_; }
    std::uint64_t key() const noexcept { return key_; }

    /// Hash of (time, all but the last coordinate). Sites on one row then
    /// differ only in their last coordinate.
    std::uint64_t row_key(int time, std::span<const int> prefix) const noexcept
    {
        std::uint64_t h = hash_combine(key_, static_cast<std::uint64_t>(time));
        for (int c : prefix) {
            h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(c)));
        }
        return h;
    }

    static std::uint64_t site_word(std::uint64_t row, int last) noexcept
    {
        return mix64(row + kGolden * static_cast<std::uint64_t>(static_cast<std::int64_t>(last)));
    }

    double omega(int time, std::span<const int> site) const noexcept
    {
        const auto prefix = site.first(site.size() - 1);
        return env_.draw(site_word(row_key(time, prefix), site.back()));
    }

private:
    EnvModel env_;
    std::uint64_t key_;
};

} // namespace polymer

#endif
