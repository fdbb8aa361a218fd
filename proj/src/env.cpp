#include "polymerlab/env.hpp"

#include <cmath>
#include <sstream>

namespace polymer {

namespace {

constexpr double kUniformSeriesCutoff = 1e-8;

// log((e^{x·hi} - e^{x·lo}) / (x (hi - lo))) for x > 0, written to avoid
// overflow at large x.
double uniform_log_mgf(double lo, double hi, double x)
{
    const double width = hi - lo;
    if (x < kUniformSeriesCutoff) {
        return x * (lo + hi) / 2.0 + x * x * width * width / 24.0;
    }
    return x * hi + std::log(-std::expm1(-x * width)) - std::log(x * width);
}

double log_add_exp(double u, double v)
{
    const double m = std::max(u, v);
    return m + std::log1p(std::exp(std::min(u, v) - m));
}

void require_beta(double beta)
{
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw ConfigError("beta must be a finite nonnegative number, got " + std::to_string(beta));
    }
}

// Standard normal CDF.
double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

EnvModel EnvModel::gaussian() { return {EnvFamily::standard_gaussian, 0.0, 0.0, 0.0}; }

EnvModel EnvModel::two_point(double a, double b, double p)
{
    if (!(a <= b) || !std::isfinite(a) || !std::isfinite(b)) {
        throw ConfigError("two-point environment requires finite a <= b");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("two-point environment requires p in [0, 1]");
    }
    return {EnvFamily::two_point, a, b, p};
}

EnvModel EnvModel::uniform(double lo, double hi)
{
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError("uniform environment requires finite lo < hi");
    }
    return {EnvFamily::uniform, lo, hi, 0.0};
}

bool EnvModel::degenerate() const noexcept
{
    return family_ == EnvFamily::two_point && (a_ == b_ || p_ == 0.0 || p_ == 1.0);
}

double EnvModel::ess_sup() const noexcept
{
    switch (family_) {
    case EnvFamily::standard_gaussian:
        return std::numeric_limits<double>::infinity();
    case EnvFamily::two_point:
        return p_ == 1.0 ? a_ : b_;
    case EnvFamily::uniform:
        return b_;
    }
    return 0.0;
}

double EnvModel::draw(std::uint64_t word) const noexcept
{
    switch (family_) {
    case EnvFamily::standard_gaussian:
        return ziggurat_normal(word);
    case EnvFamily::two_point:
        return to_unit(word) < p_ ? a_ : b_;
    case EnvFamily::uniform:
        return a_ + (b_ - a_) * to_unit(word);
    }
    return 0.0;
}

double EnvModel::draw_tilted(double beta, double log_mgf_beta, std::uint64_t word) const noexcept
{
    switch (family_) {
    case EnvFamily::standard_gaussian:
        return beta + ziggurat_normal(word);
    case EnvFamily::two_point: {
        const double mass_a = p_ == 0.0 ? 0.0 : p_ * std::exp(beta * a_ - log_mgf_beta);
        return to_unit(word) < mass_a ? a_ : b_;
    }
    case EnvFamily::uniform: {
        const double width = b_ - a_;
        const double u = to_unit(word);
        const double x = beta * width;
        if (x < kUniformSeriesCutoff) {
            return a_ + width * u;
        }
        // Inverse CDF of the density ∝ e^{βw} on [lo, hi], anchored at hi so
        // large β·width stays finite.
        const double from_top = std::log1p(-(1.0 - u) * -std::expm1(-x)) / x;
        return std::min(b_, std::max(a_, b_ + width * from_top));
    }
    }
    return 0.0;
}

double EnvModel::cdf(double x) const noexcept
{
    switch (family_) {
    case EnvFamily::standard_gaussian:
        return phi(x);
    case EnvFamily::two_point:
        if (x < a_) return 0.0;
        if (x < b_) return p_;
        return 1.0;
    case EnvFamily::uniform:
        if (x <= a_) return 0.0;
        if (x >= b_) return 1.0;
        return (x - a_) / (b_ - a_);
    }
    return 0.0;
}

double EnvModel::tilted_cdf(double beta, double x) const
{
    const double lambda = log_mgf(*this, beta);
    switch (family_) {
    case EnvFamily::standard_gaussian:
        return phi(x - beta);
    case EnvFamily::two_point: {
        if (x < a_) return 0.0;
        if (x < b_) return p_ == 0.0 ? 0.0 : p_ * std::exp(beta * a_ - lambda);
        return 1.0;
    }
    case EnvFamily::uniform: {
        if (x <= a_) return 0.0;
        if (x >= b_) return 1.0;
        const double s = beta * (b_ - a_);
        if (s < kUniformSeriesCutoff) return (x - a_) / (b_ - a_);
        return std::expm1(beta * (x - a_)) / std::expm1(s);
    }
    }
    return 0.0;
}

std::string EnvModel::describe() const
{
    std::ostringstream os;
    os.precision(17);
    switch (family_) {
    case EnvFamily::standard_gaussian:
        os << "gaussian";
        break;
    case EnvFamily::two_point:
        os << "two-point(a=" << a_ << ",b=" << b_ << ",p=" << p_ << ")";
        break;
    case EnvFamily::uniform:
        os << "uniform(lo=" << a_ << ",hi=" << b_ << ")";
        break;
    }
    return os.str();
}

double log_mgf(const EnvModel& env, double beta)
{
    require_beta(beta);
    switch (env.family()) {
    case EnvFamily::standard_gaussian:
        return 0.5 * beta * beta;
    case EnvFamily::two_point: {
        if (env.p() == 1.0) return beta * env.a();
        if (env.p() == 0.0) return beta * env.b();
        return log_add_exp(std::log(env.p()) + beta * env.a(), std::log1p(-env.p()) + beta * env.b());
    }
    case EnvFamily::uniform:
        return uniform_log_mgf(env.lo(), env.hi(), beta);
    }
    return 0.0;
}

double overlap_factor(const EnvModel& env, double beta)
{
    return std::exp(log_mgf(env, 2.0 * beta) - 2.0 * log_mgf(env, beta));
}

double sample_env(const EnvModel& env, RandomStream& rng) { return env.draw(rng()); }

void draw_row(const EnvModel& env, std::uint64_t row, int zlo, int stride, int count, double* out)
{
    if (env.family() == EnvFamily::standard_gaussian) {
        // Words first so the hashing vectorizes; then the ziggurat per word.
        constexpr int kChunk = 256;
        std::uint64_t words[kChunk];
        for (int base = 0; base < count; base += kChunk) {
            const int m = std::min(kChunk, count - base);
            for (int i = 0; i < m; ++i) words[i] = EnvironmentStream::site_word(row, zlo + stride * (base + i));
            for (int i = 0; i < m; ++i) out[base + i] = ziggurat_normal_fast(words[i]);
        }
        return;
    }
    for (int i = 0; i < count; ++i) out[i] = env.draw(EnvironmentStream::site_word(row, zlo + stride * i));
}

double sample_tilted(const EnvModel& env, double beta, RandomStream& rng)
{
    return env.draw_tilted(beta, log_mgf(env, beta), rng());
}

} // namespace polymer
