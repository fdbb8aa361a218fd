// Small statistical helpers shared by estimators and tests.
#ifndef POLYMERLAB_STATS_HPP
#define POLYMERLAB_STATS_HPP

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace polymer {

/// Power sums of a sample. Merging adds sums, so it is associative for a fixed
/// grouping and exactly reproducible when merged in a fixed order.
struct Moments {
    std::int64_t count = 0;
    double s1 = 0.0;
    double s2 = 0.0;
    double s4 = 0.0;

    void add(double x) noexcept
    {
        ++count;
        s1 += x;
        const double x2 = x * x;
        s2 += x2;
        s4 += x2 * x2;
    }
    void merge(const Moments& o) noexcept
    {
        count += o.count;
        s1 += o.s1;
        s2 += o.s2;
        s4 += o.s4;
    }
    double mean() const noexcept { return count ? s1 / count : 0.0; }
    double variance() const noexcept;
    /// Standard error of the mean.
    double stderr_mean() const noexcept;
    /// Standard error of the second-moment estimate s2/count.
    double stderr_second() const noexcept;
};

/// Kolmogorov limiting survival function Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}.
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic;
    double p_value;
};

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);

struct LinearFit {
    double intercept;
    double slope;
    double slope_stderr;
};

/// Ordinary least squares y ≈ intercept + slope·x.
LinearFit least_squares(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y);

} // namespace polymer

#endif
