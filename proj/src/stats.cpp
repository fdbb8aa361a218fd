#include "polymerlab/stats.hpp"

#include "polymerlab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace polymer {

double Moments::variance() const noexcept
{
    if (count < 2) return 0.0;
    const double m = mean();
    return std::max(0.0, (s2 - count * m * m) / static_cast<double>(count - 1));
}

double Moments::stderr_mean() const noexcept { return count ? std::sqrt(variance() / count) : 0.0; }

double Moments::stderr_second() const noexcept
{
    if (count < 2) return 0.0;
    const double m2 = s2 / count;
    const double var = std::max(0.0, (s4 / count - m2 * m2) * count / (count - 1.0));
    return std::sqrt(var / count);
}

double kolmogorov_survival(double lambda)
{
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) throw ConfigError("KS test needs nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::fabs(i / na - j / nb));
    }
    const double ne = na * nb / (na + nb);
    const double sq = std::sqrt(ne);
    return {d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)};
}

KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf)
{
    if (a.empty()) throw ConfigError("KS test needs a nonempty sample");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    std::size_t i = 0;
    while (i < a.size()) {
        const double x = a[i];
        const double before = i / n;
        while (i < a.size() && a[i] == x) ++i;
        const double f = cdf(x);
        // F may jump at x (atoms); compare against both sides.
        d = std::max({d, std::fabs(i / n - f), std::fabs(before - f)});
    }
    const double sq = std::sqrt(n);
    return {d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)};
}

LinearFit least_squares(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y)
{
    const Eigen::Index n = x.size();
    if (n < 2 || y.size() != n) throw ConfigError("least squares needs at least two matching points");
    Eigen::MatrixXd A(n, 2);
    A.col(0).setOnes();
    A.col(1) = x.matrix();
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(y.matrix());
    double se = 0.0;
    if (n > 2) {
        const double rss = (A * coef - y.matrix()).squaredNorm();
        const double sxx = (x - x.mean()).square().sum();
        se = std::sqrt(rss / (n - 2) / sxx);
    }
    return {coef[0], coef[1], se};
}

} // namespace polymer
