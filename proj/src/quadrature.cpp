#include "polymerlab/quadrature.hpp"

#include "polymerlab/errors.hpp"

#include <cmath>
#include <numbers>

namespace polymer {

QuadratureRule gauss_legendre(int n, double lo, double hi)
{
    if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one point");
    QuadratureRule rule{Eigen::ArrayXd(n), Eigen::ArrayXd(n)};
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Newton on P_n from the Chebyshev-like initial guess.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = mid - half * x;
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

QuadratureRule composite_gauss_legendre(int panels, int n, double lo, double hi)
{
    if (panels < 1) throw ConfigError("composite rule needs at least one panel");
    QuadratureRule out{Eigen::ArrayXd(panels * n), Eigen::ArrayXd(panels * n)};
    const double width = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const QuadratureRule r = gauss_legendre(n, lo + p * width, lo + (p + 1) * width);
        out.nodes.segment(p * n, n) = r.nodes;
        out.weights.segment(p * n, n) = r.weights;
    }
    return out;
}

} // namespace polymer
