#ifndef POLYMERLAB_QUADRATURE_HPP
#define POLYMERLAB_QUADRATURE_HPP

#include <Eigen/Core>

namespace polymer {

struct QuadratureRule {
    Eigen::ArrayXd nodes;
    Eigen::ArrayXd weights;
};

/// n-point Gauss–Legendre rule on [lo, hi].
QuadratureRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0);

/// Composite rule: `panels` equal panels on [lo, hi], n Gauss points each.
QuadratureRule composite_gauss_legendre(int panels, int n, double lo, double hi);

} // namespace polymer

#endif
