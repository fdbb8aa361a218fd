// Reference-walk step laws, the averaging operator, and the return / first
// collision structure of the difference of two independent walks.
#ifndef POLYMERLAB_WALK_HPP
#define POLYMERLAB_WALK_HPP

#include "polymerlab/lattice.hpp"
#include "polymerlab/rng.hpp"

#include <Eigen/Core>

#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace polymer {

enum class WalkKind { srw, finite_support, nu1, nu2 };

/// A step distribution ν on Z^d with finite (possibly truncated) support.
class WalkKernel {
public:
    /// Nearest-neighbour simple random walk: mass 1/(2d) on each unit vector.
    static WalkKernel simple(int dim);
    /// Arbitrary finite-support law; masses must be nonnegative and sum to 1.
    static WalkKernel finite(int dim, const std::vector<std::pair<Site, double>>& masses);
    /// ν1(x) ∝ log²(2+|x|)/(1+|x|)² on Z, truncated to |x| <= rmax.
    /// rmax = 0 picks the default radius (see heavy_tail_default_radius).
    static WalkKernel nu1(int rmax = 0);
    /// ν2(x) ∝ log(2+|x|)/(1+|x|)⁴ on Z^d (|x| the l1 norm), d in {1, 2, 3}.
    static WalkKernel nu2(int dim, int rmax = 0);

    WalkKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    /// Truncation radius (heavy-tail kinds), 0 otherwise.
    int rmax() const noexcept { return rmax_; }
    /// Mass of the untruncated law beyond rmax (heavy-tail kinds), 0 otherwise.
    double truncated_mass() const noexcept { return truncated_mass_; }

    const std::vector<Site>& steps() const noexcept { return steps_; }
    const Eigen::ArrayXd& probs() const noexcept { return probs_; }
    /// max_x |x|_inf over the support.
    int max_step() const noexcept { return max_step_; }
    /// max_x |x|_1 over the support.
    int max_l1_step() const noexcept { return max_l1_step_; }

    bool is_simple() const noexcept { return kind_ == WalkKind::srw; }
    /// Single-site support: both walks move in lockstep.
    bool degenerate() const noexcept { return steps_.size() == 1; }

    double mass(const Site& x) const;
    std::complex<double> characteristic(const Eigen::Ref<const Eigen::ArrayXd>& theta) const;
    Site sample(RandomStream& rng) const;

    std::string describe() const;

private:
    WalkKernel(WalkKind kind, int dim, std::vector<Site> steps, Eigen::ArrayXd probs, int rmax, double truncated);
    void build_alias();

    WalkKind kind_;
    int dim_;
    std::vector<Site> steps_;
    Eigen::ArrayXd probs_;
    int rmax_ = 0;
    double truncated_mass_ = 0.0;
    int max_step_ = 0;
    int max_l1_step_ = 0;
    Eigen::ArrayXd alias_prob_;
    std::vector<int> alias_index_;
};

/// Smallest radius whose truncated mass is <= 1e-10, capped so the support
/// stays small enough for exact pmf arithmetic.
int heavy_tail_default_radius(WalkKind kind, int dim);

/// (Df)(x) = Σ_y ν(y - x) f(y).
SiteFunction apply_D(const WalkKernel& kernel, const SiteFunction& f);
/// Time-reversed operator: Σ_y ν(x - y) f(y).
SiteFunction apply_D_reversed(const WalkKernel& kernel, const SiteFunction& f);

enum class ReturnMethod {
    automatic,
    quadrature, // tensor Gauss-Legendre average of |φ|^{2n}, d <= 4
    box_dp,     // exact propagation of the walk law on its support box
    srw_series, // exact axis decomposition, simple walk only
};

/// r_n = P(Z_n = 0), n = 0..horizon, for the difference Z of two independent
/// ν-walks. `quad_points` seeds the quadrature refinement.
Eigen::ArrayXd return_prob_series(const WalkKernel& kernel, int horizon, int quad_points = 32,
                                  ReturnMethod method = ReturnMethod::automatic);

enum class GreenVerdict { transient, recurrent, indeterminate };

struct CollisionResult {
    double pi = 1.0;
    double green = std::numeric_limits<double>::infinity();
    GreenVerdict verdict = GreenVerdict::recurrent;
    /// Change of the Green integral between the last two refinements.
    double achieved_tol = 0.0;
    int refinement_level = 0;
    std::string method;
};

/// π = P(two independent walks ever meet after time 0) = 1 - 1/G with
/// G = Σ_n r_n.
CollisionResult collision_probability(const WalkKernel& kernel, double tol = 1e-10);

/// The Green integral at one fixed refinement level (no convergence loop).
CollisionResult green_integral_at_level(const WalkKernel& kernel, int level, double shell_tol = 1e-13);

struct RenewalTable {
    int horizon = 0;
    Eigen::ArrayXd r;  // r_0..r_N
    Eigen::ArrayXd K;  // K_0..K_N, K_0 = 0
    Eigen::ArrayXd Q;  // Q_0..Q_N, Q_n = 1 - Σ_{m<=n} K_m
    double pi_partial = 0.0;
};

/// First-collision law by renewal inversion of the return probabilities.
RenewalTable first_collision_law(const Eigen::ArrayXd& r);

/// η = liminf_R -log ν(|x| > R) / log R for the untruncated family.
double tail_exponent_eta(const WalkKernel& kernel);

} // namespace polymer

#endif
