// Transfer-matrix evolution of point-to-point partition functions and of the
// plane-started (discrete stochastic heat equation) field.
#ifndef POLYMERLAB_FIELD_HPP
#define POLYMERLAB_FIELD_HPP

#include "polymerlab/env.hpp"
#include "polymerlab/lattice.hpp"
#include "polymerlab/walk.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace polymer {

/// Sites grouped in rows that share all but the last coordinate. A row holds
/// z = zlo, zlo + stride, ..., contiguously in memory.
class RowLayout {
public:
    struct Row {
        std::int64_t offset;
        int zlo;
        int count;
    };

    RowLayout() = default;
    /// Builds rows for every prefix in [-reach, reach]^{dim-1}; `span`
    /// returns the z-interval of a prefix, or count = 0 to skip it.
    RowLayout(int dim, int stride, int reach, const std::function<Row(std::span<const int>)>& span);

    static RowLayout box(int dim, int half);
    /// |x|_1 <= radius with the parity of radius.
    static RowLayout parity_ball(int dim, int radius);
    /// Sites within l1 distance `radius` of the cube [-half, half]^dim.
    static RowLayout dilated_cube(int dim, int half, int radius);

    int dim() const noexcept { return dim_; }
    int stride() const noexcept { return stride_; }
    std::int64_t size() const noexcept { return size_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }
    std::span<const int> prefix(std::size_t r) const noexcept
    {
        const auto w = static_cast<std::size_t>(dim_ - 1);
        return {prefixes_.data() + r * w, w};
    }
    /// Row id or -1.
    int row_of(std::span<const int> prefix) const;
    /// Flat index or -1 when the site is not stored.
    std::int64_t index(const Site& x) const;
    Site site(std::int64_t index) const;

private:
    std::int64_t prefix_key(std::span<const int> prefix) const noexcept;

    int dim_ = 1;
    int stride_ = 1;
    int reach_ = 0;
    std::int64_t size_ = 0;
    std::vector<Row> rows_;
    std::vector<int> prefixes_;
    std::vector<int> dense_lookup_;
    std::unordered_map<std::int64_t, int> sparse_lookup_;
};

enum class FieldMode {
    point,          // Ŵ_n(x) from a walk started at the origin
    plane_periodic, // Ỹ(n, x) on a periodic box
    plane_cone,     // Ỹ(n, x) on the dependency cone of a final window
};

/// Replacement environment values at chosen (time, site) pairs.
struct EnvironmentOverride {
    std::vector<std::vector<std::pair<Site, double>>> by_time;

    void set(int time, const Site& x, double omega);
};

/// The field is stored as nonnegative linear values times one shared scale,
/// e^{log_scale}, renormalized after every step; log Ŵ_n(x) = log_scale + log v(x).
class PolymerField {
public:
    static PolymerField init_point(WalkKernel kernel, EnvModel env, double beta);
    static PolymerField init_plane(WalkKernel kernel, EnvModel env, double beta, int box_half);
    /// Evolves only the sites that can influence [-window, window]^d at time
    /// `horizon`; values in the window equal those of any box that contains
    /// the cone.
    static PolymerField init_plane_cone(WalkKernel kernel, EnvModel env, double beta, int window, int horizon);

    FieldMode mode() const noexcept { return mode_; }
    int time() const noexcept { return time_; }
    double beta() const noexcept { return beta_; }
    double lambda() const noexcept { return lambda_; }
    const WalkKernel& kernel() const noexcept { return kernel_; }
    const EnvModel& env() const noexcept { return env_; }
    const RowLayout& layout() const noexcept { return layout_; }

    /// One time step with ω_{n+1, ·} read from `stream` (and `override`).
    void evolve_step(const EnvironmentStream& stream, const EnvironmentOverride* override = nullptr);

    /// Point mode: log W_n accumulated step by step.
    double log_total() const noexcept { return log_total_; }
    double total_mass() const noexcept;
    /// log Σ_x e^{logw(x)} recomputed from the stored values.
    double log_sum_direct() const;

    double log_value(const Site& x) const;
    SiteFunction log_values() const;
    /// μ_n = Ŵ_n / W_n (point mode).
    SiteFunction endpoint_measure() const;
    /// max_x μ_n(x) with its site (first in layout order on ties).
    double max_endpoint(Site* argmax = nullptr) const;
    /// max_x log Ŵ_n(x).
    double log_max_value() const;

    /// Calls f(site, linear value relative to the scale) for stored sites.
    void for_each(const std::function<void(const Site&, double)>& f) const;
    double log_scale() const noexcept { return log_scale_; }
    const Eigen::ArrayXd& values() const noexcept { return values_; }

    /// Test hook: rows of the next steps are processed in a shuffled order.
    void set_row_order_seed(std::uint64_t seed) noexcept { row_order_seed_ = seed; }

private:
    PolymerField(WalkKernel kernel, EnvModel env, double beta, FieldMode mode);

    RowLayout next_layout() const;

    WalkKernel kernel_;
    EnvModel env_;
    double beta_;
    double lambda_;
    FieldMode mode_;
    int time_ = 0;
    int horizon_ = 0;
    int window_ = 0;
    RowLayout layout_;
    Eigen::ArrayXd values_;
    double log_scale_ = 0.0;
    double log_total_ = 0.0;
    std::uint64_t row_order_seed_ = 0;
};

struct OvershootOutcome {
    bool hit = false;
    int time = 0;            // τ_A on a hit, n_max when censored
    double log_w = 0.0;      // log W at that time
    double max_mu = 0.0;     // max_x μ_{τ_A}(x), hits only
    double log_max_point = 0.0; // max_x log Ŵ_{τ_A}(x), hits only
    Site argmax;
};

/// Evolves until W_n >= A (checked after whole steps) or n = n_max.
OvershootOutcome run_until_overshoot(const WalkKernel& kernel, const EnvModel& env, double beta, double A, int n_max,
                                     const EnvironmentStream& stream);

/// Compactly supported test function on R^d.
struct TestFunction {
    std::string name;
    std::function<double(const Eigen::ArrayXd&)> f;
    double support_radius; // f = 0 outside [-r, r]^d
    double integral;       // ∫ f over R^d

    /// Π (1 - y_i²)² on [-1, 1]^d.
    static TestFunction bump(int dim);
    static TestFunction zero();
};

struct PlaneFunctional {
    double fluctuation = 0.0; // n^{-d/2} Σ f(x/√n)(Ỹ(n,x) - 1)
    double riemann = 0.0;     // n^{-d/2} Σ f(x/√n) Ỹ(n,x)
    double riemann_flat = 0.0; // same with Ỹ ≡ 1
    double mean_y = 0.0;      // mean of Ỹ(n, ·) over the window
};

/// Smallest window half-width holding the support of f(·/√n).
int plane_window(const TestFunction& f, int n);
/// Box half-width required for the periodic box to be exact on the window.
int plane_required_box(const TestFunction& f, int n, const WalkKernel& kernel);

/// One sample of the fluctuation field. `box_half` = 0 uses the dependency
/// cone; otherwise a periodic box of that half-width, rejected when too small.
PlaneFunctional plane_field_functional(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                       int box_half, const TestFunction& f, const EnvironmentStream& stream);

} // namespace polymer

#endif
