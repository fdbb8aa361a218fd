#include "polymerlab/field.hpp"

#include "polymerlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace polymer {

namespace {

// Flush-to-zero for the duration of a step: far tails of the walk law
// underflow, and subnormal arithmetic would dominate the run time.
class DenormalGuard {
public:
    DenormalGuard() noexcept
    {
#if defined(__SSE__)
        saved_ = _mm_getcsr();
        _mm_setcsr(saved_ | 0x8040);
#endif
    }
    ~DenormalGuard()
    {
#if defined(__SSE__)
        _mm_setcsr(saved_);
#endif
    }
    DenormalGuard(const DenormalGuard&) = delete;
    DenormalGuard& operator=(const DenormalGuard&) = delete;

private:
    unsigned saved_ = 0;
};

int floor_mod(int a, int m)
{
    const int r = a % m;
    return r < 0 ? r + m : r;
}

} // namespace

// ---------------------------------------------------------------------------
// RowLayout

RowLayout::RowLayout(int dim, int stride, int reach, const std::function<Row(std::span<const int>)>& span)
    : dim_(dim), stride_(stride), reach_(reach)
{
    if (dim < 1 || dim > kMaxDim) throw ConfigError("dimension must be in [1, 8]");
    const int w = dim - 1;
    const double side = 2.0 * reach + 1.0;
    const double prefixes = std::pow(side, w);
    if (prefixes > 4e9) throw BudgetExceeded("lattice region too large to index");
    const bool dense = prefixes <= static_cast<double>(1 << 24);
    if (dense) dense_lookup_.assign(static_cast<std::size_t>(prefixes), -1);

    std::vector<int> p(static_cast<std::size_t>(w), -reach);
    const auto total = static_cast<std::int64_t>(prefixes);
    for (std::int64_t lin = 0; lin < total; ++lin) {
        const Row r = span(p);
        if (r.count > 0) {
            const int id = static_cast<int>(rows_.size());
            if (dense) {
                dense_lookup_[static_cast<std::size_t>(lin)] = id;
            } else {
                sparse_lookup_.emplace(lin, id);
            }
            rows_.push_back({size_, r.zlo, r.count});
            prefixes_.insert(prefixes_.end(), p.begin(), p.end());
            size_ += r.count;
        }
        for (int k = w - 1; k >= 0; --k) {
            auto& c = p[static_cast<std::size_t>(k)];
            if (++c <= reach) break;
            c = -reach;
        }
    }
}

RowLayout RowLayout::box(int dim, int half)
{
    return RowLayout(dim, 1, half, [half](std::span<const int>) { return Row{0, -half, 2 * half + 1}; });
}

RowLayout RowLayout::parity_ball(int dim, int radius)
{
    return RowLayout(dim, 2, radius, [radius](std::span<const int> p) {
        int norm = 0;
        for (int c : p) norm += std::abs(c);
        if (norm > radius) return Row{0, 0, 0};
        const int zmax = radius - norm;
        return Row{0, -zmax, zmax + 1};
    });
}

RowLayout RowLayout::dilated_cube(int dim, int half, int radius)
{
    return RowLayout(dim, 1, half + radius, [half, radius](std::span<const int> p) {
        int q = 0;
        for (int c : p) q += std::max(0, std::abs(c) - half);
        if (q > radius) return Row{0, 0, 0};
        const int zh = half + radius - q;
        return Row{0, -zh, 2 * zh + 1};
    });
}

std::int64_t RowLayout::prefix_key(std::span<const int> prefix) const noexcept
{
    std::int64_t lin = 0;
    const std::int64_t side = 2 * static_cast<std::int64_t>(reach_) + 1;
    for (int c : prefix) lin = lin * side + (c + reach_);
    return lin;
}

int RowLayout::row_of(std::span<const int> prefix) const
{
    for (int c : prefix) {
        if (c < -reach_ || c > reach_) return -1;
    }
    const std::int64_t lin = prefix_key(prefix);
    if (!dense_lookup_.empty()) return dense_lookup_[static_cast<std::size_t>(lin)];
    const auto it = sparse_lookup_.find(lin);
    return it == sparse_lookup_.end() ? -1 : it->second;
}

std::int64_t RowLayout::index(const Site& x) const
{
    if (x.size() != dim_) return -1;
    const int r = row_of({x.data(), static_cast<std::size_t>(dim_ - 1)});
    if (r < 0) return -1;
    const Row& row = rows_[static_cast<std::size_t>(r)];
    const int dz = x[dim_ - 1] - row.zlo;
    if (dz < 0 || dz % stride_ != 0 || dz / stride_ >= row.count) return -1;
    return row.offset + dz / stride_;
}

Site RowLayout::site(std::int64_t index) const
{
    auto it = std::upper_bound(rows_.begin(), rows_.end(), index,
                               [](std::int64_t i, const Row& r) { return i < r.offset; });
    const auto r = static_cast<std::size_t>(std::distance(rows_.begin(), it) - 1);
    Site x(dim_);
    const auto pre = prefix(r);
    for (int k = 0; k < dim_ - 1; ++k) x[k] = pre[static_cast<std::size_t>(k)];
    x[dim_ - 1] = rows_[r].zlo + stride_ * static_cast<int>(index - rows_[r].offset);
    return x;
}

void EnvironmentOverride::set(int time, const Site& x, double omega)
{
    if (time < 1) throw ConfigError("environment overrides start at time 1");
    if (by_time.size() <= static_cast<std::size_t>(time)) by_time.resize(static_cast<std::size_t>(time) + 1);
    auto& slot = by_time[static_cast<std::size_t>(time)];
    for (auto& [site, value] : slot) {
        if (site == x) {
            value = omega;
            return;
        }
    }
    slot.emplace_back(x, omega);
}

// ---------------------------------------------------------------------------
// PolymerField

PolymerField::PolymerField(WalkKernel kernel, EnvModel env, double beta, FieldMode mode)
    : kernel_(std::move(kernel)), env_(env), beta_(beta), lambda_(log_mgf(env, beta)), mode_(mode)
{
}

PolymerField PolymerField::init_point(WalkKernel kernel, EnvModel env, double beta)
{
    PolymerField f(std::move(kernel), env, beta, FieldMode::point);
    const int d = f.kernel_.dim();
    f.layout_ = f.kernel_.is_simple() ? RowLayout::parity_ball(d, 0) : RowLayout::box(d, 0);
    f.values_ = Eigen::ArrayXd::Ones(1);
    return f;
}

PolymerField PolymerField::init_plane(WalkKernel kernel, EnvModel env, double beta, int box_half)
{
    if (box_half < 0) throw ConfigError("field.box must be nonnegative");
    PolymerField f(std::move(kernel), env, beta, FieldMode::plane_periodic);
    f.layout_ = RowLayout::box(f.kernel_.dim(), box_half);
    f.values_ = Eigen::ArrayXd::Ones(f.layout_.size());
    return f;
}

PolymerField PolymerField::init_plane_cone(WalkKernel kernel, EnvModel env, double beta, int window, int horizon)
{
    if (window < 0 || horizon < 0) throw ConfigError("cone window and horizon must be nonnegative");
    PolymerField f(std::move(kernel), env, beta, FieldMode::plane_cone);
    f.window_ = window;
    f.horizon_ = horizon;
    const int d = f.kernel_.dim();
    f.layout_ = f.kernel_.is_simple() ? RowLayout::dilated_cube(d, window, horizon)
                                      : RowLayout::box(d, window + horizon * f.kernel_.max_step());
    f.values_ = Eigen::ArrayXd::Ones(f.layout_.size());
    return f;
}

RowLayout PolymerField::next_layout() const
{
    const int d = kernel_.dim();
    const int n = time_ + 1;
    switch (mode_) {
    case FieldMode::point:
        if (kernel_.is_simple()) return RowLayout::parity_ball(d, n);
        return RowLayout::box(d, n * kernel_.max_step());
    case FieldMode::plane_periodic:
        return layout_;
    case FieldMode::plane_cone:
        if (n > horizon_) throw ConfigError("cone field evolved past its horizon");
        if (kernel_.is_simple()) return RowLayout::dilated_cube(d, window_, horizon_ - n);
        return RowLayout::box(d, window_ + (horizon_ - n) * kernel_.max_step());
    }
    return layout_;
}

void PolymerField::evolve_step(const EnvironmentStream& stream, const EnvironmentOverride* override)
{
    DenormalGuard guard;
    const int d = kernel_.dim();
    const int w = d - 1;
    const int t = time_ + 1;
    RowLayout next = next_layout();
    Eigen::ArrayXd fresh = Eigen::ArrayXd::Zero(next.size());

    // Point mode gathers ν(s)·v(x - s), plane mode ν(s)·v(x + s).
    const int sgn = mode_ == FieldMode::point ? 1 : -1;
    const bool periodic = mode_ == FieldMode::plane_periodic;
    const int side = periodic ? layout_.rows().front().count : 1;
    const int half = (side - 1) / 2;
    const auto& steps = kernel_.steps();
    const auto& probs = kernel_.probs();
    const int stride = next.stride();

    const std::vector<std::pair<Site, double>>* overrides = nullptr;
    if (override && static_cast<std::size_t>(t) < override->by_time.size() &&
        !override->by_time[static_cast<std::size_t>(t)].empty()) {
        overrides = &override->by_time[static_cast<std::size_t>(t)];
    }

    std::vector<std::size_t> order(next.rows().size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (row_order_seed_ != 0) {
        RandomStream shuffle_rng(row_order_seed_, static_cast<std::uint64_t>(t));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
    }

    std::vector<int> src_prefix(static_cast<std::size_t>(w));
    double* out = fresh.data();
    const double* in = values_.data();
    for (std::size_t r : order) {
        const auto& row = next.rows()[r];
        const auto pre = next.prefix(r);
        double* acc = out + row.offset;
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const Site& s = steps[k];
            for (int j = 0; j < w; ++j) {
                int c = pre[static_cast<std::size_t>(j)] - sgn * s[j];
                if (periodic) c = floor_mod(c + half, side) - half;
                src_prefix[static_cast<std::size_t>(j)] = c;
            }
            const int sr = layout_.row_of(src_prefix);
            if (sr < 0) continue;
            const auto& src = layout_.rows()[static_cast<std::size_t>(sr)];
            const double p = probs[static_cast<Eigen::Index>(k)];
            const int z0 = row.zlo - sgn * s[w];
            if (periodic) {
                const int shift = floor_mod(z0 - src.zlo, side);
                const double* from = in + src.offset;
                for (int i = 0; i < side - shift; ++i) acc[i] += p * from[shift + i];
                for (int i = side - shift; i < side; ++i) acc[i] += p * from[i - (side - shift)];
                continue;
            }
            const int shift = (z0 - src.zlo) / stride; // exact: rows share parity classes
            const int i0 = std::max(0, -shift);
            const int i1 = std::min(row.count, src.count - shift);
            const double* from = in + src.offset + shift;
            for (int i = i0; i < i1; ++i) acc[i] += p * from[i];
        }
    }

    if (beta_ != 0.0) {
        Eigen::ArrayXd omega(next.size());
        for (std::size_t r = 0; r < next.rows().size(); ++r) {
            const auto& row = next.rows()[r];
            draw_row(env_, stream.row_key(t, next.prefix(r)), row.zlo, stride, row.count, omega.data() + row.offset);
        }
        if (overrides) {
            for (const auto& [x, value] : *overrides) {
                const std::int64_t i = next.index(x);
                if (i >= 0) omega[i] = value;
            }
        }
        fresh *= (beta_ * omega - lambda_).exp();
    }

    layout_ = std::move(next);
    values_ = std::move(fresh);
    time_ = t;

    if (mode_ == FieldMode::point) {
        const double total = values_.sum();
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw ConvergenceError("partition function left the floating-point range at n = " + std::to_string(t),
                                   total);
        }
        values_ /= total;
        // W_n ≡ 1 at β = 0; do not let rounding of Σν say otherwise.
        log_scale_ = beta_ == 0.0 ? 0.0 : log_scale_ + std::log(total);
        log_total_ = log_scale_;
    } else if (beta_ == 0.0) {
        values_.setOnes();
    } else {
        const double top = values_.maxCoeff();
        if (top > 1e150 || top < 1e-150) {
            values_ /= top;
            log_scale_ += std::log(top);
        }
    }
}

double PolymerField::total_mass() const noexcept { return std::exp(log_total_); }

double PolymerField::log_sum_direct() const { return log_scale_ + std::log(values_.sum()); }

double PolymerField::log_value(const Site& x) const
{
    const std::int64_t i = layout_.index(x);
    if (i < 0 || values_[i] <= 0.0) return -INFINITY;
    return log_scale_ + std::log(values_[i]);
}

void PolymerField::for_each(const std::function<void(const Site&, double)>& f) const
{
    for (std::size_t r = 0; r < layout_.rows().size(); ++r) {
        const auto& row = layout_.rows()[r];
        const auto pre = layout_.prefix(r);
        Site x(layout_.dim());
        for (int k = 0; k + 1 < layout_.dim(); ++k) x[k] = pre[static_cast<std::size_t>(k)];
        for (int i = 0; i < row.count; ++i) {
            x[layout_.dim() - 1] = row.zlo + layout_.stride() * i;
            f(x, values_[row.offset + i]);
        }
    }
}

SiteFunction PolymerField::log_values() const
{
    SiteFunction out;
    for_each([&](const Site& x, double v) {
        if (v > 0.0) out.emplace(x, log_scale_ + std::log(v));
    });
    return out;
}

SiteFunction PolymerField::endpoint_measure() const
{
    if (mode_ != FieldMode::point) throw ConfigError("the endpoint measure needs a point-started field");
    const double total = values_.sum();
    SiteFunction out;
    for_each([&](const Site& x, double v) {
        if (v > 0.0) out.emplace(x, v / total);
    });
    return out;
}

double PolymerField::max_endpoint(Site* argmax) const
{
    Eigen::Index i = 0;
    const double top = values_.maxCoeff(&i);
    if (argmax) *argmax = layout_.site(i);
    return top / values_.sum();
}

double PolymerField::log_max_value() const { return log_scale_ + std::log(values_.maxCoeff()); }

// ---------------------------------------------------------------------------

OvershootOutcome run_until_overshoot(const WalkKernel& kernel, const EnvModel& env, double beta, double A, int n_max,
                                     const EnvironmentStream& stream)
{
    if (!(A > 1.0)) throw ConfigError("run.A must exceed 1");
    if (n_max < 1) throw ConfigError("field.nmax must be at least 1");
    PolymerField field = PolymerField::init_point(kernel, env, beta);
    const double log_a = std::log(A);
    OvershootOutcome out;
    for (int n = 1; n <= n_max; ++n) {
        field.evolve_step(stream);
        if (field.log_total() >= log_a) {
            out.hit = true;
            out.time = n;
            out.log_w = field.log_total();
            out.max_mu = field.max_endpoint(&out.argmax);
            out.log_max_point = field.log_max_value();
            return out;
        }
    }
    out.time = n_max;
    out.log_w = field.log_total();
    return out;
}

TestFunction TestFunction::bump(int dim)
{
    return {"bump",
            [](const Eigen::ArrayXd& y) {
                if ((y.abs() >= 1.0).any()) return 0.0;
                return (1.0 - y.square()).square().prod();
            },
            1.0, std::pow(16.0 / 15.0, dim)};
}

TestFunction TestFunction::zero()
{
    return {"zero", [](const Eigen::ArrayXd&) { return 0.0; }, 0.0, 0.0};
}

int plane_window(const TestFunction& f, int n) { return static_cast<int>(std::floor(std::sqrt(n) * f.support_radius)); }

int plane_required_box(const TestFunction& f, int n, const WalkKernel& kernel)
{
    return plane_window(f, n) + n * kernel.max_step();
}

PlaneFunctional plane_field_functional(const WalkKernel& kernel, const EnvModel& env, double beta, int n,
                                       int box_half, const TestFunction& f, const EnvironmentStream& stream)
{
    if (n < 1) throw ConfigError("plane field needs n >= 1");
    const int window = plane_window(f, n);
    const int need = plane_required_box(f, n, kernel);
    if (box_half != 0 && box_half < need) {
        throw ConfigError("field.box = " + std::to_string(box_half) + " is too small: the test function window (" +
                          std::to_string(window) + ") plus the walk reach (" + std::to_string(need - window) +
                          ") needs at least " + std::to_string(need));
    }
    const int d = kernel.dim();
    const double scale = std::pow(static_cast<double>(n), -0.5 * d);
    const double root = std::sqrt(static_cast<double>(n));

    PlaneFunctional out;
    const BoxLayout win(d, window);
    Eigen::ArrayXd weights(win.size());
    for (std::int64_t i = 0; i < win.size(); ++i) {
        weights[i] = f.f(win.site(i).cast<double>().array() / root);
    }
    out.riemann_flat = scale * weights.sum();
    if (beta == 0.0) {
        out.riemann = out.riemann_flat;
        out.mean_y = 1.0;
        return out;
    }
    PolymerField field = box_half == 0 ? PolymerField::init_plane_cone(kernel, env, beta, window, n)
                                       : PolymerField::init_plane(kernel, env, beta, box_half);
    for (int t = 0; t < n; ++t) field.evolve_step(stream);
    const double unit = std::exp(field.log_scale());
    double fluct = 0.0;
    double riemann = 0.0;
    double ysum = 0.0;
    for (std::int64_t i = 0; i < win.size(); ++i) {
        const double y = unit * field.values()[field.layout().index(win.site(i))];
        fluct += weights[i] * (y - 1.0);
        riemann += weights[i] * y;
        ysum += y;
    }
    out.fluctuation = scale * fluct;
    out.riemann = scale * riemann;
    out.mean_y = ysum / static_cast<double>(win.size());
    return out;
}

} // namespace polymer
