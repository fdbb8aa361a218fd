#include "polymerlab/lattice.hpp"

#include "polymerlab/errors.hpp"

#include <algorithm>
#include <cstdlib>

namespace polymer {

std::string format_site(const Site& x)
{
    std::string out = "(";
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(x[i]);
    }
    return out + ")";
}

BoxLayout::BoxLayout(int dim, int half) : dim_(dim), half_(half), strides_(static_cast<std::size_t>(dim))
{
    if (dim < 1 || dim > kMaxDim) throw ConfigError("dimension must be in [1, 8]");
    if (half < 0) throw ConfigError("box half-width must be nonnegative");
    std::int64_t s = 1;
    for (int k = dim - 1; k >= 0; --k) {
        strides_[static_cast<std::size_t>(k)] = s;
        s *= side();
    }
    size_ = s;
}

bool BoxLayout::contains(const Site& x) const noexcept
{
    return x.size() == dim_ && x.cwiseAbs().maxCoeff() <= half_;
}

std::int64_t BoxLayout::index(const Site& x) const noexcept
{
    std::int64_t idx = 0;
    for (int k = 0; k < dim_; ++k) idx += static_cast<std::int64_t>(x[k] + half_) * strides_[static_cast<std::size_t>(k)];
    return idx;
}

Site BoxLayout::site(std::int64_t index) const
{
    Site x(dim_);
    for (int k = 0; k < dim_; ++k) {
        const auto s = strides_[static_cast<std::size_t>(k)];
        x[k] = static_cast<int>(index / s) - half_;
        index %= s;
    }
    return x;
}

BallLayout::BallLayout(int dim, int radius) : dim_(dim), radius_(radius)
{
    if (dim < 1 || dim > kMaxDim) throw ConfigError("dimension must be in [1, 8]");
    if (radius < 0) throw ConfigError("ball radius must be nonnegative");
    const int w = dim - 1;
    const std::int64_t side = 2 * radius + 1;
    std::int64_t lookup_size = 1;
    for (int k = 0; k < w; ++k) lookup_size *= side;
    row_lookup_.assign(static_cast<std::size_t>(lookup_size), -1);

    // Enumerate prefixes in lexicographic order.
    std::vector<int> p(static_cast<std::size_t>(w), -radius);
    for (std::int64_t lin = 0; lin < lookup_size; ++lin) {
        int norm = 0;
        for (int c : p) norm += std::abs(c);
        if (norm <= radius) {
            const int zmax = radius - norm;
            row_lookup_[static_cast<std::size_t>(lin)] = static_cast<int>(rows_.size());
            rows_.push_back({size_, zmax});
            prefixes_.insert(prefixes_.end(), p.begin(), p.end());
            size_ += zmax + 1;
        }
        for (int k = w - 1; k >= 0; --k) {
            auto& c = p[static_cast<std::size_t>(k)];
            if (++c <= radius) break;
            c = -radius;
        }
    }
}

int BallLayout::row_of(std::span<const int> prefix) const noexcept
{
    std::int64_t lin = 0;
    const std::int64_t side = 2 * radius_ + 1;
    for (int c : prefix) {
        if (c < -radius_ || c > radius_) return -1;
        lin = lin * side + (c + radius_);
    }
    return row_lookup_[static_cast<std::size_t>(lin)];
}

bool BallLayout::contains(const Site& x) const noexcept
{
    if (x.size() != dim_) return false;
    const int norm = l1_norm(x);
    return norm <= radius_ && ((radius_ - norm) % 2 == 0);
}

std::int64_t BallLayout::index(const Site& x) const noexcept
{
    const int r = row_of({x.data(), static_cast<std::size_t>(dim_ - 1)});
    const Row& row = rows_[static_cast<std::size_t>(r)];
    return row.offset + (x[dim_ - 1] + row.zmax) / 2;
}

Site BallLayout::site(std::int64_t index) const
{
    auto it = std::upper_bound(rows_.begin(), rows_.end(), index,
                               [](std::int64_t i, const Row& r) { return i < r.offset; });
    const auto r = static_cast<std::size_t>(std::distance(rows_.begin(), it) - 1);
    Site x(dim_);
    const auto pre = prefix(r);
    for (int k = 0; k < dim_ - 1; ++k) x[k] = pre[static_cast<std::size_t>(k)];
    x[dim_ - 1] = -rows_[r].zmax + 2 * static_cast<int>(index - rows_[r].offset);
    return x;
}

} // namespace polymer
