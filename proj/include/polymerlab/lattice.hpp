// Sites of Z^d and the two dense storage layouts used by lattice fields.
#ifndef POLYMERLAB_LATTICE_HPP
#define POLYMERLAB_LATTICE_HPP

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace polymer {

inline constexpr int kMaxDim = 8;

using Site = Eigen::Matrix<int, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

inline Site origin(int dim) { return Site::Zero(dim); }

inline std::span<const int> coords(const Site& x) noexcept
{
    return {x.data(), static_cast<std::size_t>(x.size())};
}

inline int l1_norm(const Site& x) noexcept { return x.cwiseAbs().sum(); }

struct SiteLess {
    bool operator()(const Site& a, const Site& b) const noexcept
    {
        if (a.size() != b.size()) return a.size() < b.size();
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            if (a[i] != b[i]) return a[i] < b[i];
        }
        return false;
    }
};

/// Finitely supported real function on Z^d.
using SiteFunction = std::map<Site, double, SiteLess>;

/// "(x1 x2 ...)" - comma-free so it fits a CSV cell.
std::string format_site(const Site& x);

/// The cube [-half, half]^dim, last coordinate contiguous.
class BoxLayout {
public:
    BoxLayout(int dim, int half);

    int dim() const noexcept { return dim_; }
    int half() const noexcept { return half_; }
    int side() const noexcept { return 2 * half_ + 1; }
    std::int64_t size() const noexcept { return size_; }
    std::int64_t stride(int axis) const noexcept { return strides_[axis]; }

    bool contains(const Site& x) const noexcept;
    std::int64_t index(const Site& x) const noexcept;
    Site site(std::int64_t index) const;

private:
    int dim_;
    int half_;
    std::int64_t size_;
    std::vector<std::int64_t> strides_;
};

/// Sites with |x|_1 <= radius and |x|_1 = radius (mod 2): the support of a
/// nearest-neighbour walk after `radius` steps. Stored row by row; a row is
/// fixed in all but the last coordinate and holds z = -zmax, -zmax+2, ..., zmax.
class BallLayout {
public:
    struct Row {
        std::int64_t offset; // index of z = -zmax
        int zmax;
    };

    BallLayout(int dim, int radius);

    int dim() const noexcept { return dim_; }
    int radius() const noexcept { return radius_; }
    std::int64_t size() const noexcept { return size_; }

    const std::vector<Row>& rows() const noexcept { return rows_; }
    /// Prefix coordinates of row r (dim - 1 entries).
    std::span<const int> prefix(std::size_t r) const noexcept
    {
        const auto w = static_cast<std::size_t>(dim_ - 1);
        return {prefixes_.data() + r * w, w};
    }
    /// Row id for a prefix, or -1 when the prefix lies outside the ball.
    int row_of(std::span<const int> prefix) const noexcept;

    bool contains(const Site& x) const noexcept;
    std::int64_t index(const Site& x) const noexcept;
    Site site(std::int64_t index) const;

private:
    int dim_;
    int radius_;
    std::int64_t size_ = 0;
    std::vector<Row> rows_;
    std::vector<int> prefixes_;
    std::vector<int> row_lookup_; // dense over [-radius, radius]^{dim-1}
};

} // namespace polymer

#endif
