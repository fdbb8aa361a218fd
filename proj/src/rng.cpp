#include "polymerlab/rng.hpp"

#include <cmath>

namespace polymer {

namespace {

// 128-block ziggurat (Marsaglia & Tsang layout, Doornik's tail handling).
constexpr int kBlocks = 128;
constexpr double kTailStart = 3.442619855899;
constexpr double kBlockArea = 9.91256303526217e-3;

ZigguratTables make_tables()
{
    ZigguratTables t{};
    const double f = std::exp(-0.5 * kTailStart * kTailStart);
    t.x[0] = kBlockArea / f;
    t.x[1] = kTailStart;
    t.x[kBlocks] = 0.0;
    for (int i = 2; i < kBlocks; ++i) {
        t.x[i] = std::sqrt(-2.0 * std::log(kBlockArea / t.x[i - 1] + std::exp(-0.5 * t.x[i - 1] * t.x[i - 1])));
    }
    for (int i = 0; i < kBlocks; ++i) t.ratio[i] = t.x[i + 1] / t.x[i];
    for (int i = 0; i <= kBlocks; ++i) t.f[i] = std::exp(-0.5 * t.x[i] * t.x[i]);
    return t;
}

const ZigguratTables g_tables = make_tables();

} // namespace

const ZigguratTables& ziggurat_tables() noexcept { return g_tables; }

double ziggurat_normal(std::uint64_t seed_word) noexcept
{
    const ZigguratTables& t = g_tables;
    std::uint64_t bits = seed_word;
    std::uint64_t counter = seed_word;
    for (;;) {
        // 53 bits for the abscissa, 7 for the block; disjoint bit ranges.
        const int block = static_cast<int>(bits & 0x7f);
        const double u = 2.0 * to_unit(bits) - 1.0;
        if (std::fabs(u) < t.ratio[block]) {
            return u * t.x[block];
        }
        counter += kGolden;
        const std::uint64_t extra = mix64(counter);
        if (block == 0) {
            double tail_x;
            double tail_y;
            std::uint64_t c = extra;
            do {
                c += kGolden;
                tail_x = std::log(to_open_unit(mix64(c))) / kTailStart;
                c += kGolden;
                tail_y = std::log(to_open_unit(mix64(c)));
            } while (-2.0 * tail_y < tail_x * tail_x);
            return u < 0.0 ? tail_x - kTailStart : kTailStart - tail_x;
        }
        const double xv = u * t.x[block];
        if (t.f[block + 1] + to_unit(extra) * (t.f[block] - t.f[block + 1]) < std::exp(-0.5 * xv * xv)) {
            return xv;
        }
        counter += kGolden;
        bits = mix64(counter);
    }
}

} // namespace polymer
