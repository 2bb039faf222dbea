#include <algorithm>
#include <array>
#include <cmath>

#include "kfan/data.hpp"
#include "kfan/error.hpp"

namespace kfan {

namespace {

// Seven-segment geometry on a 28x28 canvas, [row0,row1) x [col0,col1).
// The glyph box is deliberately wide and thick so digits carry enough
// ink for structured occlusion to land near the corpus noise regime.
struct Rect {
    int r0, r1, c0, c1;
};

// Segment order: top, top-right, bottom-right, bottom, bottom-left,
// top-left, middle.
constexpr std::array<Rect, 7> kSegments = {{
    {2, 7, 5, 23},    // top bar
    {2, 15, 18, 23},  // upper right
    {13, 26, 18, 23}, // lower right
    {21, 26, 5, 23},  // bottom bar
    {13, 26, 5, 10},  // lower left
    {2, 15, 5, 10},   // upper left
    {12, 17, 5, 23},  // middle bar
}};

constexpr std::array<std::uint8_t, 10> kDigitSegments = {
    0b0111111,  // 0: all but middle
    0b0000110,  // 1: right column
    0b1011011,  // 2
    0b1001111,  // 3
    0b1100110,  // 4
    0b1101101,  // 5
    0b1111101,  // 6
    0b0000111,  // 7
    0b1111111,  // 8
    0b1101111,  // 9
};

constexpr Eigen::Index kCanvas = 28;

}  // namespace

ImageSet synth_digits(Eigen::Index count, Rng& rng) {
    if (count <= 0) throw DomainError("count must be positive");
    ImageSet set;
    set.height = kCanvas;
    set.width = kCanvas;
    set.images = Matrix::Zero(count, kCanvas * kCanvas);
    set.labels.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
        const auto digit = static_cast<std::size_t>(i % 10);
        const int dx = static_cast<int>(rng.next_uniform() * 5.0) - 2;
        const int dy = static_cast<int>(rng.next_uniform() * 5.0) - 2;
        for (std::size_t s = 0; s < kSegments.size(); ++s) {
            if (!(kDigitSegments[digit] >> s & 1)) continue;
            const Rect& seg = kSegments[s];
            for (int r = seg.r0 + dy; r < seg.r1 + dy; ++r)
                for (int c = seg.c0 + dx; c < seg.c1 + dx; ++c)
                    if (r >= 0 && r < kCanvas && c >= 0 && c < kCanvas)
                        set.images(i, r * kCanvas + c) = 1.0;
        }
        set.labels.push_back(static_cast<Eigen::Index>(digit));
    }
    return set;
}

namespace {

// Cell order: (cluster 0, view 0), (0,1), (1,0), (1,1); the class is the
// XOR of cluster and view, so classes split 60/40 and neither input
// alone can beat 40% error while both determine the class exactly.
constexpr std::array<double, 4> kCellMass = {0.3, 0.2, 0.2, 0.3};
constexpr Eigen::Index kViewDim = 6;

}  // namespace

TripletDataset synth_multiview(const SynthMultiviewConfig& cfg, Rng& rng) {
    if (cfg.count < 4) throw DomainError("count must be at least 4");
    if (cfg.d_x < 2) throw DomainError("d_x must be at least 2");
    if (!(cfg.ambiguity >= 0.0 && cfg.ambiguity < 0.5))
        throw DomainError("ambiguity must lie in [0, 0.5)");

    // Exact largest-remainder quotas keep the planted cell masses sharp
    // even for small counts.
    std::array<Eigen::Index, 4> quota{};
    Eigen::Index assigned = 0;
    std::array<double, 4> remainder{};
    for (std::size_t c = 0; c < 4; ++c) {
        const double want = kCellMass[c] * static_cast<double>(cfg.count);
        quota[c] = static_cast<Eigen::Index>(std::floor(want));
        remainder[c] = want - std::floor(want);
        assigned += quota[c];
    }
    while (assigned < cfg.count) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < 4; ++c)
            if (remainder[c] > remainder[best]) best = c;
        ++quota[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    std::vector<int> cells;
    cells.reserve(static_cast<std::size_t>(cfg.count));
    for (std::size_t c = 0; c < 4; ++c)
        cells.insert(cells.end(), static_cast<std::size_t>(quota[c]),
                     static_cast<int>(c));
    // Seeded order: one uniform per element, highest index first.
    for (std::size_t i = cells.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(
            rng.next_uniform() * static_cast<double>(i + 1));
        std::swap(cells[i], cells[j]);
    }

    TripletDataset out;
    out.x.resize(cfg.count, cfg.d_x);
    out.y.resize(cfg.count, kViewDim);
    out.z = Matrix::Zero(cfg.count, 2);
    for (Eigen::Index i = 0; i < cfg.count; ++i) {
        const int cell = cells[static_cast<std::size_t>(i)];
        const int cluster = cell >> 1;
        const int view = cell & 1;
        // Cluster prototypes: alternating bits and their complement.
        for (Eigen::Index j = 0; j < cfg.d_x; ++j) {
            double bit = ((j % 2 == 0) == (cluster == 0)) ? 1.0 : 0.0;
            if (cfg.ambiguity > 0.0 && rng.next_uniform() < cfg.ambiguity)
                bit = 1.0 - bit;
            out.x(i, j) = bit;
        }
        // View patterns: first half on, or second half on.
        for (Eigen::Index j = 0; j < kViewDim; ++j) {
            double bit = ((j < kViewDim / 2) == (view == 0)) ? 1.0 : 0.0;
            if (cfg.ambiguity > 0.0 && rng.next_uniform() < cfg.ambiguity)
                bit = 1.0 - bit;
            out.y(i, j) = bit;
        }
        out.z(i, cluster ^ view) = 1.0;
    }
    return out;
}

}  // namespace kfan
