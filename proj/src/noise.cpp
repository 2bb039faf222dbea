#include <algorithm>
#include <cmath>
#include <vector>

#include "kfan/data.hpp"
#include "kfan/error.hpp"

namespace kfan {

namespace {

struct Point {
    double x, y;
};

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0)
        t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    const double cx = a.x + t * dx;
    const double cy = a.y + t * dy;
    return std::hypot(p.x - cx, p.y - cy);
}

}  // namespace

StrokeResult add_stroke_noise(const Vector& image, Eigen::Index height,
                              Eigen::Index width, const NoiseConfig& cfg, Rng& rng) {
    if (height <= 0 || width <= 0 || image.size() != height * width)
        throw DimensionError("image does not match height*width");
    if (cfg.num_strokes < 0) throw DomainError("num_strokes must be non-negative");
    if (cfg.control_points < 2)
        throw DomainError("a stroke needs at least two control points");
    if (!(cfg.thickness_range.first > 0.0 &&
          cfg.thickness_range.second >= cfg.thickness_range.first))
        throw DomainError("thickness range must be positive and ordered");
    if (!(cfg.coverage_range.first > 0.0 &&
          cfg.coverage_range.second > cfg.coverage_range.first &&
          cfg.coverage_range.second <= 1.0))
        throw DomainError("coverage range must satisfy 0 < lo < hi <= 1");
    if (cfg.max_retries < 1) throw DomainError("max_retries must be positive");

    StrokeResult result;
    if (cfg.num_strokes == 0) {
        result.image = image;
        result.coverage = 0.0;
        result.in_range = false;
        return result;
    }

    // Thickness values are stated at the 28-pixel scale.
    const double scale = static_cast<double>(std::min(height, width)) / 28.0;
    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);

    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        std::vector<bool> covered(static_cast<std::size_t>(image.size()), false);
        for (int s = 0; s < cfg.num_strokes; ++s) {
            std::vector<Point> pts;
            pts.reserve(static_cast<std::size_t>(cfg.control_points));
            for (int p = 0; p < cfg.control_points; ++p) {
                const double x = rng.next_uniform() * w;
                const double y = rng.next_uniform() * h;
                pts.push_back({x, y});
            }
            const double thickness =
                scale * (cfg.thickness_range.first +
                         rng.next_uniform() *
                             (cfg.thickness_range.second - cfg.thickness_range.first));
            const double radius = 0.5 * thickness;
            for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
                // Only pixels near the segment's bounding box can be hit.
                const double lo_x = std::min(pts[seg].x, pts[seg + 1].x) - radius;
                const double hi_x = std::max(pts[seg].x, pts[seg + 1].x) + radius;
                const double lo_y = std::min(pts[seg].y, pts[seg + 1].y) - radius;
                const double hi_y = std::max(pts[seg].y, pts[seg + 1].y) + radius;
                const auto c0 = static_cast<Eigen::Index>(std::max(0.0, std::floor(lo_x)));
                const auto c1 = static_cast<Eigen::Index>(
                    std::min(w - 1.0, std::ceil(hi_x)));
                const auto r0 = static_cast<Eigen::Index>(std::max(0.0, std::floor(lo_y)));
                const auto r1 = static_cast<Eigen::Index>(
                    std::min(h - 1.0, std::ceil(hi_y)));
                for (Eigen::Index row = r0; row <= r1; ++row)
                    for (Eigen::Index col = c0; col <= c1; ++col) {
                        const Point center{static_cast<double>(col) + 0.5,
                                           static_cast<double>(row) + 0.5};
                        if (segment_distance(center, pts[seg], pts[seg + 1]) <= radius)
                            covered[static_cast<std::size_t>(row * width + col)] = true;
                    }
            }
        }

        Eigen::Index hit = 0;
        for (bool c : covered) hit += c ? 1 : 0;
        const double coverage =
            static_cast<double>(hit) / static_cast<double>(image.size());

        result.image = image;
        for (Eigen::Index i = 0; i < image.size(); ++i)
            if (covered[static_cast<std::size_t>(i)]) result.image(i) = 1.0;
        result.coverage = coverage;
        result.in_range = coverage >= cfg.coverage_range.first &&
                          coverage <= cfg.coverage_range.second;
        if (result.in_range) break;
    }
    return result;
}

}  // namespace kfan
