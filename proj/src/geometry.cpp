#include "crowdcast/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "crowdcast/errors.hpp"

namespace crowdcast {

double euclidean_distance(const Position& p, const Position& q) {
    const double dx = p.x - q.x;
    const double dy = p.y - q.y;
    return std::sqrt(dx * dx + dy * dy);
}

int collision_indicator(const Position& p, const Position& q, double radius) {
    return euclidean_distance(p, q) < 2.0 * radius ? 1 : 0;
}

namespace {

double cross(const Position& o, const Position& a, const Position& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

double convex_hull_area(std::vector<Position> points) {
    if (points.size() < 3) return 0.0;
    std::sort(points.begin(), points.end(), [](const Position& a, const Position& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    const size_t n = points.size();
    if (n < 3) return 0.0;

    // Andrew monotone chain; collinear points dropped (cross <= 0).
    std::vector<Position> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k > 0 ? k - 1 : 0);
    if (hull.size() < 3) return 0.0;

    double twice_area = 0.0;
    for (size_t i = 0; i < hull.size(); ++i) {
        const Position& a = hull[i];
        const Position& b = hull[(i + 1) % hull.size()];
        twice_area += a.x * b.y - b.x * a.y;
    }
    return std::abs(twice_area) / 2.0;
}

double snapshot_density(const FrameSnapshot& s) {
    if (s.agents.empty()) throw EmptySnapshot("snapshot has no agents");
    std::vector<Position> pts;
    pts.reserve(s.agents.size());
    for (const auto& [id, p] : s.agents) pts.push_back(p);
    const double area = std::max(convex_hull_area(pts), kMinSceneArea);
    return static_cast<double>(s.agents.size()) / area;
}

}  // namespace crowdcast
