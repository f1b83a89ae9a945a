#pragma once

#include <utility>
#include <vector>

namespace crowdcast {

struct Position {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Position&) const = default;
};

// Circular disk approximating a pedestrian's physical footprint.
struct BodyDisk {
    Position center;
    double radius = 0.2;
};

// All agents present at one time step.
struct FrameSnapshot {
    long frame = 0;
    std::vector<std::pair<int, Position>> agents;  // (agent id, position), ids unique
};

// Minimum scene area used when the hull degenerates (<3 non-collinear agents);
// keeps densities finite.
inline constexpr double kMinSceneArea = 1.0;

double euclidean_distance(const Position& p, const Position& q);

// 1 iff the two body disks overlap: distance strictly below 2*radius.
int collision_indicator(const Position& p, const Position& q, double radius);

// Area of the 2D convex hull; 0 for fewer than 3 non-collinear points.
double convex_hull_area(std::vector<Position> points);

// Pedestrians per square meter: count / max(hull area, kMinSceneArea).
// Throws EmptySnapshot when the snapshot holds no agents.
double snapshot_density(const FrameSnapshot& s);

}  // namespace crowdcast
