#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "crowdcast/geometry.hpp"
#include "crowdcast/scene.hpp"

namespace crowdcast {

inline constexpr int kFrameRate = 3;  // steps per second

// One pedestrian's recorded path at consecutive frames.
struct RawTrajectory {
    int agent_id = 0;
    long start_frame = 0;
    std::vector<Position> positions;

    int steps() const { return static_cast<int>(positions.size()); }
    long end_frame() const { return start_frame + steps() - 1; }
    bool covers(long frame) const { return frame >= start_frame && frame <= end_frame(); }
    const Position& at_frame(long frame) const { return positions[frame - start_frame]; }
    bool operator==(const RawTrajectory&) const = default;
};

struct RawDataset {
    std::vector<RawTrajectory> trajectories;
    int frame_rate = kFrameRate;
    bool operator==(const RawDataset&) const = default;
};

enum class FlowPattern { unidirectional, bidirectional, crossing };

std::string to_string(FlowPattern p);
FlowPattern flow_pattern_from_string(const std::string& s);

struct SynthConfig {
    FlowPattern flow = FlowPattern::bidirectional;
    double density_lo = 0.2;  // ped/m^2, band lower bound
    double density_hi = 0.7;  // band upper bound
    double arena_width = 9.0;
    double arena_height = 6.5;
    int duration_frames = 600;
    double noise_scale = 0.05;  // meters, per-step waypoint noise
    std::uint64_t seed = 1;
};

// Plain-text rows `frame agent_id x y`; lines starting with `#` are comments.
// Gaps in an agent's frames split its observations into separate trajectories
// with fresh synthetic ids. Throws ParseError / EmptyFile.
RawDataset parse_raw_file(const std::filesystem::path& path);
void write_raw_file(const RawDataset& data, const std::filesystem::path& path);

// JSON-lines scene container with a schema-version header line.
void write_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);
std::vector<Scene> read_scenes(const std::filesystem::path& path);

// Seeded crowd generator with social-force-style circular repulsion. Realized
// mean density tracks the requested band. Throws ConfigError when the
// density/arena combination is infeasible.
RawDataset synthesize_crowd(const SynthConfig& cfg);

// Mean over frames of snapshot_density; used to verify generator output.
double measured_mean_density(const RawDataset& data);

}  // namespace crowdcast
