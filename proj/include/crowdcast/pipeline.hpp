#pragma once

#include <cstdint>
#include <vector>

#include "crowdcast/dataio.hpp"
#include "crowdcast/scene.hpp"

namespace crowdcast {

inline constexpr int kSliceStride = 12;

struct SplitSpec {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

struct DatasetSplits {
    RawDataset train;
    RawDataset val;
    RawDataset test;
};

// K = floor((T - L) / stride) + 1 windows when T >= L, else none; window k
// starts at index k * stride.
std::vector<Segment> slice_trajectory(const RawTrajectory& raw, int window = kWindowLength,
                                      int stride = kSliceStride);

// Full agents cover the whole 21-step window; context agents cover at least
// one observed step but not the full window.
Scene assemble_scene(const Segment& seg, const RawDataset& raw);

// Mean over the 21 window steps of snapshot_density over every pedestrian
// present at that step.
double average_density(const Segment& seg, const RawDataset& raw);

// Thresholds 0.7 / 1.2 / 1.6 ped/m^2, upper class inclusive on its boundary.
DensityClass classify_density(double density);

// Raw trajectories ordered chronologically by start_frame, then cut into
// contiguous 70/15/15 blocks (largest-remainder rounding). The seed is part
// of the contract but unused by the chronological policy.
DatasetSplits split_dataset(const RawDataset& raw, const SplitSpec& spec, std::uint64_t seed);

// Slices every trajectory in the split, assembles scenes, and attaches
// average density and class. Scene ids are sequential in (agent_id,
// start_frame) order.
std::vector<Scene> build_scenes(const RawDataset& split);

}  // namespace crowdcast
