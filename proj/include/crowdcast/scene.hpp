#pragma once

#include <array>
#include <string>
#include <vector>

#include "crowdcast/geometry.hpp"

namespace crowdcast {

// 21-step prediction window: 9 observed steps followed by 12 future steps.
inline constexpr int kWindowLength = 21;
inline constexpr int kObservedSteps = 9;
inline constexpr int kFutureSteps = 12;

enum class DensityClass { lowD, mediumD, highD, veryHD };

std::string to_string(DensityClass c);
DensityClass density_class_from_string(const std::string& s);

// One 21-step slice of a raw trajectory.
struct Segment {
    int agent_id = 0;
    long start_frame = 0;  // absolute frame of the first step
    std::array<Position, kWindowLength> positions{};

    std::array<Position, kObservedSteps> observed() const;
    std::array<Position, kFutureSteps> future() const;
};

// Agent fully present over the whole window.
struct SceneAgent {
    int id = 0;
    std::array<Position, kWindowLength> positions{};
    bool operator==(const SceneAgent&) const = default;
};

// Agent present over part of the observed steps only. Feeds social pooling
// where present; never predicted, penalized, or counted in metrics.
struct ContextAgent {
    int id = 0;
    int first_step = 0;  // window-relative step of positions.front(), in [0, 8]
    std::vector<Position> positions;
    bool operator==(const ContextAgent&) const = default;
};

struct Scene {
    long scene_id = 0;
    int primary_id = 0;
    long start_frame = 0;
    std::vector<SceneAgent> agents;
    std::vector<ContextAgent> context_agents;
    double avg_density = 0.0;
    DensityClass density_class = DensityClass::lowD;
    bool operator==(const Scene&) const = default;
};

}  // namespace crowdcast
