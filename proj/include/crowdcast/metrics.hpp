#pragma once

#include <array>
#include <map>
#include <vector>

#include "crowdcast/scene.hpp"

namespace crowdcast {

// Fixed evaluation radius; independent of the loss mode and of R-bar.
inline constexpr double kEvalRadius = 0.2;

using AgentFuture = std::array<Position, kFutureSteps>;
// Predicted futures of one scene's full agents, scene agent order.
using ScenePrediction = std::vector<AgentFuture>;

// Exact-square-root displacement errors over M aligned trajectories.
double ade_metric(const std::vector<AgentFuture>& predicted, const std::vector<AgentFuture>& truth);
double fde_metric(const std::vector<AgentFuture>& predicted, const std::vector<AgentFuture>& truth);

// Fraction of agents with at least one predicted step strictly closer than
// 2*radius to another agent.
double col_scene(const ScenePrediction& predicted, double radius = kEvalRadius);

// Mean of col_scene over the scene set, in percent.
double collision_rate(const std::vector<ScenePrediction>& scenes, double radius = kEvalRadius);

struct MetricsRow {
    double ade = 0.0;
    double fde = 0.0;
    double cr_pct = 0.0;
    long n_scenes = 0;
    long n_trajectories = 0;
};

struct MetricsReport {
    MetricsRow overall;
    std::map<DensityClass, MetricsRow> per_class;
};

// Aggregates ADE/FDE over all trajectories and CR over scenes, overall and
// per density class. Scenes and predictions are index-aligned.
MetricsReport build_report(const std::vector<Scene>& scenes,
                           const std::vector<ScenePrediction>& predictions);

}  // namespace crowdcast
