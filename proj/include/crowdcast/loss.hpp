#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crowdcast/autodiff.hpp"
#include "crowdcast/scene.hpp"

namespace crowdcast {

enum class LossMode { ade_only, dos, sos };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

struct LossConfig {
    LossMode mode = LossMode::dos;
    double lambda = 0.003;           // collision penalty weight
    double fixed_radius = 0.2;       // SOS radius and fallback for DOS
    double overlap_threshold = 0.4;  // pair distance bound for radius estimation
};

struct RadiusEstimate {
    std::vector<std::optional<double>> per_step;  // R^t over the 12 future steps
    double average = 0.0;                         // R-bar
    bool estimated = false;                       // false => fallback to fixed radius
};

// All unordered pairs (i, j), i < j, strictly closer than the threshold.
std::vector<std::pair<int, int>> colliding_pairs(const std::vector<Position>& positions,
                                                 double threshold = 0.4);

// Mean of half center-to-center distances over the colliding pairs; absent
// when no pair overlaps.
std::optional<double> radius_at_step(const std::vector<Position>& positions,
                                     double threshold = 0.4);

// Per-window radius from the ground-truth future steps of the scene's full
// agents; mean over the steps where a radius exists, fallback otherwise.
// A differentiation constant: never part of any tape.
RadiusEstimate window_average_radius(const Scene& scene, double threshold = 0.4,
                                     double fallback_radius = 0.2);

// Differentiable collision penalty over predicted futures (12 tensors of
// shape [A,2]): sum over directed pairs and steps of (1 - d/tau) for d < tau.
ad::Tensor collision_penalty(ad::Tape& tape, const std::vector<ad::Tensor>& predicted, double tau);

// Differentiable mean Euclidean error (sqrt_eps-smoothed) over agents and
// future steps against the scene's ground truth.
ad::Tensor ade_loss(ad::Tape& tape, const std::vector<ad::Tensor>& predicted, const Scene& scene);

// ADE_only -> ade; DOS -> ade + lambda*CP with tau = 2*R-bar; SOS -> same
// with tau = 2*fixed_radius. The penalty branch is skipped entirely when
// lambda is 0 so ADE-only and lambda=0 runs are bit-identical.
ad::Tensor composite_loss(ad::Tape& tape, const LossConfig& cfg, const Scene& scene,
                          const std::vector<ad::Tensor>& predicted);

}  // namespace crowdcast
