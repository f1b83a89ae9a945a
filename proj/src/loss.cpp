#include "crowdcast/loss.hpp"

#include <cmath>

#include "crowdcast/errors.hpp"

namespace crowdcast {

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::ade_only: return "ade";
        case LossMode::dos: return "dos";
        case LossMode::sos: return "sos";
    }
    return "ade";
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "ade") return LossMode::ade_only;
    if (s == "dos") return LossMode::dos;
    if (s == "sos") return LossMode::sos;
    throw ConfigError("unknown loss mode: " + s);
}

std::vector<std::pair<int, int>> colliding_pairs(const std::vector<Position>& positions,
                                                 double threshold) {
    std::vector<std::pair<int, int>> pairs;
    const int n = static_cast<int>(positions.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (euclidean_distance(positions[i], positions[j]) < threshold) pairs.emplace_back(i, j);
    return pairs;
}

std::optional<double> radius_at_step(const std::vector<Position>& positions, double threshold) {
    const auto pairs = colliding_pairs(positions, threshold);
    if (pairs.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [i, j] : pairs) sum += euclidean_distance(positions[i], positions[j]);
    return sum / (2.0 * static_cast<double>(pairs.size()));
}

RadiusEstimate window_average_radius(const Scene& scene, double threshold, double fallback_radius) {
    RadiusEstimate est;
    est.per_step.resize(kFutureSteps);
    double sum = 0.0;
    int present = 0;
    for (int t = 0; t < kFutureSteps; ++t) {
        std::vector<Position> positions;
        positions.reserve(scene.agents.size());
        for (const auto& a : scene.agents) positions.push_back(a.positions[kObservedSteps + t]);
        est.per_step[t] = radius_at_step(positions, threshold);
        if (est.per_step[t]) {
            sum += *est.per_step[t];
            ++present;
        }
    }
    if (present > 0) {
        est.average = sum / present;
        est.estimated = true;
    } else {
        est.average = fallback_radius;
        est.estimated = false;
    }
    return est;
}

namespace {

// Smoothed pairwise distance between rows i and j of a [A,2] position tensor.
ad::Tensor pair_distance(ad::Tape& tape, const ad::Tensor& positions, int i, int j) {
    ad::Tensor diff = tape.sub(tape.slice_rows(positions, i, i + 1), tape.slice_rows(positions, j, j + 1));
    return tape.sqrt_eps(tape.sum(tape.square(diff)));
}

}  // namespace

ad::Tensor collision_penalty(ad::Tape& tape, const std::vector<ad::Tensor>& predicted, double tau) {
    if (predicted.empty() || predicted.front().rows() < 1) throw EmptyScene("collision_penalty needs agents");
    if (tau <= 0.0) throw ConfigError("collision threshold must be positive");
    ad::Tensor total = ad::Tensor::scalar(0.0);
    for (const auto& step : predicted) {
        const int n = step.rows();
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                // Skip pairs clearly outside the threshold; the relu branch
                // would contribute exactly zero forward and backward.
                const double dx = step.v[i * 2] - step.v[j * 2];
                const double dy = step.v[i * 2 + 1] - step.v[j * 2 + 1];
                if (dx * dx + dy * dy >= tau * tau) continue;
                ad::Tensor d = pair_distance(tape, step, i, j);
                ad::Tensor term = tape.relu(tape.add_scalar(tape.scale(d, -1.0 / tau), 1.0));
                total = tape.add(total, term);
            }
        }
    }
    // Directed sums count every unordered pair from both endpoints.
    return tape.scale(total, 2.0);
}

ad::Tensor ade_loss(ad::Tape& tape, const std::vector<ad::Tensor>& predicted, const Scene& scene) {
    const int n = static_cast<int>(scene.agents.size());
    if (static_cast<int>(predicted.size()) != kFutureSteps)
        throw ShapeMismatch("ade_loss expects 12 future steps");
    ad::Tensor total = ad::Tensor::scalar(0.0);
    for (int t = 0; t < kFutureSteps; ++t) {
        if (predicted[t].rows() != n) throw ShapeMismatch("ade_loss: agent count mismatch");
        std::vector<double> gt(static_cast<size_t>(n) * 2);
        for (int a = 0; a < n; ++a) {
            gt[a * 2] = scene.agents[a].positions[kObservedSteps + t].x;
            gt[a * 2 + 1] = scene.agents[a].positions[kObservedSteps + t].y;
        }
        ad::Tensor diff = tape.sub(predicted[t], ad::Tensor::matrix(n, 2, std::move(gt)));
        ad::Tensor sq = tape.square(diff);
        for (int a = 0; a < n; ++a)
            total = tape.add(total, tape.sqrt_eps(tape.sum(tape.slice_rows(sq, a, a + 1))));
    }
    return tape.scale(total, 1.0 / (static_cast<double>(n) * kFutureSteps));
}

ad::Tensor composite_loss(ad::Tape& tape, const LossConfig& cfg, const Scene& scene,
                          const std::vector<ad::Tensor>& predicted) {
    ad::Tensor ade = ade_loss(tape, predicted, scene);
    if (cfg.mode == LossMode::ade_only || cfg.lambda == 0.0) return ade;
    const double tau = cfg.mode == LossMode::dos
                           ? 2.0 * window_average_radius(scene, cfg.overlap_threshold, cfg.fixed_radius).average
                           : 2.0 * cfg.fixed_radius;
    ad::Tensor cp = collision_penalty(tape, predicted, tau);
    return tape.add(ade, tape.scale(cp, cfg.lambda));
}

}  // namespace crowdcast
