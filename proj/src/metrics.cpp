#include "crowdcast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "crowdcast/errors.hpp"

namespace crowdcast {

double ade_metric(const std::vector<AgentFuture>& predicted, const std::vector<AgentFuture>& truth) {
    if (predicted.size() != truth.size()) throw ShapeMismatch("ade_metric: trajectory counts differ");
    if (predicted.empty()) throw EmptyDataset("ade_metric: no trajectories");
    double total = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i)
        for (int t = 0; t < kFutureSteps; ++t)
            total += euclidean_distance(predicted[i][t], truth[i][t]);
    return total / (static_cast<double>(predicted.size()) * kFutureSteps);
}

double fde_metric(const std::vector<AgentFuture>& predicted, const std::vector<AgentFuture>& truth) {
    if (predicted.size() != truth.size()) throw ShapeMismatch("fde_metric: trajectory counts differ");
    if (predicted.empty()) throw EmptyDataset("fde_metric: no trajectories");
    double total = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i)
        total += euclidean_distance(predicted[i].back(), truth[i].back());
    return total / static_cast<double>(predicted.size());
}

double col_scene(const ScenePrediction& predicted, double radius) {
    const int n = static_cast<int>(predicted.size());
    if (n == 0) throw EmptyScene("col_scene: no agents");
    int flagged = 0;
    for (int i = 0; i < n; ++i) {
        bool hit = false;
        for (int j = 0; j < n && !hit; ++j) {
            if (j == i) continue;
            for (int t = 0; t < kFutureSteps && !hit; ++t)
                hit = collision_indicator(predicted[i][t], predicted[j][t], radius) == 1;
        }
        if (hit) ++flagged;
    }
    return static_cast<double>(flagged) / n;
}

double collision_rate(const std::vector<ScenePrediction>& scenes, double radius) {
    if (scenes.empty()) throw EmptyDataset("collision_rate: no scenes");
    double total = 0.0;
    for (const auto& s : scenes) total += col_scene(s, radius);
    return total / static_cast<double>(scenes.size()) * 100.0;
}

MetricsReport build_report(const std::vector<Scene>& scenes,
                           const std::vector<ScenePrediction>& predictions) {
    if (scenes.size() != predictions.size()) throw ShapeMismatch("build_report: scene count mismatch");
    if (scenes.empty()) throw EmptyDataset("build_report: no scenes");

    struct Bucket {
        std::vector<AgentFuture> pred, truth;
        std::vector<ScenePrediction> scene_preds;
        long n_scenes = 0;
    };
    Bucket all;
    std::map<DensityClass, Bucket> by_class;

    // Fixed scene order keeps the aggregation bit-reproducible.
    for (size_t s = 0; s < scenes.size(); ++s) {
        const Scene& scene = scenes[s];
        const ScenePrediction& pred = predictions[s];
        if (pred.size() != scene.agents.size()) throw ShapeMismatch("build_report: agent count mismatch");
        std::vector<AgentFuture> truth;
        truth.reserve(scene.agents.size());
        for (const auto& a : scene.agents) {
            AgentFuture f{};
            std::copy_n(a.positions.begin() + kObservedSteps, kFutureSteps, f.begin());
            truth.push_back(f);
        }
        for (Bucket* b : {&all, &by_class[scene.density_class]}) {
            b->pred.insert(b->pred.end(), pred.begin(), pred.end());
            b->truth.insert(b->truth.end(), truth.begin(), truth.end());
            b->scene_preds.push_back(pred);
            b->n_scenes++;
        }
    }

    auto summarize = [](const Bucket& b) {
        MetricsRow row;
        row.ade = ade_metric(b.pred, b.truth);
        row.fde = fde_metric(b.pred, b.truth);
        row.cr_pct = collision_rate(b.scene_preds);
        row.n_scenes = b.n_scenes;
        row.n_trajectories = static_cast<long>(b.pred.size());
        return row;
    };

    MetricsReport report;
    report.overall = summarize(all);
    for (const auto& [cls, bucket] : by_class) report.per_class[cls] = summarize(bucket);
    return report;
}

}  // namespace crowdcast
