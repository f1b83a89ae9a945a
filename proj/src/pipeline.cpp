#include "crowdcast/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "crowdcast/errors.hpp"

namespace crowdcast {

std::vector<Segment> slice_trajectory(const RawTrajectory& raw, int window, int stride) {
    std::vector<Segment> out;
    const int total = raw.steps();
    if (total < window) return out;
    const int count = (total - window) / stride + 1;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        Segment seg;
        seg.agent_id = raw.agent_id;
        const int offset = k * stride;
        seg.start_frame = raw.start_frame + offset;
        std::copy_n(raw.positions.begin() + offset, window, seg.positions.begin());
        out.push_back(std::move(seg));
    }
    return out;
}

Scene assemble_scene(const Segment& seg, const RawDataset& raw) {
    Scene scene;
    scene.primary_id = seg.agent_id;
    scene.start_frame = seg.start_frame;
    const long window_end = seg.start_frame + kWindowLength - 1;
    const long observed_end = seg.start_frame + kObservedSteps - 1;
    for (const auto& traj : raw.trajectories) {
        if (traj.start_frame <= seg.start_frame && traj.end_frame() >= window_end) {
            SceneAgent agent;
            agent.id = traj.agent_id;
            for (int i = 0; i < kWindowLength; ++i) agent.positions[i] = traj.at_frame(seg.start_frame + i);
            scene.agents.push_back(std::move(agent));
        } else if (traj.start_frame <= observed_end && traj.end_frame() >= seg.start_frame) {
            ContextAgent ctx;
            ctx.id = traj.agent_id;
            const long from = std::max(traj.start_frame, seg.start_frame);
            const long to = std::min(traj.end_frame(), observed_end);
            ctx.first_step = static_cast<int>(from - seg.start_frame);
            for (long f = from; f <= to; ++f) ctx.positions.push_back(traj.at_frame(f));
            scene.context_agents.push_back(std::move(ctx));
        }
    }
    return scene;
}

double average_density(const Segment& seg, const RawDataset& raw) {
    double total = 0.0;
    for (int i = 0; i < kWindowLength; ++i) {
        const long frame = seg.start_frame + i;
        FrameSnapshot snap{frame, {}};
        for (const auto& traj : raw.trajectories) {
            if (traj.covers(frame)) snap.agents.emplace_back(traj.agent_id, traj.at_frame(frame));
        }
        total += snapshot_density(snap);
    }
    return total / kWindowLength;
}

DensityClass classify_density(double density) {
    if (density < 0.7) return DensityClass::lowD;
    if (density < 1.2) return DensityClass::mediumD;
    if (density < 1.6) return DensityClass::highD;
    return DensityClass::veryHD;
}

DatasetSplits split_dataset(const RawDataset& raw, const SplitSpec& spec, std::uint64_t /*seed*/) {
    const int n = static_cast<int>(raw.trajectories.size());
    if (n < 3) throw TooFewTrajectories("need at least 3 trajectories to split");

    std::vector<const RawTrajectory*> ordered;
    ordered.reserve(n);
    for (const auto& t : raw.trajectories) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const RawTrajectory* a, const RawTrajectory* b) {
        return a->start_frame < b->start_frame ||
               (a->start_frame == b->start_frame && a->agent_id < b->agent_id);
    });

    // Largest-remainder apportionment of n over the three fractions.
    const std::array<double, 3> fractions{spec.train, spec.val, spec.test};
    std::array<int, 3> counts{};
    std::array<std::pair<double, int>, 3> remainders{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double quota = fractions[i] * n;
        counts[i] = static_cast<int>(std::floor(quota));
        assigned += counts[i];
        remainders[i] = {quota - counts[i], i};
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < n - assigned; ++i) counts[remainders[i % 3].second]++;

    DatasetSplits splits;
    int pos = 0;
    for (int part = 0; part < 3; ++part) {
        RawDataset& dst = part == 0 ? splits.train : part == 1 ? splits.val : splits.test;
        for (int i = 0; i < counts[part]; ++i) dst.trajectories.push_back(*ordered[pos++]);
    }
    return splits;
}

std::vector<Scene> build_scenes(const RawDataset& split) {
    std::vector<Scene> scenes;
    long next_id = 0;
    std::vector<const RawTrajectory*> ordered;
    for (const auto& t : split.trajectories) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const RawTrajectory* a, const RawTrajectory* b) {
        return a->agent_id < b->agent_id ||
               (a->agent_id == b->agent_id && a->start_frame < b->start_frame);
    });
    for (const auto* traj : ordered) {
        for (const auto& seg : slice_trajectory(*traj)) {
            Scene scene = assemble_scene(seg, split);
            scene.scene_id = next_id++;
            scene.avg_density = average_density(seg, split);
            scene.density_class = classify_density(scene.avg_density);
            scenes.push_back(std::move(scene));
        }
    }
    return scenes;
}

}  // namespace crowdcast
