#include "crowdcast/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <future>
#include <numeric>
#include <random>
#include <thread>

#include "crowdcast/errors.hpp"

namespace crowdcast {

int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* cap = std::getenv("CROWDCAST_THREADS")) {
        const int c = std::atoi(cap);
        if (c >= 1) n = std::min(n, c);
    }
    return n;
}

void adam_step(std::vector<ad::Tensor*>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeMismatch("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->v.size(), 0.0);
            state.v[i].assign(params[i]->v.size(), 0.0);
        }
    }
    state.step++;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads)
            for (double x : g) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }

    for (size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i]->v.size())
            throw ShapeMismatch("adam_step: gradient shape mismatch");
        auto& m = state.m[i];
        auto& v = state.v[i];
        auto& theta = params[i]->v;
        for (size_t k = 0; k < theta.size(); ++k) {
            const double g = grads[i][k] * scale;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            theta[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

namespace {

struct SceneResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;  // parameter order
};

SceneResult scene_gradients(const Predictor& model, const Scene& scene, const LossConfig& loss_cfg) {
    ad::Tape tape;
    Predictor::TrackedRollout r = model.rollout(tape, scene);
    ad::Tensor loss = composite_loss(tape, loss_cfg, scene, r.predicted);
    if (!std::isfinite(loss.item()))
        throw NonFiniteValue("non-finite loss on scene " + std::to_string(scene.scene_id));
    ad::GradientMap gmap = tape.backward(loss);
    SceneResult out{loss.item(), {}};
    out.grads.reserve(r.param_nodes.size());
    for (size_t i = 0; i < r.param_nodes.size(); ++i) {
        const auto& g = gmap[r.param_nodes[i]];
        if (g.empty())
            out.grads.emplace_back(model.named_params()[i].second->v.size(), 0.0);
        else
            out.grads.push_back(g);
    }
    return out;
}

}  // namespace

double batch_gradients(const Predictor& model, const std::vector<const Scene*>& batch,
                       const LossConfig& loss_cfg, std::vector<std::vector<double>>& grads_out) {
    if (batch.empty()) throw EmptyDataset("empty batch");
    std::vector<SceneResult> results(batch.size());
    const int workers = std::min<int>(worker_count(), static_cast<int>(batch.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < batch.size(); ++i) results[i] = scene_gradients(model, *batch[i], loss_cfg);
    } else {
        std::vector<std::future<SceneResult>> futures;
        futures.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i)
            futures.push_back(std::async(std::launch::async,
                                         [&, i] { return scene_gradients(model, *batch[i], loss_cfg); }));
        for (size_t i = 0; i < batch.size(); ++i) results[i] = futures[i].get();
    }

    // Deterministic reduction: fixed batch order, mean over scenes.
    const double inv = 1.0 / static_cast<double>(batch.size());
    grads_out.clear();
    for (const auto& g : results[0].grads) {
        grads_out.emplace_back(g.size(), 0.0);
    }
    double loss = 0.0;
    for (const auto& r : results) {
        loss += r.loss;
        for (size_t p = 0; p < grads_out.size(); ++p)
            for (size_t k = 0; k < grads_out[p].size(); ++k) grads_out[p][k] += r.grads[p][k];
    }
    for (auto& g : grads_out)
        for (auto& x : g) x *= inv;
    return loss * inv;
}

double train_epoch(Predictor& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                   AdamState& state, int epoch_index) {
    if (scenes.empty()) throw EmptyDataset("train_epoch: no scenes");
    std::vector<const Scene*> order;
    order.reserve(scenes.size());
    for (const auto& s : scenes) order.push_back(&s);
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch_index));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<ad::Tensor*> params;
    for (auto& [name, tensor] : model.named_params()) params.push_back(tensor);

    double total = 0.0;
    long count = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<const Scene*> batch(order.begin() + start, order.begin() + end);
        std::vector<std::vector<double>> grads;
        const double batch_loss = batch_gradients(model, batch, cfg.loss, grads);
        adam_step(params, grads, state, cfg);
        total += batch_loss * static_cast<double>(batch.size());
        count += static_cast<long>(batch.size());
    }
    return total / static_cast<double>(count);
}

double validation_loss(const Predictor& model, const std::vector<Scene>& scenes,
                       const LossConfig& loss_cfg) {
    if (scenes.empty()) throw EmptyDataset("validation_loss: no scenes");
    double total = 0.0;
    for (const auto& scene : scenes) {
        ad::Tape tape;
        Predictor::TrackedRollout r = model.rollout(tape, scene);
        total += composite_loss(tape, loss_cfg, scene, r.predicted).item();
    }
    return total / static_cast<double>(scenes.size());
}

std::vector<ScenePrediction> predict_all(const Predictor& model, const std::vector<Scene>& scenes) {
    std::vector<ScenePrediction> out(scenes.size());
    const int workers = std::min<int>(worker_count(), std::max<int>(1, static_cast<int>(scenes.size())));
    if (workers <= 1) {
        for (size_t i = 0; i < scenes.size(); ++i) out[i] = model.predict(scenes[i]);
        return out;
    }
    std::atomic<size_t> next{0};
    auto run = [&] {
        for (size_t i = next.fetch_add(1); i < scenes.size(); i = next.fetch_add(1))
            out[i] = model.predict(scenes[i]);
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    return out;
}

FitResult fit(Predictor model, const std::vector<Scene>& train_scenes,
              const std::vector<Scene>& val_scenes, const TrainConfig& cfg) {
    if (train_scenes.empty() || val_scenes.empty()) throw EmptyDataset("fit: empty train or val set");

    AdamState state;
    FitResult result{model, 0, 0.0, {}};
    int since_improvement = 0;
    bool have_best = false;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double train_loss = train_epoch(model, train_scenes, cfg, state, epoch);
        const double val_loss = validation_loss(model, val_scenes, cfg.loss);
        if (!std::isfinite(val_loss)) throw NonFiniteValue("non-finite validation loss");

        const auto preds = predict_all(model, val_scenes);
        const MetricsReport report = build_report(val_scenes, preds);
        result.history.push_back({epoch, train_loss, val_loss, report.overall.ade, report.overall.cr_pct});

        if (!have_best || val_loss < result.best_val_loss) {
            have_best = true;
            result.best = model;
            result.best_epoch = epoch;
            result.best_val_loss = val_loss;
            since_improvement = 0;
        } else {
            since_improvement++;
            if (since_improvement >= cfg.patience) break;
        }
    }
    return result;
}

MetricsReport evaluate(const Predictor& model, const std::vector<Scene>& scenes) {
    if (scenes.empty()) throw EmptyDataset("evaluate: no scenes");
    return build_report(scenes, predict_all(model, scenes));
}

}  // namespace crowdcast
