#pragma once

#include <cstdint>
#include <vector>

#include "crowdcast/loss.hpp"
#include "crowdcast/metrics.hpp"
#include "crowdcast/model.hpp"

namespace crowdcast {

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 8;
    int max_epochs = 15;
    int patience = 5;
    LossConfig loss;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;  // 0 disables gradient clipping
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;  // first moments, parameter order
    std::vector<std::vector<double>> v;  // second moments
    long step = 0;
};

// Bias-corrected Adam update, in place. Zero gradients leave parameters
// unchanged on the first step.
void adam_step(std::vector<ad::Tensor*>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg);

// Loss and parameter gradients of one batch: mean composite_loss over scenes,
// gradients reduced in scene order.
double batch_gradients(const Predictor& model, const std::vector<const Scene*>& batch,
                       const LossConfig& loss_cfg, std::vector<std::vector<double>>& grads_out);

// One pass over the training scenes: seeded shuffle, batches of batch_size
// (last partial batch kept), one Adam step per batch. Returns the epoch's
// mean scene loss. Throws on non-finite loss.
double train_epoch(Predictor& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                   AdamState& state, int epoch_index);

double validation_loss(const Predictor& model, const std::vector<Scene>& scenes,
                       const LossConfig& loss_cfg);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_ade = 0.0;
    double val_cr = 0.0;
};

struct FitResult {
    Predictor best;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
    std::vector<EpochStats> history;
};

// Up to max_epochs; stops after `patience` consecutive epochs without
// validation improvement. Returns the best-validation checkpoint.
FitResult fit(Predictor model, const std::vector<Scene>& train_scenes,
              const std::vector<Scene>& val_scenes, const TrainConfig& cfg);

// Rollout of every scene plus the ADE/FDE/CR report at the fixed 0.2 m
// evaluation radius.
MetricsReport evaluate(const Predictor& model, const std::vector<Scene>& scenes);

// Per-scene predictions in scene order (shared by evaluate and the CLI).
std::vector<ScenePrediction> predict_all(const Predictor& model, const std::vector<Scene>& scenes);

// Worker cap: min(hardware, CROWDCAST_THREADS when set).
int worker_count();

}  // namespace crowdcast
