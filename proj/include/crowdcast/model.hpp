#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "crowdcast/autodiff.hpp"
#include "crowdcast/metrics.hpp"
#include "crowdcast/scene.hpp"

namespace crowdcast {

enum class ModelKind { vanilla, social };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct SocialPoolingConfig {
    double neighborhood_side = 4.0;  // meters, axis-aligned square centered on the agent
    int grid = 8;                    // G x G cells
    int compressed_dim = 16;         // hidden states mapped H -> compressed_dim before pooling

    int feature_width() const { return grid * grid * compressed_dim; }
};

struct ModelConfig {
    ModelKind kind = ModelKind::social;
    int embed_dim = 32;
    int hidden_dim = 64;
    SocialPoolingConfig pooling;
    std::uint64_t seed = 0;

    int pooled_width() const { return kind == ModelKind::social ? pooling.feature_width() : 0; }
};

// Parameter tensors registered as leaves on one tape.
struct TrackedParams {
    ad::Tensor embed_w, embed_b;            // [2,E], [E]
    ad::Tensor w_i, w_f, w_g, w_o;          // [E+P+H, H] each
    ad::Tensor b_i, b_f, b_g, b_o;          // [H]
    ad::Tensor compress_w;                  // [H, compressed_dim]; empty for vanilla
    ad::Tensor head_w, head_b;              // [H,2], [2]
};

struct LstmState {
    ad::Tensor h, c;  // [A, H]
};

// Standard LSTM gate equations over gate input concat(embedded, pooled, h).
// `pooled` may be null (vanilla / zero-width pooling).
LstmState lstm_cell_step(ad::Tape& tape, const TrackedParams& params, const ad::Tensor& embedded,
                         const ad::Tensor* pooled, const LstmState& state);

// Grid cell index of `other` relative to `me`, or -1 when outside the
// neighborhood square.
int pooling_cell(const SocialPoolingConfig& cfg, const Position& me, const Position& other);

// Pooled feature row [G*G*compressed_dim] for one agent: neighbors binned by
// relative displacement, compressed hidden states summed per cell.
ad::Tensor social_pool(ad::Tape& tape, const SocialPoolingConfig& cfg, const Position& me,
                       const std::vector<std::pair<Position, ad::Tensor>>& neighbors,
                       const ad::Tensor& compress_w);

class Predictor {
public:
    explicit Predictor(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    std::vector<std::pair<std::string, ad::Tensor*>> named_params();
    std::vector<std::pair<std::string, const ad::Tensor*>> named_params() const;

    struct TrackedRollout {
        std::vector<ad::Tensor> predicted;  // 12 tensors [A,2], full agents only
        std::vector<int> param_nodes;       // leaf node ids, named_params order
    };

    // Observed steps consume ground-truth inputs (pooling sees context agents
    // where present); future steps are autoregressive with pooling over
    // predicted full-agent positions only. The head emits per-step
    // displacements added to the previous position.
    TrackedRollout rollout(ad::Tape& tape, const Scene& scene) const;

    // Forward-only rollout on a private tape.
    ScenePrediction predict(const Scene& scene) const;

    void save(const std::filesystem::path& path) const;
    static Predictor load(const std::filesystem::path& path);

    bool operator==(const Predictor& other) const;

private:
    ModelConfig cfg_;
    std::vector<ad::Tensor> params_;        // storage, named order
    std::vector<std::string> param_names_;
};

}  // namespace crowdcast
