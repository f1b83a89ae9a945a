#include "crowdcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "crowdcast/errors.hpp"

namespace crowdcast {

using nlohmann::json;

std::string to_string(ModelKind k) {
    return k == ModelKind::vanilla ? "vanilla" : "social";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "vanilla") return ModelKind::vanilla;
    if (s == "social") return ModelKind::social;
    throw ConfigError("unknown model kind: " + s);
}

LstmState lstm_cell_step(ad::Tape& tape, const TrackedParams& params, const ad::Tensor& embedded,
                         const ad::Tensor* pooled, const LstmState& state) {
    std::vector<ad::Tensor> parts{embedded};
    if (pooled) parts.push_back(*pooled);
    parts.push_back(state.h);
    ad::Tensor z = tape.concat_cols(parts);
    auto gate = [&](const ad::Tensor& w, const ad::Tensor& b) {
        return tape.add_rows(tape.matmul(z, w), b);
    };
    ad::Tensor in = tape.sigmoid(gate(params.w_i, params.b_i));
    ad::Tensor forget = tape.sigmoid(gate(params.w_f, params.b_f));
    ad::Tensor cand = tape.tanh(gate(params.w_g, params.b_g));
    ad::Tensor out = tape.sigmoid(gate(params.w_o, params.b_o));
    ad::Tensor c = tape.add(tape.mul(forget, state.c), tape.mul(in, cand));
    ad::Tensor h = tape.mul(out, tape.tanh(c));
    return {h, c};
}

int pooling_cell(const SocialPoolingConfig& cfg, const Position& me, const Position& other) {
    const double half = cfg.neighborhood_side / 2.0;
    const double rx = other.x - me.x;
    const double ry = other.y - me.y;
    if (rx < -half || rx >= half || ry < -half || ry >= half) return -1;
    const double cell = cfg.neighborhood_side / cfg.grid;
    const int ix = std::min(cfg.grid - 1, std::max(0, static_cast<int>(std::floor((rx + half) / cell))));
    const int iy = std::min(cfg.grid - 1, std::max(0, static_cast<int>(std::floor((ry + half) / cell))));
    return iy * cfg.grid + ix;
}

ad::Tensor social_pool(ad::Tape& tape, const SocialPoolingConfig& cfg, const Position& me,
                       const std::vector<std::pair<Position, ad::Tensor>>& neighbors,
                       const ad::Tensor& compress_w) {
    const int cells = cfg.grid * cfg.grid;
    const int width = cfg.feature_width();
    if (neighbors.empty()) return ad::Tensor::zeros({width});

    std::vector<ad::Tensor> compressed;
    compressed.reserve(neighbors.size());
    std::vector<double> assign(static_cast<size_t>(cells) * neighbors.size(), 0.0);
    for (size_t n = 0; n < neighbors.size(); ++n) {
        compressed.push_back(tape.matmul(neighbors[n].second, compress_w));
        const int cell = pooling_cell(cfg, me, neighbors[n].first);
        if (cell >= 0) assign[static_cast<size_t>(cell) * neighbors.size() + n] = 1.0;
    }
    ad::Tensor selector = ad::Tensor::matrix(cells, static_cast<int>(neighbors.size()), std::move(assign));
    ad::Tensor pooled = tape.matmul(selector, tape.concat_rows(compressed));
    return tape.reshape(pooled, {width});
}

namespace {

ad::Tensor init_tensor(ad::Shape shape, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    for (auto& x : t.v) x = dist(rng);
    return t;
}

}  // namespace

Predictor::Predictor(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.embed_dim <= 0 || cfg.hidden_dim <= 0) throw ConfigError("model dims must be positive");
    if (cfg.kind == ModelKind::social &&
        (cfg.pooling.grid < 1 || cfg.pooling.neighborhood_side <= 0 || cfg.pooling.compressed_dim <= 0))
        throw ConfigError("invalid pooling config");

    const int e = cfg.embed_dim, h = cfg.hidden_dim;
    const int z = e + cfg.pooled_width() + h;
    std::mt19937_64 rng(cfg.seed);
    auto push = [&](const std::string& name, ad::Tensor t) {
        param_names_.push_back(name);
        params_.push_back(std::move(t));
    };
    push("embed_w", init_tensor({2, e}, 2, rng));
    push("embed_b", ad::Tensor::zeros({e}));
    for (const char* gate : {"i", "f", "g", "o"}) {
        push(std::string("w_") + gate, init_tensor({z, h}, z, rng));
        push(std::string("b_") + gate, ad::Tensor::zeros({h}));
    }
    if (cfg.kind == ModelKind::social)
        push("compress_w", init_tensor({h, cfg.pooling.compressed_dim}, h, rng));
    push("head_w", init_tensor({h, 2}, h, rng));
    push("head_b", ad::Tensor::zeros({2}));
}

std::vector<std::pair<std::string, ad::Tensor*>> Predictor::named_params() {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    for (size_t i = 0; i < params_.size(); ++i) out.emplace_back(param_names_[i], &params_[i]);
    return out;
}

std::vector<std::pair<std::string, const ad::Tensor*>> Predictor::named_params() const {
    std::vector<std::pair<std::string, const ad::Tensor*>> out;
    for (size_t i = 0; i < params_.size(); ++i) out.emplace_back(param_names_[i], &params_[i]);
    return out;
}

namespace {

struct LeafIndex {
    TrackedParams tracked;
    std::vector<int> nodes;
};

LeafIndex bind_leaves(ad::Tape& tape, const std::vector<std::string>& names,
                      const std::vector<ad::Tensor>& params) {
    LeafIndex out;
    for (size_t i = 0; i < params.size(); ++i) {
        ad::Tensor leaf = tape.leaf(params[i]);
        out.nodes.push_back(leaf.node);
        const std::string& n = names[i];
        if (n == "embed_w") out.tracked.embed_w = leaf;
        else if (n == "embed_b") out.tracked.embed_b = leaf;
        else if (n == "w_i") out.tracked.w_i = leaf;
        else if (n == "b_i") out.tracked.b_i = leaf;
        else if (n == "w_f") out.tracked.w_f = leaf;
        else if (n == "b_f") out.tracked.b_f = leaf;
        else if (n == "w_g") out.tracked.w_g = leaf;
        else if (n == "b_g") out.tracked.b_g = leaf;
        else if (n == "w_o") out.tracked.w_o = leaf;
        else if (n == "b_o") out.tracked.b_o = leaf;
        else if (n == "compress_w") out.tracked.compress_w = leaf;
        else if (n == "head_w") out.tracked.head_w = leaf;
        else if (n == "head_b") out.tracked.head_b = leaf;
    }
    return out;
}

}  // namespace

Predictor::TrackedRollout Predictor::rollout(ad::Tape& tape, const Scene& scene) const {
    if (scene.agents.empty()) throw EmptyScene("rollout needs at least one full agent");
    const int a = static_cast<int>(scene.agents.size());
    const int p = cfg_.pooled_width();
    const bool social = cfg_.kind == ModelKind::social;
    const int cells = cfg_.pooling.grid * cfg_.pooling.grid;

    LeafIndex leaves = bind_leaves(tape, param_names_, params_);
    const TrackedParams& tp = leaves.tracked;

    LstmState full{ad::Tensor::zeros({a, cfg_.hidden_dim}), ad::Tensor::zeros({a, cfg_.hidden_dim})};

    struct CtxState {
        const ContextAgent* agent;
        LstmState st;
    };
    std::vector<CtxState> ctx;
    if (social) {
        for (const auto& c : scene.context_agents)
            ctx.push_back({&c, {ad::Tensor::zeros({1, cfg_.hidden_dim}), ad::Tensor::zeros({1, cfg_.hidden_dim})}});
    }

    TrackedRollout out;
    out.param_nodes = leaves.nodes;
    ad::Tensor pending_disp;  // tracked input for autoregressive steps

    // Plain positions at the current step for pooling bins.
    std::vector<Position> pos_now(a);

    for (int t = 0; t < kWindowLength - 1; ++t) {
        const bool observed = t < kObservedSteps;
        if (observed) {
            for (int i = 0; i < a; ++i) pos_now[i] = scene.agents[i].positions[t];
        } else {
            const ad::Tensor& predicted = out.predicted.back();  // step t
            for (int i = 0; i < a; ++i) pos_now[i] = {predicted.v[i * 2], predicted.v[i * 2 + 1]};
        }

        // Input displacement for the full agents.
        ad::Tensor disp;
        if (t == 0) {
            disp = ad::Tensor::zeros({a, 2});
        } else if (observed) {
            std::vector<double> d(static_cast<size_t>(a) * 2);
            for (int i = 0; i < a; ++i) {
                d[i * 2] = scene.agents[i].positions[t].x - scene.agents[i].positions[t - 1].x;
                d[i * 2 + 1] = scene.agents[i].positions[t].y - scene.agents[i].positions[t - 1].y;
            }
            disp = ad::Tensor::matrix(a, 2, std::move(d));
        } else {
            disp = pending_disp;
        }
        ad::Tensor emb = tape.add_rows(tape.matmul(disp, tp.embed_w), tp.embed_b);

        ad::Tensor pooled;
        if (social) {
            // Sources: every full agent plus context agents present at t
            // (ground-truth positions; observed phase only). Hidden states are
            // the previous step's, positions the current step's.
            std::vector<ad::Tensor> compressed{tape.matmul(full.h, tp.compress_w)};
            std::vector<Position> src_pos(pos_now);
            std::vector<int> src_full_index(a);
            for (int i = 0; i < a; ++i) src_full_index[i] = i;
            if (observed) {
                for (auto& c : ctx) {
                    const int rel = t - c.agent->first_step;
                    if (rel < 0 || rel >= static_cast<int>(c.agent->positions.size())) continue;
                    compressed.push_back(tape.matmul(c.st.h, tp.compress_w));
                    src_pos.push_back(c.agent->positions[rel]);
                    src_full_index.push_back(-1);
                }
            }
            const int n_src = static_cast<int>(src_pos.size());
            std::vector<double> assign(static_cast<size_t>(a) * cells * n_src, 0.0);
            for (int i = 0; i < a; ++i) {
                for (int s = 0; s < n_src; ++s) {
                    if (src_full_index[s] == i) continue;  // exclude self
                    const int cell = pooling_cell(cfg_.pooling, pos_now[i], src_pos[s]);
                    if (cell >= 0)
                        assign[(static_cast<size_t>(i) * cells + cell) * n_src + s] = 1.0;
                }
            }
            ad::Tensor selector = ad::Tensor::matrix(a * cells, n_src, std::move(assign));
            // concat_rows needs > 1 part only when context agents joined
            ad::Tensor all_compressed = compressed.size() == 1 ? compressed[0] : tape.concat_rows(compressed);
            pooled = tape.reshape(tape.matmul(selector, all_compressed), {a, p});
        }

        full = lstm_cell_step(tape, tp, emb, social ? &pooled : nullptr, full);

        // Context agents update with zero pooled features; they feed pooling
        // but are not themselves pooled into.
        if (social && observed) {
            ad::Tensor zero_pool = ad::Tensor::zeros({1, p});
            for (auto& c : ctx) {
                const int rel = t - c.agent->first_step;
                if (rel < 0 || rel >= static_cast<int>(c.agent->positions.size())) continue;
                std::vector<double> d(2, 0.0);
                if (rel > 0) {
                    d[0] = c.agent->positions[rel].x - c.agent->positions[rel - 1].x;
                    d[1] = c.agent->positions[rel].y - c.agent->positions[rel - 1].y;
                }
                ad::Tensor cemb = tape.add_rows(tape.matmul(ad::Tensor::matrix(1, 2, std::move(d)), tp.embed_w),
                                                tp.embed_b);
                c.st = lstm_cell_step(tape, tp, cemb, &zero_pool, c.st);
            }
        }

        if (t >= kObservedSteps - 1) {
            ad::Tensor delta = tape.add_rows(tape.matmul(full.h, tp.head_w), tp.head_b);
            ad::Tensor base;
            if (t == kObservedSteps - 1) {
                std::vector<double> last(static_cast<size_t>(a) * 2);
                for (int i = 0; i < a; ++i) {
                    last[i * 2] = scene.agents[i].positions[t].x;
                    last[i * 2 + 1] = scene.agents[i].positions[t].y;
                }
                base = ad::Tensor::matrix(a, 2, std::move(last));
            } else {
                base = out.predicted.back();
            }
            out.predicted.push_back(tape.add(base, delta));
            pending_disp = delta;
        }
    }
    return out;
}

ScenePrediction Predictor::predict(const Scene& scene) const {
    ad::Tape tape;
    TrackedRollout r = rollout(tape, scene);
    ScenePrediction pred(scene.agents.size());
    for (int t = 0; t < kFutureSteps; ++t) {
        for (size_t i = 0; i < pred.size(); ++i)
            pred[i][t] = {r.predicted[t].v[i * 2], r.predicted[t].v[i * 2 + 1]};
    }
    return pred;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void Predictor::save(const std::filesystem::path& path) const {
    json j;
    j["version"] = kCheckpointVersion;
    j["config"] = {{"kind", to_string(cfg_.kind)},
                   {"embed_dim", cfg_.embed_dim},
                   {"hidden_dim", cfg_.hidden_dim},
                   {"seed", cfg_.seed},
                   {"pooling", {{"neighborhood_side", cfg_.pooling.neighborhood_side},
                                {"grid", cfg_.pooling.grid},
                                {"compressed_dim", cfg_.pooling.compressed_dim}}}};
    json params = json::object();
    for (size_t i = 0; i < params_.size(); ++i)
        params[param_names_[i]] = {{"shape", params_[i].shape}, {"values", params_[i].v}};
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out << j.dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

Predictor Predictor::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid checkpoint: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion)
        throw SchemaError("unsupported checkpoint version");
    try {
        const json& c = j.at("config");
        ModelConfig cfg;
        cfg.kind = model_kind_from_string(c.at("kind").get<std::string>());
        cfg.embed_dim = c.at("embed_dim").get<int>();
        cfg.hidden_dim = c.at("hidden_dim").get<int>();
        cfg.seed = c.at("seed").get<std::uint64_t>();
        cfg.pooling.neighborhood_side = c.at("pooling").at("neighborhood_side").get<double>();
        cfg.pooling.grid = c.at("pooling").at("grid").get<int>();
        cfg.pooling.compressed_dim = c.at("pooling").at("compressed_dim").get<int>();
        Predictor model(cfg);
        for (auto& [name, tensor] : model.named_params()) {
            const json& pj = j.at("params").at(name);
            ad::Tensor loaded;
            loaded.shape = pj.at("shape").get<ad::Shape>();
            loaded.v = pj.at("values").get<std::vector<double>>();
            if (loaded.shape != tensor->shape || loaded.v.size() != tensor->v.size())
                throw SchemaError("checkpoint parameter shape mismatch: " + name);
            *tensor = std::move(loaded);
        }
        return model;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid checkpoint: ") + e.what());
    }
}

bool Predictor::operator==(const Predictor& other) const {
    if (cfg_.kind != other.cfg_.kind || cfg_.embed_dim != other.cfg_.embed_dim ||
        cfg_.hidden_dim != other.cfg_.hidden_dim || cfg_.seed != other.cfg_.seed)
        return false;
    if (param_names_ != other.param_names_) return false;
    for (size_t i = 0; i < params_.size(); ++i)
        if (params_[i].shape != other.params_[i].shape || params_[i].v != other.params_[i].v) return false;
    return true;
}

}  // namespace crowdcast
