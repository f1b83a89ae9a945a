#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "crowdcast/errors.hpp"
#include "crowdcast/loss.hpp"
#include "crowdcast/model.hpp"

using namespace crowdcast;
using ad::Tape;
using ad::Tensor;

namespace {

ModelConfig tiny_config(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 6;
    cfg.pooling.grid = 2;
    cfg.pooling.compressed_dim = 2;
    cfg.pooling.neighborhood_side = 4.0;
    cfg.seed = 11;
    return cfg;
}

// Agents walking on parallel lines, spaced `gap` meters apart.
Scene walking_scene(int agents, double gap, double speed = 0.2) {
    Scene s;
    s.primary_id = 1;
    for (int a = 0; a < agents; ++a) {
        SceneAgent agent;
        agent.id = a + 1;
        for (int t = 0; t < kWindowLength; ++t) agent.positions[t] = {speed * t, gap * a};
        s.agents.push_back(agent);
    }
    return s;
}

TrackedParams zero_params(Tape& tape, int E, int P, int H) {
    TrackedParams p;
    p.embed_w = tape.leaf(Tensor::zeros({2, E}));
    p.embed_b = tape.leaf(Tensor::zeros({E}));
    const int in = E + P + H;
    for (auto* w : {&p.w_i, &p.w_f, &p.w_g, &p.w_o}) *w = tape.leaf(Tensor::zeros({in, H}));
    for (auto* b : {&p.b_i, &p.b_f, &p.b_g, &p.b_o}) *b = tape.leaf(Tensor::zeros({H}));
    p.head_w = tape.leaf(Tensor::zeros({H, 2}));
    p.head_b = tape.leaf(Tensor::zeros({2}));
    return p;
}

double forward_loss(const Predictor& model, const Scene& scene, const LossConfig& cfg) {
    Tape tape;
    const auto r = model.rollout(tape, scene);
    return composite_loss(tape, cfg, scene, r.predicted).item();
}

}  // namespace

TEST_CASE("lstm_cell_step with all-zero parameters yields zero state") {
    Tape tape;
    const int E = 3, H = 4, A = 2;
    TrackedParams p = zero_params(tape, E, 0, H);
    LstmState state{tape.leaf(Tensor::zeros({A, H})), tape.leaf(Tensor::zeros({A, H}))};
    const Tensor emb = tape.leaf(Tensor::matrix(A, E, {1, 2, 3, 4, 5, 6}));
    const LstmState out = lstm_cell_step(tape, p, emb, nullptr, state);
    for (double v : out.h.v) CHECK(v == 0.0);
    for (double v : out.c.v) CHECK(v == 0.0);
}

TEST_CASE("saturated forget gate carries the cell state through") {
    Tape tape;
    const int E = 2, H = 3, A = 1;
    TrackedParams p = zero_params(tape, E, 0, H);
    p.b_f = tape.leaf(Tensor::full({H}, 50.0));  // f ~= 1
    LstmState state{tape.leaf(Tensor::zeros({A, H})), tape.leaf(Tensor::matrix(A, H, {0.3, -0.7, 1.1}))};
    const Tensor emb = tape.leaf(Tensor::matrix(A, E, {0.5, -0.5}));
    const LstmState out = lstm_cell_step(tape, p, emb, nullptr, state);
    CHECK(out.c.v[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(out.c.v[1] == doctest::Approx(-0.7).epsilon(1e-9));
    CHECK(out.c.v[2] == doctest::Approx(1.1).epsilon(1e-9));
}

TEST_CASE("pooling_cell bins by relative displacement") {
    SocialPoolingConfig cfg;  // 4 m side, 8x8 grid
    CHECK(pooling_cell(cfg, {0, 0}, {5, 0}) == -1);
    CHECK(pooling_cell(cfg, {0, 0}, {-1.99, -1.99}) == 0);         // bottom-left cell
    CHECK(pooling_cell(cfg, {0, 0}, {1.99, 1.99}) == 63);          // top-right cell
    CHECK(pooling_cell(cfg, {0, 0}, {2.0, 0}) == -1);              // half-open upper bound
    CHECK(pooling_cell(cfg, {0, 0}, {-2.0, 0}) == 4 * 8 + 0);      // closed lower bound
    CHECK(pooling_cell(cfg, {3, 3}, {3.1, 3.1}) == pooling_cell(cfg, {0, 0}, {0.1, 0.1}));
}

TEST_CASE("social_pool aggregation") {
    SocialPoolingConfig cfg;
    cfg.grid = 2;
    cfg.compressed_dim = 2;
    Tape tape;
    const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});  // H = 2, identity compression

    SUBCASE("no neighbors -> zero tensor") {
        const Tensor out = social_pool(tape, cfg, {0, 0}, {}, eye);
        CHECK(out.v == std::vector<double>(8, 0.0));
    }
    SUBCASE("neighbor beyond the neighborhood -> zero tensor") {
        const Tensor out =
            social_pool(tape, cfg, {0, 0}, {{{10, 10}, Tensor::matrix(1, 2, {3, 4})}}, eye);
        CHECK(out.v == std::vector<double>(8, 0.0));
    }
    SUBCASE("two neighbors in one cell are summed") {
        const std::vector<std::pair<Position, Tensor>> neighbors{
            {{0.5, 0.5}, Tensor::matrix(1, 2, {1, 2})},
            {{0.9, 0.9}, Tensor::matrix(1, 2, {10, 20})}};
        const Tensor out = social_pool(tape, cfg, {0, 0}, neighbors, eye);
        // Both fall in the top-right cell (index 3) of the 2x2 grid.
        CHECK(out.v == std::vector<double>{0, 0, 0, 0, 0, 0, 11, 22});
    }
}

TEST_CASE("zeroed output head predicts a stationary agent") {
    Predictor model{tiny_config(ModelKind::social)};
    for (auto& [name, tensor] : model.named_params())
        if (name == "head_w" || name == "head_b") std::fill(tensor->v.begin(), tensor->v.end(), 0.0);
    const Scene scene = walking_scene(3, 1.0);
    const ScenePrediction pred = model.predict(scene);
    REQUIRE(pred.size() == 3);
    for (size_t a = 0; a < pred.size(); ++a)
        for (const auto& p : pred[a]) CHECK(p == scene.agents[a].positions[kObservedSteps - 1]);
}

TEST_CASE("vanilla equals social with zero pooled features on a lone agent") {
    Predictor vanilla{tiny_config(ModelKind::vanilla)};
    Predictor social{tiny_config(ModelKind::social)};
    const int E = 4, H = 6, P = social.config().pooled_width();

    // Copy vanilla parameters into the social layout; pooled input rows get 0.
    auto sp = social.named_params();
    auto vp = vanilla.named_params();
    for (size_t i = 0; i < sp.size(); ++i) {
        auto& [sname, st] = sp[i];
        if (sname == "compress_w") {
            std::fill(st->v.begin(), st->v.end(), 0.0);
            continue;
        }
        const ad::Tensor* vt = nullptr;
        for (auto& [vname, cand] : vp)
            if (vname == sname) vt = cand;
        REQUIRE(vt != nullptr);
        if (sname.rfind("w_", 0) == 0) {
            std::fill(st->v.begin(), st->v.end(), 0.0);
            for (int r = 0; r < E + H; ++r) {
                const int sr = r < E ? r : r + P;
                for (int c = 0; c < H; ++c) st->v[sr * H + c] = vt->v[r * H + c];
            }
        } else {
            st->v = vt->v;
        }
    }

    const Scene lone = walking_scene(1, 0.0);
    const ScenePrediction a = vanilla.predict(lone);
    const ScenePrediction b = social.predict(lone);
    for (int t = 0; t < kFutureSteps; ++t) {
        CHECK(a[0][t].x == doctest::Approx(b[0][t].x).epsilon(1e-12));
        CHECK(a[0][t].y == doctest::Approx(b[0][t].y).epsilon(1e-12));
    }
}

TEST_CASE("agent-order permutation leaves per-agent predictions unchanged") {
    Predictor model{tiny_config(ModelKind::social)};
    Scene scene = walking_scene(4, 0.8);
    const ScenePrediction base = model.predict(scene);

    Scene permuted = scene;
    std::swap(permuted.agents[0], permuted.agents[3]);
    std::swap(permuted.agents[1], permuted.agents[2]);
    const ScenePrediction shuffled = model.predict(permuted);

    for (size_t a = 0; a < scene.agents.size(); ++a) {
        size_t b = 0;
        while (permuted.agents[b].id != scene.agents[a].id) ++b;
        for (int t = 0; t < kFutureSteps; ++t) {
            CHECK(base[a][t].x == doctest::Approx(shuffled[b][t].x).epsilon(1e-9));
            CHECK(base[a][t].y == doctest::Approx(shuffled[b][t].y).epsilon(1e-9));
        }
    }
}

TEST_CASE("vanilla predictions ignore neighbors") {
    Predictor model{tiny_config(ModelKind::vanilla)};
    Scene crowd = walking_scene(3, 0.5);
    Scene alone = walking_scene(1, 0.5);
    const ScenePrediction with = model.predict(crowd);
    const ScenePrediction without = model.predict(alone);
    for (int t = 0; t < kFutureSteps; ++t) {
        CHECK(with[0][t].x == without[0][t].x);
        CHECK(with[0][t].y == without[0][t].y);
    }
}

TEST_CASE("social predictions react to neighbors") {
    Predictor model{tiny_config(ModelKind::social)};
    const ScenePrediction with = model.predict(walking_scene(3, 0.5));
    const ScenePrediction without = model.predict(walking_scene(1, 0.5));
    double diff = 0.0;
    for (int t = 0; t < kFutureSteps; ++t)
        diff += std::abs(with[0][t].x - without[0][t].x) + std::abs(with[0][t].y - without[0][t].y);
    CHECK(diff > 0.0);
}

TEST_CASE("context agents influence social rollout but are not predicted") {
    Predictor model{tiny_config(ModelKind::social)};
    Scene scene = walking_scene(2, 0.6);
    const ScenePrediction base = model.predict(scene);

    ContextAgent ctx;
    ctx.id = 99;
    ctx.first_step = 0;
    for (int t = 0; t < kObservedSteps; ++t) ctx.positions.push_back({0.2 * t, 0.3});
    scene.context_agents.push_back(ctx);
    const ScenePrediction with_ctx = model.predict(scene);

    REQUIRE(with_ctx.size() == 2);  // context agent not predicted
    double diff = 0.0;
    for (int t = 0; t < kFutureSteps; ++t) diff += std::abs(base[0][t].x - with_ctx[0][t].x);
    CHECK(diff > 0.0);
}

TEST_CASE("rollout determinism and empty-scene guard") {
    Predictor model{tiny_config(ModelKind::social)};
    const Scene scene = walking_scene(3, 0.7);
    CHECK(model.predict(scene) == model.predict(scene));
    CHECK_THROWS_AS(model.predict(Scene{}), EmptyScene);
}

TEST_CASE("checkpoint round-trips exactly") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "crowdcast_model_test.json";
    for (ModelKind kind : {ModelKind::vanilla, ModelKind::social}) {
        Predictor model{tiny_config(kind)};
        model.save(path);
        const Predictor loaded = Predictor::load(path);
        CHECK(loaded == model);
        CHECK(loaded.predict(walking_scene(2, 0.9)) == model.predict(walking_scene(2, 0.9)));
    }
    fs::remove(path);
    CHECK_THROWS_AS(Predictor::load(path), IoError);
}

TEST_CASE("loss gradients w.r.t. every parameter match finite differences") {
    for (ModelKind kind : {ModelKind::vanilla, ModelKind::social}) {
        Predictor model{tiny_config(kind)};
        const Scene scene = walking_scene(3, 0.35);  // close enough to collide
        const LossConfig cfg{LossMode::dos, 0.05, 0.2, 0.4};

        Tape tape;
        const auto r = model.rollout(tape, scene);
        const Tensor loss = composite_loss(tape, cfg, scene, r.predicted);
        const ad::GradientMap grads = tape.backward(loss);

        const auto params = model.named_params();
        const double h = 1e-6;
        double worst = 0.0;
        for (size_t i = 0; i < params.size(); ++i) {
            const std::vector<double>& g = grads[r.param_nodes[i]];
            for (size_t k = 0; k < params[i].second->v.size(); ++k) {
                auto eval = [&](double delta) {
                    Predictor copy = model;
                    copy.named_params()[i].second->v[k] += delta;
                    return forward_loss(copy, scene, cfg);
                };
                const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
                const double analytic = g.empty() ? 0.0 : g[k];
                worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
            }
        }
        INFO(to_string(kind));
        CHECK(worst < 1e-4);
    }
}
