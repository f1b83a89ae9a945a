#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crowdcast/errors.hpp"
#include "crowdcast/loss.hpp"

using namespace crowdcast;
using ad::Tape;
using ad::Tensor;

namespace {

// Scene whose agents stand still at `positions` for all 21 steps.
Scene stationary_scene(const std::vector<Position>& positions) {
    Scene s;
    s.primary_id = 1;
    for (size_t i = 0; i < positions.size(); ++i) {
        SceneAgent a;
        a.id = static_cast<int>(i) + 1;
        a.positions.fill(positions[i]);
        s.agents.push_back(a);
    }
    return s;
}

std::vector<Tensor> constant_prediction(const std::vector<Position>& positions) {
    std::vector<Tensor> out;
    for (int t = 0; t < kFutureSteps; ++t) {
        std::vector<double> flat;
        for (const auto& p : positions) {
            flat.push_back(p.x);
            flat.push_back(p.y);
        }
        out.push_back(Tensor::matrix(static_cast<int>(positions.size()), 2, flat));
    }
    return out;
}

std::vector<Tensor> prediction_from_scene(const Scene& s) {
    std::vector<Tensor> out;
    for (int t = 0; t < kFutureSteps; ++t) {
        std::vector<double> flat;
        for (const auto& a : s.agents) {
            flat.push_back(a.positions[kObservedSteps + t].x);
            flat.push_back(a.positions[kObservedSteps + t].y);
        }
        out.push_back(Tensor::matrix(static_cast<int>(s.agents.size()), 2, flat));
    }
    return out;
}

double brute_force_cp(const std::vector<Tensor>& predicted, double tau) {
    double cp = 0.0;
    for (const auto& step : predicted) {
        const int n = step.rows();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const double dx = step.v[2 * i] - step.v[2 * j];
                const double dy = step.v[2 * i + 1] - step.v[2 * j + 1];
                const double d = std::sqrt(dx * dx + dy * dy);
                if (d < tau) cp += 1.0 - d / tau;
            }
    }
    return cp;
}

std::vector<Tensor> random_prediction(std::mt19937_64& rng, int agents, double span) {
    std::uniform_real_distribution<double> u(0.0, span);
    std::vector<Tensor> out;
    for (int t = 0; t < kFutureSteps; ++t) {
        std::vector<double> flat;
        for (int a = 0; a < 2 * agents; ++a) flat.push_back(u(rng));
        out.push_back(Tensor::matrix(agents, 2, flat));
    }
    return out;
}

}  // namespace

TEST_CASE("loss mode names round-trip") {
    for (LossMode m : {LossMode::ade_only, LossMode::dos, LossMode::sos})
        CHECK(loss_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(loss_mode_from_string("bogus"), ConfigError);
}

TEST_CASE("colliding_pairs") {
    CHECK(colliding_pairs({{0, 0}, {0.326, 0}}) == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(colliding_pairs({{0, 0}, {1, 0}}).empty());
    CHECK(colliding_pairs({{0, 0}, {0.2, 0}, {0.1, 0.1}}).size() == 3);
    CHECK(colliding_pairs({{0, 0}, {0.4, 0}}).empty());  // boundary excluded
    CHECK(colliding_pairs({}).empty());
}

TEST_CASE("radius_at_step") {
    const auto r = radius_at_step({{0, 0}, {0.326, 0}});
    REQUIRE(r.has_value());
    CHECK(*r == doctest::Approx(0.163).epsilon(1e-12));

    const auto two = radius_at_step({{0, 0}, {0.30, 0}, {10, 0}, {10.38, 0}});
    REQUIRE(two.has_value());
    CHECK(*two == doctest::Approx((0.30 + 0.38) / 4.0).epsilon(1e-12));

    CHECK_FALSE(radius_at_step({{0, 0}, {5, 5}}).has_value());
}

TEST_CASE("window_average_radius") {
    SUBCASE("constant radius across all steps") {
        const Scene s = stationary_scene({{0, 0}, {0.326, 0}});
        const RadiusEstimate est = window_average_radius(s);
        CHECK(est.estimated);
        CHECK(est.average == doctest::Approx(0.163).epsilon(1e-12));
        for (const auto& r : est.per_step) {
            REQUIRE(r.has_value());
            CHECK(*r == doctest::Approx(0.163).epsilon(1e-12));
        }
    }
    SUBCASE("mean over present steps only") {
        // Two agents overlap at future steps 0 (d=0.30) and 1 (d=0.34),
        // and are far apart for the remaining 10 steps.
        Scene s = stationary_scene({{0, 0}, {5, 0}});
        s.agents[1].positions[kObservedSteps + 0] = {0.30, 0};
        s.agents[1].positions[kObservedSteps + 1] = {0.34, 0};
        const RadiusEstimate est = window_average_radius(s);
        CHECK(est.estimated);
        CHECK(est.average == doctest::Approx((0.15 + 0.17) / 2.0).epsilon(1e-12));
        CHECK(est.per_step[0].has_value());
        CHECK(est.per_step[1].has_value());
        CHECK_FALSE(est.per_step[2].has_value());
    }
    SUBCASE("fallback when no step overlaps") {
        const Scene s = stationary_scene({{0, 0}, {5, 0}});
        const RadiusEstimate est = window_average_radius(s);
        CHECK_FALSE(est.estimated);
        CHECK(est.average == 0.2);
    }
    SUBCASE("estimated average never exceeds half the threshold") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int k = 0; k < 100; ++k) {
            std::vector<Position> pts(4);
            for (auto& p : pts) p = {u(rng), u(rng)};
            const RadiusEstimate est = window_average_radius(stationary_scene(pts));
            if (est.estimated) {
                CHECK(est.average > 0.0);
                CHECK(est.average < 0.2);
            }
        }
    }
}

TEST_CASE("collision_penalty hand cases") {
    Tape tape;
    SUBCASE("no colliding pair") {
        CHECK(collision_penalty(tape, constant_prediction({{0, 0}, {1, 0}}), 0.4).item() == 0.0);
    }
    SUBCASE("one pair at tau/2 for one step") {
        auto pred = constant_prediction({{0, 0}, {5, 0}});
        pred[4].v = {0, 0, 0.2, 0};  // d = tau/2 at step 4 only
        CHECK(collision_penalty(tape, pred, 0.4).item() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("coincident pair contributes 2") {
        auto pred = constant_prediction({{0, 0}, {5, 0}});
        pred[0].v = {1, 1, 1, 1};
        CHECK(collision_penalty(tape, pred, 0.4).item() == doctest::Approx(2.0).epsilon(1e-5));
    }
    SUBCASE("guards") {
        CHECK_THROWS_AS(collision_penalty(tape, constant_prediction({{0, 0}}), 0.0), ConfigError);
        CHECK_THROWS_AS(collision_penalty(tape, {}, 0.4), EmptyScene);
    }
}

TEST_CASE("collision_penalty equals triple-loop brute force") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> agents(1, 8);
    std::uniform_real_distribution<double> tau_dist(0.1, 0.8);
    for (int k = 0; k < 200; ++k) {
        const auto pred = random_prediction(rng, agents(rng), 1.5);
        const double tau = tau_dist(rng);
        Tape tape;
        CHECK(collision_penalty(tape, pred, tau).item() ==
              doctest::Approx(brute_force_cp(pred, tau)).epsilon(0).scale(1).epsilon(1e-9));
    }
}

TEST_CASE("collision_penalty monotone and rigid-motion invariant") {
    auto pred = constant_prediction({{0, 0}, {5, 0}});
    pred[3].v = {0, 0, 0.3, 0};
    Tape t1, t2, t3;
    const double base = collision_penalty(t1, pred, 0.4).item();
    auto closer = pred;
    closer[3].v = {0, 0, 0.25, 0};
    CHECK(collision_penalty(t2, closer, 0.4).item() > base);

    auto moved = pred;
    const double c = std::cos(0.7), s = std::sin(0.7);
    for (auto& step : moved)
        for (int i = 0; i < step.rows(); ++i) {
            const double x = step.v[2 * i], y = step.v[2 * i + 1];
            step.v[2 * i] = c * x - s * y + 3.0;
            step.v[2 * i + 1] = s * x + c * y - 1.0;
        }
    CHECK(collision_penalty(t3, moved, 0.4).item() == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ade_loss") {
    const Scene s = stationary_scene({{1, 1}, {2, 2}});
    Tape tape;
    SUBCASE("perfect prediction") {
        CHECK(ade_loss(tape, prediction_from_scene(s), s).item() <= 2e-6);
    }
    SUBCASE("uniform 0.1 m offset") {
        auto pred = prediction_from_scene(s);
        for (auto& step : pred)
            for (int i = 0; i < step.rows(); ++i) step.v[2 * i] += 0.1;
        CHECK(ade_loss(tape, pred, s).item() == doctest::Approx(0.1).epsilon(1e-6));
    }
    SUBCASE("single offset term averaged over agent-steps") {
        const Scene lone = stationary_scene({{0, 0}});
        auto pred = prediction_from_scene(lone);
        pred[11].v = {0.3, 0.4};
        CHECK(ade_loss(tape, pred, lone).item() == doctest::Approx(0.5 / 12.0).epsilon(1e-6));
    }
    SUBCASE("shape guard") {
        CHECK_THROWS_AS(ade_loss(tape, constant_prediction({{0, 0}}), s), ShapeMismatch);
    }
}

TEST_CASE("composite_loss mode arithmetic") {
    // Dense scene: ground-truth futures overlap, so DOS estimates a radius.
    Scene s = stationary_scene({{0, 0}, {0.3, 0}});
    const auto pred = constant_prediction({{0, 0}, {0.3, 0}});

    LossConfig cfg;
    Tape t;
    SUBCASE("lambda = 0 equals pure ADE in all modes") {
        cfg.lambda = 0.0;
        for (LossMode m : {LossMode::ade_only, LossMode::dos, LossMode::sos}) {
            cfg.mode = m;
            Tape tape;
            CHECK(composite_loss(tape, cfg, s, pred).item() == ade_loss(t, pred, s).item());
        }
    }
    SUBCASE("DOS = ade + lambda * CP at tau = 2*R-bar") {
        cfg.mode = LossMode::dos;
        cfg.lambda = 0.003;
        const double tau = 2.0 * window_average_radius(s).average;  // 2 * 0.15 = 0.30
        Tape a, b, c;
        CHECK(composite_loss(a, cfg, s, pred).item() ==
              doctest::Approx(ade_loss(b, pred, s).item() +
                              0.003 * collision_penalty(c, pred, tau).item())
                  .epsilon(1e-12));
    }
    SUBCASE("SOS = ade + lambda * CP at tau = 0.4") {
        cfg.mode = LossMode::sos;
        cfg.lambda = 0.01;
        Tape a, b, c;
        CHECK(composite_loss(a, cfg, s, pred).item() ==
              doctest::Approx(ade_loss(b, pred, s).item() +
                              0.01 * collision_penalty(c, pred, 0.4).item())
                  .epsilon(1e-12));
    }
    SUBCASE("ade 0.3, CP 2.0, lambda 0.003 -> 0.306") {
        // Coincident predicted pair (CP = 2 per step = 24 total at any tau);
        // rescale lambda's multiplicand via a hand-built case instead: use
        // one-step coincidence and uniform ADE offset.
        Scene far = stationary_scene({{0, 0}, {5, 0}});
        auto p = prediction_from_scene(far);
        for (auto& step : p)
            for (int i = 0; i < step.rows(); ++i) step.v[2 * i + 1] += 0.3;  // ADE = 0.3
        // Move the pair together at one step: d = 0 -> CP = 2.
        p[6].v = {1, 1, 1, 1};
        LossConfig c{LossMode::sos, 0.003, 0.2, 0.4};
        Tape tape;
        // ADE changes slightly at the modified step; compute the exact value.
        Tape t2;
        const double expected = ade_loss(t2, p, far).item() + 0.003 * 2.0;
        CHECK(composite_loss(tape, c, far, p).item() == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("DOS penalty never exceeds SOS penalty when a radius is estimated") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.2);
    int estimated_cases = 0;
    for (int k = 0; k < 400 && estimated_cases < 100; ++k) {
        std::vector<Position> pts(5);
        for (auto& p : pts) p = {u(rng), u(rng)};
        const Scene s = stationary_scene(pts);
        const RadiusEstimate est = window_average_radius(s);
        if (!est.estimated) continue;
        estimated_cases++;
        const auto pred = random_prediction(rng, 5, 1.2);
        Tape a, b;
        const double cp_dos = collision_penalty(a, pred, 2.0 * est.average).item();
        const double cp_sos = collision_penalty(b, pred, 0.4).item();
        CHECK(cp_dos <= cp_sos + 1e-12);
    }
    CHECK(estimated_cases == 100);
}

TEST_CASE("composite_loss gradient matches finite differences") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (LossMode mode : {LossMode::ade_only, LossMode::dos, LossMode::sos}) {
        LossConfig cfg{mode, 0.05, 0.2, 0.4};
        std::vector<Position> pts{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        const Scene s = stationary_scene(pts);
        const double tau = mode == LossMode::dos ? 2.0 * window_average_radius(s).average : 0.4;
        // Flat parameterization of all 12 steps of all 3 agents.
        auto f = [&](Tape& tape, const Tensor& x) {
            std::vector<Tensor> pred;
            for (int t = 0; t < kFutureSteps; ++t)
                pred.push_back(tape.reshape(tape.slice_rows(tape.reshape(x, {kFutureSteps, 6}), t, t + 1), {3, 2}));
            return composite_loss(tape, cfg, s, pred);
        };
        // Sample until every pair distance at every step is >= 10h from tau.
        Tensor x = Tensor::zeros({kFutureSteps * 6});
        bool ok = false;
        while (!ok) {
            for (auto& v : x.v) v = u(rng) * 1.5;
            ok = true;
            for (int t = 0; t < kFutureSteps && ok; ++t)
                for (int i = 0; i < 3 && ok; ++i)
                    for (int j = i + 1; j < 3; ++j) {
                        const double dx = x.v[6 * t + 2 * i] - x.v[6 * t + 2 * j];
                        const double dy = x.v[6 * t + 2 * i + 1] - x.v[6 * t + 2 * j + 1];
                        if (std::abs(std::sqrt(dx * dx + dy * dy) - tau) < 1e-4) ok = false;
                    }
        }
        CHECK(ad::finite_difference_check(f, x) < 1e-4);
    }
}
