#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ccm/goal.hpp"
#include "ccm/rng.hpp"

using namespace ccm;
using Catch::Approx;

TEST_CASE("box reward peaks at the center") {
    const GoalBox q(10.0, 2.0);
    REQUIRE(box_reward(std::vector<double>{10.0}, q, 24.0, 0.1) == Approx(24.0));
}

TEST_CASE("box reward on the boundary pays the inside distance") {
    const GoalBox q(10.0, 2.0);
    // clamped point is the boundary itself, eps away from center
    REQUIRE(box_reward(std::vector<double>{12.0}, q, 24.0, 0.1) ==
            Approx(24.0 - 0.1 * 2.0));
    REQUIRE(box_reward(std::vector<double>{8.0}, q, 24.0, 0.1) ==
            Approx(24.0 - 0.1 * 2.0));
}

TEST_CASE("box reward worked example") {
    // goal 10 +- 2, margin 24, inside scale 0.1, state 13:
    // outside distance 1, inside distance 2 -> 24 - 1 - 0.2
    const GoalBox q(10.0, 2.0);
    REQUIRE(box_reward(std::vector<double>{13.0}, q, 24.0, 0.1) == Approx(22.8));
}

TEST_CASE("box reward identities hold to machine precision") {
    Rng rng(77);
    for (int i = 0; i < 10000; ++i) {
        const double g = rng.uniform(-50.0, 50.0);
        const double eps = rng.uniform(0.01, 10.0);
        const double omega = rng.uniform(0.1, 48.0);
        const double ups = rng.uniform(0.01, 0.99);
        const GoalBox q(g, eps);
        REQUIRE(std::abs(box_reward(std::vector<double>{g}, q, omega, ups) -
                         omega) < 1e-12);
        REQUIRE(std::abs(box_reward(std::vector<double>{g + eps}, q, omega, ups) -
                         (omega - ups * eps)) < 1e-12);
    }
}

TEST_CASE("box reward never exceeds the margin and decreases monotonically") {
    const GoalBox q(0.0, 1.0);
    const double omega = 24.0, ups = 0.1;
    double prev = box_reward(std::vector<double>{0.0}, q, omega, ups);
    REQUIRE(prev == Approx(omega));
    for (double s = 0.05; s < 5.0; s += 0.05) {
        const double r = box_reward(std::vector<double>{s}, q, omega, ups);
        REQUIRE(r < prev);
        REQUIRE(r <= omega);
        prev = r;
    }
    // slope inside the box is -upsilon, outside it adds the full distance
    const double inside_a = box_reward(std::vector<double>{0.2}, q, omega, ups);
    const double inside_b = box_reward(std::vector<double>{0.7}, q, omega, ups);
    REQUIRE(inside_a - inside_b == Approx(ups * 0.5));
    const double out_a = box_reward(std::vector<double>{1.5}, q, omega, ups);
    const double out_b = box_reward(std::vector<double>{2.5}, q, omega, ups);
    REQUIRE(out_a - out_b == Approx(1.0));
}

TEST_CASE("literal outside distance differs as printed") {
    // the as-printed form adds max(q_min, 0) regardless of the state
    const GoalBox q(10.0, 2.0);
    REQUIRE(dist_outside_literal(std::vector<double>{10.0}, q) == Approx(8.0));
    REQUIRE(dist_outside(std::vector<double>{10.0}, q) == 0.0);
    REQUIRE(box_reward_literal(std::vector<double>{10.0}, q, 24.0, 0.1) ==
            Approx(16.0));
}

TEST_CASE("multi-dimensional box distances accumulate per coordinate") {
    const GoalBox q({0.0, 10.0}, {1.0, 2.0});
    const std::vector<double> s{2.0, 7.0};  // 1 outside each dimension
    REQUIRE(dist_outside(s, q) == Approx(1.0 + 1.0));
    REQUIRE(dist_inside(s, q) == Approx(1.0 + 2.0));
}

TEST_CASE("high-level reward follows the penalty structure") {
    HyperParams hp;
    hp.alpha = 1.0;
    hp.cross_penalty = 1.0;
    hp.length_penalty = 0.5;
    REQUIRE(high_reward(2.0, false, hp) == Approx(2.5));
    REQUIRE(high_reward(2.0, true, hp) == Approx(0.5));
    hp.alpha = 0.0;
    REQUIRE(high_reward(123.0, false, hp) == Approx(0.5));  // m - n exactly
}

TEST_CASE("high-level reward is affine with a clean controllability flip") {
    Rng rng(78);
    for (int i = 0; i < 10000; ++i) {
        HyperParams hp;
        hp.alpha = rng.uniform(0.0, 3.0);
        hp.cross_penalty = rng.uniform(0.0, 5.0);
        hp.length_penalty = rng.uniform(0.0, 5.0);
        const double r1 = rng.uniform(-50.0, 50.0);
        const double r2 = rng.uniform(-50.0, 50.0);
        const double a = high_reward(r1, false, hp);
        const double b = high_reward(r2, false, hp);
        if (std::abs(r1 - r2) > 1e-9)
            REQUIRE(std::abs((a - b) / (r1 - r2) - hp.alpha) < 1e-9);
        REQUIRE(std::abs((high_reward(r1, true, hp) - a) +
                         2.0 * hp.cross_penalty) < 1e-12);
    }
}

TEST_CASE("segment average reward") {
    SECTION("constant rewards average to themselves") {
        std::vector<double> r(7, 3.25);
        REQUIRE(avg_low_reward(r, 1.0) == Approx(3.25));
    }
    SECTION("discounted two-step example") {
        const std::vector<double> r{1.0, 0.0};
        REQUIRE(avg_low_reward(r, 0.5) == Approx(0.5));
    }
    SECTION("empty segments yield zero") {
        REQUIRE(avg_low_reward(std::vector<double>{}, 0.9) == 0.0);
    }
}

TEST_CASE("hyperparameter validation") {
    HyperParams hp;
    hp.inside_scale = 1.5;
    REQUIRE_THROWS_AS(hp.validate(), ParamError);
    hp = HyperParams{};
    hp.gamma = 0.0;
    REQUIRE_THROWS_AS(hp.validate(), ParamError);
    hp = HyperParams{};
    hp.low_horizon = 0;
    REQUIRE_THROWS_AS(hp.validate(), ParamError);
    REQUIRE_NOTHROW(HyperParams{}.validate());
}

TEST_CASE("goal boxes insist on positive half-widths") {
    REQUIRE_THROWS_AS(GoalBox(1.0, 0.0), ParamError);
    REQUIRE_THROWS_AS(GoalBox({1.0, 2.0}, {0.5}), ShapeError);
}
