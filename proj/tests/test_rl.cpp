#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ccm/rl.hpp"

using namespace ccm;
using Catch::Approx;

namespace {

Trajectory bandit_step(int arm, double reward, double gamma = 1.0) {
    Trajectory t;
    t.gamma = gamma;
    Transition tr;
    tr.state = {1.0};
    tr.action_index = arm;
    tr.reward = reward;
    tr.done = true;
    t.steps.push_back(std::move(tr));
    return t;
}

}  // namespace

TEST_CASE("discounted returns with reset at episode boundaries") {
    Trajectory t;
    t.gamma = 0.5;
    for (double r : {1.0, 2.0, 4.0}) {
        Transition tr;
        tr.reward = r;
        t.steps.push_back(tr);
    }
    t.steps[1].done = true;  // two segments: [1, 2][4]
    const auto g = detail::discounted_returns(t);
    REQUIRE(g[2] == Approx(4.0));
    REQUIRE(g[1] == Approx(2.0));
    REQUIRE(g[0] == Approx(1.0 + 0.5 * 2.0));
}

TEST_CASE("bootstrap value extends an unfinished rollout") {
    Trajectory t;
    t.gamma = 0.9;
    Transition tr;
    tr.reward = 1.0;
    t.steps.push_back(tr);
    t.bootstrap_value = 10.0;
    const auto g = detail::discounted_returns(t);
    REQUIRE(g[0] == Approx(1.0 + 0.9 * 10.0));
}

TEST_CASE("zero rewards with a zero value net give a zero policy gradient") {
    Rng rng(21);
    FeedforwardNet policy({1, 2}, rng);
    FeedforwardNet value({1, 1}, rng);
    for (auto& p : value.params()) p = 0.0;
    const auto before = policy.params();

    Trajectory t = bandit_step(0, 0.0);
    SgdMomentum po(0.1, 0.0), vo(0.1, 0.0);
    CategoricalHead head{0.0};
    A2cOptions opts;
    opts.entropy_coef = 0.0;
    const auto stats = a2c_update(t, policy, head, value, po, vo, opts);
    REQUIRE(stats.policy_loss == Approx(0.0).margin(1e-15));
    REQUIRE(policy.params() == before);
}

TEST_CASE("single transition advantage is return minus value") {
    Rng rng(22);
    FeedforwardNet policy({1, 2}, rng);
    FeedforwardNet value({1, 1}, rng);
    for (auto& p : value.params()) p = 0.0;
    Trajectory t = bandit_step(1, 1.0);
    SgdMomentum po(0.0, 0.0), vo(0.0, 0.0);  // zero lr: inspect losses only
    CategoricalHead head{0.0};
    A2cOptions opts;
    opts.entropy_coef = 0.0;
    const auto stats = a2c_update(t, policy, head, value, po, vo, opts);
    // advantage = 1; value loss = (0 - 1)^2
    REQUIRE(stats.value_loss == Approx(1.0));
}

TEST_CASE("two-arm bandit converges to the rewarding arm") {
    Rng rng(23);
    FeedforwardNet policy({1, 2}, rng);
    FeedforwardNet value({1, 1}, rng);
    SgdMomentum po(0.05, 0.9), vo(0.05, 0.9);
    CategoricalHead head{0.0};
    Rng sampler(24);
    A2cOptions opts;
    opts.entropy_coef = 0.01;
    for (int i = 0; i < 2000; ++i) {
        const auto logits = policy.forward(std::vector<double>{1.0});
        const auto pick = head.sample(logits, sampler);
        auto t = bandit_step(pick.action, pick.action == 0 ? 1.0 : 0.0);
        a2c_update(t, policy, head, value, po, vo, opts);
    }
    const auto p = softmax(policy.forward(std::vector<double>{1.0}));
    REQUIRE(p[0] > 0.95);
}

TEST_CASE("non-finite rewards raise NumericsError and leave parameters alone") {
    Rng rng(25);
    FeedforwardNet policy({1, 2}, rng);
    FeedforwardNet value({1, 1}, rng);
    const auto keep_p = policy.params();
    const auto keep_v = value.params();
    Trajectory t = bandit_step(0, std::numeric_limits<double>::infinity());
    SgdMomentum po(0.1, 0.9), vo(0.1, 0.9);
    CategoricalHead head{0.0};
    REQUIRE_THROWS_AS(a2c_update(t, policy, head, value, po, vo), NumericsError);
    REQUIRE(policy.params() == keep_p);
    REQUIRE(value.params() == keep_v);
}

TEST_CASE("empty trajectories are rejected") {
    Rng rng(26);
    FeedforwardNet policy({1, 2}, rng);
    FeedforwardNet value({1, 1}, rng);
    SgdMomentum po(0.1, 0.9), vo(0.1, 0.9);
    CategoricalHead head{0.0};
    Trajectory t;
    REQUIRE_THROWS_AS(a2c_update(t, policy, head, value, po, vo), ShapeError);
}

TEST_CASE("reward normalization rescales by the running deviation") {
    RunningStd rs;
    for (double x : {1.0, 2.0, 3.0, 4.0}) rs.observe(x);
    // sample sd of {1,2,3,4}
    REQUIRE(rs.sd() == Approx(std::sqrt(5.0 / 3.0)));
    REQUIRE(rs.scale() == Approx(rs.sd()));
}

TEST_CASE("identical seeds give identical parameter trajectories") {
    auto run = [] {
        Rng rng(42);
        FeedforwardNet policy({1, 2}, rng);
        FeedforwardNet value({1, 1}, rng);
        SgdMomentum po(0.03, 0.9), vo(0.03, 0.9);
        CategoricalHead head{0.1};
        Rng sampler(43);
        for (int i = 0; i < 50; ++i) {
            const auto logits = policy.forward(std::vector<double>{1.0});
            const auto pick = head.sample(logits, sampler);
            auto t = bandit_step(pick.action, pick.action == 0 ? 0.3 : -0.3);
            a2c_update(t, policy, head, value, po, vo);
        }
        return policy.params();
    };
    REQUIRE(run() == run());
}

TEST_CASE("gaussian a2c moves the mean toward rewarded actions") {
    Rng rng(44);
    FeedforwardNet policy({1, 1}, rng);
    FeedforwardNet value({1, 1}, rng);
    GaussianHead head(1, -0.5);
    SgdMomentum po(0.01, 0.9), ls(0.01, 0.9), vo(0.01, 0.9);
    Rng sampler(45);
    A2cOptions opts;
    opts.entropy_coef = 0.0;
    opts.max_grad_norm = 1.0;
    RunningStd norm;
    opts.reward_norm = &norm;
    for (int i = 0; i < 1500; ++i) {
        const auto mean = policy.forward(std::vector<double>{1.0});
        const auto s = head.sample(mean, sampler);
        Trajectory t;
        t.gamma = 1.0;
        Transition tr;
        tr.state = {1.0};
        tr.action = s.action;
        // peak reward at action = 2
        tr.reward = -(s.action[0] - 2.0) * (s.action[0] - 2.0);
        tr.done = true;
        t.steps.push_back(std::move(tr));
        a2c_update(t, policy, head, value, po, ls, vo, opts);
    }
    const auto mean = policy.forward(std::vector<double>{1.0});
    REQUIRE(mean[0] == Approx(2.0).margin(0.35));
}
