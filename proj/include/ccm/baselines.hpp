#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

#include "ccm/agent.hpp"
#include "ccm/checkpoint.hpp"
#include "ccm/environments.hpp"
#include "ccm/log.hpp"
#include "ccm/rl.hpp"

namespace ccm {

/// Non-hierarchical baseline: one Gaussian actor-critic drives every
/// physical modifiable node directly against the global goal box. Shares the
/// learning machinery and the box reward so comparisons isolate the
/// hierarchy, cascade and reconstruction contributions.
class FlatAgent {
public:
    FlatAgent(Scenario scenario, HyperParams hp, std::uint64_t seed)
        : scenario_(std::move(scenario)), hp_(hp), seed_(seed),
          env_(scenario_, derive_seed(seed, 2)) {
        hp_.validate();
        sources_ = scenario_.modifiable_ids();
        targets_ = scenario_.target_ids();
        ranges_ = detail::node_ranges(env_.graph());

        const int n = static_cast<int>(env_.graph().size());
        const int fin = n + static_cast<int>(targets_.size());
        action_dim_ = static_cast<int>(sources_.size());
        Rng init = Rng::substream(seed, 17);
        policy_ = FeedforwardNet({fin, hp_.hidden, hp_.hidden, action_dim_}, init);
        value_ = FeedforwardNet({fin, hp_.hidden, hp_.hidden, 1}, init);
        head_ = GaussianHead(action_dim_, 0.0);
        opt_p_ = SgdMomentum(hp_.lr_policy, hp_.momentum);
        opt_ls_ = SgdMomentum(hp_.lr_policy, hp_.momentum);
        opt_v_ = SgdMomentum(hp_.lr_value, hp_.momentum);
        policy_rng_ = Rng::substream(seed, 19);
    }

    const Scenario& scenario() const { return scenario_; }
    std::uint64_t skipped_updates() const { return skipped_updates_; }

    void train(std::uint64_t budget_steps, int log_seed, LogSink& sink) {
        while (steps_done_ < budget_steps) {
            run_training_episode(log_seed, sink);
            ++episodes_done_;
        }
    }

    void eval(const EvalOptions& opts, int log_seed, LogSink& sink) {
        Scenario scen = scenario_;
        if (opts.noise_override) scen.noise = *opts.noise_override;
        Environment env(scen, derive_seed(opts.seed, 0xF));
        for (int ep = 0; ep < opts.episodes; ++ep) {
            env.reset(derive_seed(opts.seed, 0xFE00ULL + ep));
            auto& g = env.graph();
            for (int t = 0; t < scenario_.episode_len; ++t) {
                const auto x = encode(g);
                const auto mean = policy_.forward(x);
                Interventions iv;
                std::vector<double> act;
                for (std::size_t a = 0; a < sources_.size(); ++a) {
                    const double v = denorm_action(g.idx(sources_[a]), mean[a]);
                    iv[sources_[a]] = v;
                    act.push_back(v);
                }
                env.step(iv);
                sink.row(make_row(log_seed, ep, t, act, reward(g)));
            }
        }
    }

    static constexpr double kAgentKind = 2.0;  // flat baseline

    std::vector<double> signature() const {
        return {kAgentKind, static_cast<double>(env_.graph().size()),
                static_cast<double>(action_dim_), static_cast<double>(hp_.hidden)};
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.put("sig", signature());
        ck.put("flat_policy", policy_.params());
        ck.put("flat_value", value_.params());
        ck.put("flat_log_std", head_.log_std);
        ck.put("vel_policy", opt_p_.velocity());
        ck.put("vel_log_std", opt_ls_.velocity());
        ck.put("vel_value", opt_v_.velocity());
        ck.put("rew", {static_cast<double>(rew_norm_.count()), rew_norm_.mean(),
                       rew_norm_.m2()});
        ck.put("counters", {static_cast<double>(steps_done_),
                            static_cast<double>(episodes_done_)});
        return ck;
    }

    void restore(const Checkpoint& ck) {
        if (ck.get("sig") != signature())
            throw IncompatibleCheckpointError(
                "checkpoint does not match this scenario/agent interface");
        ck.restore("flat_policy", policy_.params());
        ck.restore("flat_value", value_.params());
        ck.restore("flat_log_std", head_.log_std);
        opt_p_.velocity() = ck.get("vel_policy");
        opt_ls_.velocity() = ck.get("vel_log_std");
        opt_v_.velocity() = ck.get("vel_value");
        const auto& r = ck.get("rew");
        rew_norm_.restore(static_cast<std::uint64_t>(r[0]), r[1], r[2]);
        const auto& cnt = ck.get("counters");
        steps_done_ = static_cast<std::uint64_t>(cnt[0]);
        episodes_done_ = static_cast<std::uint64_t>(cnt[1]);
    }

private:
    double denorm_action(std::size_t i, double a) const {
        return std::clamp(ranges_[i].mid() + a * ranges_[i].half(), ranges_[i].lo,
                          ranges_[i].hi);
    }

    std::vector<double> encode(const CausalGraphDynamic& g) const {
        std::vector<double> out;
        out.reserve(g.size() + targets_.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            out.push_back((g.state()[i] - ranges_[i].mid()) / ranges_[i].half());
        for (std::size_t d = 0; d < targets_.size(); ++d) {
            const std::size_t i = g.idx(targets_[d]);
            out.push_back((scenario_.goal.center[d] - ranges_[i].mid()) /
                          ranges_[i].half());
        }
        return out;
    }

    double reward(const CausalGraphDynamic& g) const {
        std::vector<double> tv;
        for (int id : targets_) tv.push_back(g.value(id));
        return box_reward(tv, scenario_.goal, hp_.reward_margin, hp_.inside_scale);
    }

    LogRow make_row(int log_seed, int episode, int t,
                    const std::vector<double>& act, double r) const {
        LogRow row;
        row.seed = log_seed;
        row.episode = episode;
        row.t = t;
        row.level = "low";
        row.cut_id = -1;
        row.goal_center = scenario_.goal.center;
        row.action = act;
        row.reward = r;
        return row;
    }

    void run_training_episode(int log_seed, LogSink& sink) {
        auto& g = env_.graph();
        env_.reset(derive_seed(seed_, 0xF9000000ULL + episodes_done_));
        const int episode = static_cast<int>(episodes_done_);
        Trajectory traj;
        traj.gamma = hp_.gamma;
        for (int t = 0; t < scenario_.episode_len; ++t) {
            const auto x = encode(g);
            const auto mean = policy_.forward(x);
            const auto smp = head_.sample(mean, policy_rng_);
            Interventions iv;
            std::vector<double> act;
            for (std::size_t a = 0; a < sources_.size(); ++a) {
                const double v = denorm_action(g.idx(sources_[a]), smp.action[a]);
                iv[sources_[a]] = v;
                act.push_back(v);
            }
            env_.step(iv);
            ++steps_done_;
            const double r = reward(g);

            Transition tr;
            tr.state = x;
            tr.action = smp.action;
            tr.reward = r;
            tr.value = value_.forward(x)[0];
            tr.log_prob = smp.log_prob;
            tr.done = t + 1 == scenario_.episode_len;
            traj.steps.push_back(std::move(tr));
            sink.row(make_row(log_seed, episode, t, act, r));

            // n-step updates every low-horizon steps, bootstrapped mid-episode
            if (static_cast<int>(traj.steps.size()) == hp_.low_horizon ||
                tr.done) {
                if (!traj.steps.back().done)
                    traj.bootstrap_value = value_.forward(encode(g))[0];
                try {
                    A2cOptions o;
                    o.entropy_coef = hp_.entropy_coef;
                    o.reward_norm = hp_.normalize_rewards ? &rew_norm_ : nullptr;
                    const auto st = a2c_update(traj, policy_, head_, value_,
                                               opt_p_, opt_ls_, opt_v_, o);
                    LogRow upd;
                    upd.seed = log_seed;
                    upd.episode = episode;
                    upd.t = t;
                    upd.level = "upd_low";
                    upd.cut_id = -1;
                    upd.loss_policy = st.policy_loss;
                    upd.loss_value = st.value_loss;
                    sink.row(upd);
                } catch (const NumericsError& e) {
                    ++skipped_updates_;
                    std::cerr << "[ccm] skipped flat update: " << e.what() << "\n";
                }
                traj = Trajectory{};
                traj.gamma = hp_.gamma;
            }
        }
    }

    Scenario scenario_;
    HyperParams hp_;
    std::uint64_t seed_ = 0;
    Environment env_;
    std::vector<int> sources_, targets_;
    std::vector<detail::StaticRange> ranges_;
    int action_dim_ = 1;

    FeedforwardNet policy_, value_;
    GaussianHead head_{1, 0.0};
    SgdMomentum opt_p_, opt_ls_, opt_v_;
    RunningStd rew_norm_;
    Rng policy_rng_;

    std::uint64_t steps_done_ = 0;
    std::uint64_t episodes_done_ = 0;
    std::uint64_t skipped_updates_ = 0;
};

/// Uniform-random reference: actions drawn uniformly over each modifiable
/// node's declared range, rewarded on the global goal box.
inline double random_policy_eval(const Scenario& scenario, const HyperParams& hp,
                                 int episodes, std::uint64_t seed,
                                 LogSink* sink = nullptr) {
    Environment env(scenario, derive_seed(seed, 0xA));
    const auto sources = scenario.modifiable_ids();
    const auto targets = scenario.target_ids();
    auto ranges = detail::node_ranges(env.graph());
    Rng rng = Rng::substream(seed, 23);
    double total = 0.0;
    std::uint64_t count = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        env.reset(derive_seed(seed, 0xAA00ULL + ep));
        auto& g = env.graph();
        for (int t = 0; t < scenario.episode_len; ++t) {
            Interventions iv;
            std::vector<double> act;
            for (int id : sources) {
                const auto& r = ranges[g.idx(id)];
                const double v = rng.uniform(r.lo, r.hi);
                iv[id] = v;
                act.push_back(v);
            }
            env.step(iv);
            std::vector<double> tv;
            for (int id : targets) tv.push_back(g.value(id));
            const double r =
                box_reward(tv, scenario.goal, hp.reward_margin, hp.inside_scale);
            total += r;
            ++count;
            if (sink) {
                LogRow row;
                row.seed = static_cast<int>(seed);
                row.episode = ep;
                row.t = t;
                row.level = "low";
                row.cut_id = -1;
                row.goal_center = scenario.goal.center;
                row.action = act;
                row.reward = r;
                sink->row(row);
            }
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace ccm
