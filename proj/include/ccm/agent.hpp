#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccm/checkpoint.hpp"
#include "ccm/cuts.hpp"
#include "ccm/environments.hpp"
#include "ccm/errors.hpp"
#include "ccm/fcr.hpp"
#include "ccm/goal.hpp"
#include "ccm/log.hpp"
#include "ccm/rl.hpp"

namespace ccm {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return mix(mix(seed) ^ mix(tag));
}

/// Assign goals along a view chain ordered downstream -> upstream: the view
/// nearest the global target keeps the global goal, every view further
/// upstream receives a box centered on what the downstream controller
/// proposes for the shared boundary.
inline std::vector<GoalBox> cascade_goals(
    const std::vector<CcmView>& chain, const GoalBox& global_goal,
    const std::function<std::vector<double>(const CcmView&, const GoalBox&)>& propose,
    const std::function<double(int)>& half_width_for) {
    if (chain.empty()) throw ChainError("empty view chain");
    std::vector<GoalBox> goals{global_goal};
    for (std::size_t k = 1; k < chain.size(); ++k) {
        if (chain[k].local_target != chain[k - 1].local_modifiable)
            throw ChainError("view boundaries do not chain");
        auto center = propose(chain[k - 1], goals[k - 1]);
        if (center.size() != chain[k].local_target.size())
            throw ChainError("proposal dimension does not match the boundary");
        std::vector<double> hw;
        hw.reserve(center.size());
        for (int id : chain[k].local_target) hw.push_back(half_width_for(id));
        goals.emplace_back(std::move(center), std::move(hw));
    }
    return goals;
}

namespace detail {

struct StaticRange {
    double lo = -1.0, hi = 1.0;
    double mid() const { return 0.5 * (lo + hi); }
    double half() const { return std::max(0.5 * (hi - lo), 1e-9); }
};

inline std::vector<StaticRange> node_ranges(const CausalGraphDynamic& g) {
    std::vector<StaticRange> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto [lo, hi] = g.range_of(i);
        out[i] = {lo, hi};
    }
    return out;
}

}  // namespace detail

/// Evaluation actuation. Direct clamps every view's entry boundary (the
/// reconstruction path in full use, one reward stream per view); cascade
/// actuates only the physical modifiable nodes and lets proposals travel
/// the chain as goals.
enum class Actuation { Direct, Cascade };

struct EvalOptions {
    int episodes = 1;
    std::uint64_t seed = 0;
    Actuation actuation = Actuation::Direct;
    std::optional<NoiseRegime> noise_override;
};

// ---------------------------------------------------------------------------

/// The two-level controller: a competitive cut-selection policy on top, a
/// shared goal-conditioned Gaussian controller below, cascade sub-goals
/// between views, and a recurrent reconstruction of companion interventions
/// for multi-node cuts.
class CcmAgent {
public:
    CcmAgent(Scenario scenario, HyperParams hp, std::uint64_t seed)
        : scenario_(std::move(scenario)), hp_(hp), seed_(seed),
          env_(scenario_, derive_seed(seed, 1)) {
        hp_.validate();
        catalog_ = enumerate_min_cuts(env_.graph());
        if (catalog_.cuts.empty())
            throw ConfigError("scenario admits no minimum vertex cuts");

        sources_ = scenario_.modifiable_ids();
        targets_ = scenario_.target_ids();
        ranges_ = detail::node_ranges(env_.graph());
        for (const auto& r : ranges_) trackers_.emplace_back(r.lo, r.hi);

        max_cut_ = 0;
        for (const auto& c : catalog_.cuts) max_cut_ = std::max(max_cut_, c.size());
        pad_ = std::max({targets_.size(), max_cut_, sources_.size()});
        action_dim_ = hp_.multivariate_low_action
                          ? static_cast<int>(std::max(max_cut_, sources_.size()))
                          : 1;

        const int n = static_cast<int>(env_.graph().size());
        const int flo = n + 2 * static_cast<int>(pad_);
        const int fhi = 5 * static_cast<int>(catalog_.cuts.size());
        Rng init = Rng::substream(seed, 7);
        hi_policy_ = FeedforwardNet({fhi, hp_.hidden, hp_.hidden,
                                     static_cast<int>(catalog_.cuts.size())},
                                    init);
        hi_value_ = FeedforwardNet({fhi, hp_.hidden, hp_.hidden, 1}, init);
        lo_policy_ = FeedforwardNet({flo, hp_.hidden, hp_.hidden, action_dim_}, init);
        lo_value_ = FeedforwardNet({flo, hp_.hidden, hp_.hidden, 1}, init);
        lo_head_ = GaussianHead(action_dim_, 0.0);
        fcr_ = FcrModule(hp_.rnn_hidden, hp_.lr_fcr, hp_.momentum, init);

        opt_hi_p_ = SgdMomentum(hp_.lr_policy, hp_.momentum);
        opt_hi_v_ = SgdMomentum(hp_.lr_value, hp_.momentum);
        opt_lo_p_ = SgdMomentum(hp_.lr_policy, hp_.momentum);
        opt_lo_ls_ = SgdMomentum(hp_.lr_policy, hp_.momentum);
        opt_lo_v_ = SgdMomentum(hp_.lr_value, hp_.momentum);

        policy_rng_ = Rng::substream(seed, 11);
    }

    const Scenario& scenario() const { return scenario_; }
    const CutSetCatalog& catalog() const { return catalog_; }
    const HyperParams& hyperparams() const { return hp_; }
    std::uint64_t skipped_updates() const { return skipped_updates_; }
    std::uint64_t steps_done() const { return steps_done_; }
    std::uint64_t episodes_done() const { return episodes_done_; }

    void train(std::uint64_t budget_steps, int log_seed, LogSink& sink) {
        budget_ = budget_steps;
        while (steps_done_ < budget_steps) {
            run_training_episode(log_seed, sink);
            ++episodes_done_;
        }
    }

    void eval(const EvalOptions& opts, int log_seed, LogSink& sink) {
        Scenario scen = scenario_;
        if (opts.noise_override) scen.noise = *opts.noise_override;
        Environment env(scen, derive_seed(opts.seed, 0xE));
        for (int ep = 0; ep < opts.episodes; ++ep) {
            env.reset(derive_seed(opts.seed, 0xEE00ULL + ep));
            run_eval_episode(env, ep, log_seed, opts.actuation, sink);
        }
    }

    // -- persistence ----------------------------------------------------------

    static constexpr double kAgentKind = 1.0;  // hierarchical

    std::vector<double> signature() const {
        const std::uint64_t cat = fnv1a64(catalog_.canonical());
        return {kAgentKind,
                static_cast<double>(env_.graph().size()),
                static_cast<double>(catalog_.cuts.size()),
                static_cast<double>(pad_),
                static_cast<double>(action_dim_),
                static_cast<double>(hp_.hidden),
                static_cast<double>(hp_.rnn_hidden),
                static_cast<double>(cat >> 32),
                static_cast<double>(cat & 0xffffffffULL)};
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.put("sig", signature());
        ck.put("hi_policy", hi_policy_.params());
        ck.put("hi_value", hi_value_.params());
        ck.put("lo_policy", lo_policy_.params());
        ck.put("lo_value", lo_value_.params());
        ck.put("lo_log_std", lo_head_.log_std);
        ck.put("fcr", fcr_.cell().params());
        ck.put("vel_hi_policy", opt_hi_p_.velocity());
        ck.put("vel_hi_value", opt_hi_v_.velocity());
        ck.put("vel_lo_policy", opt_lo_p_.velocity());
        ck.put("vel_lo_log_std", opt_lo_ls_.velocity());
        ck.put("vel_lo_value", opt_lo_v_.velocity());
        ck.put("vel_fcr", fcr_.optimizer().velocity());
        std::vector<double> lo, hi;
        for (const auto& t : trackers_) {
            lo.push_back(t.lo());
            hi.push_back(t.hi());
        }
        ck.put("range_lo", lo);
        ck.put("range_hi", hi);
        ck.put("rew_low", {static_cast<double>(rew_low_.count()), rew_low_.mean(),
                           rew_low_.m2()});
        ck.put("rew_high", {static_cast<double>(rew_high_.count()),
                            rew_high_.mean(), rew_high_.m2()});
        ck.put("counters", {static_cast<double>(steps_done_),
                            static_cast<double>(episodes_done_)});
        return ck;
    }

    void restore(const Checkpoint& ck) {
        if (ck.get("sig") != signature())
            throw IncompatibleCheckpointError(
                "checkpoint does not match this scenario/agent interface");
        ck.restore("hi_policy", hi_policy_.params());
        ck.restore("hi_value", hi_value_.params());
        ck.restore("lo_policy", lo_policy_.params());
        ck.restore("lo_value", lo_value_.params());
        ck.restore("lo_log_std", lo_head_.log_std);
        ck.restore("fcr", fcr_.cell().params());
        restore_velocity(ck, "vel_hi_policy", opt_hi_p_, hi_policy_.params().size());
        restore_velocity(ck, "vel_hi_value", opt_hi_v_, hi_value_.params().size());
        restore_velocity(ck, "vel_lo_policy", opt_lo_p_, lo_policy_.params().size());
        restore_velocity(ck, "vel_lo_log_std", opt_lo_ls_, lo_head_.log_std.size());
        restore_velocity(ck, "vel_lo_value", opt_lo_v_, lo_value_.params().size());
        restore_velocity(ck, "vel_fcr", fcr_.optimizer(),
                         fcr_.cell().params().size());
        const auto& lo = ck.get("range_lo");
        const auto& hi = ck.get("range_hi");
        if (lo.size() != trackers_.size() || hi.size() != trackers_.size())
            throw IncompatibleCheckpointError("range tracker size mismatch");
        for (std::size_t i = 0; i < trackers_.size(); ++i)
            trackers_[i] = RangeTracker(lo[i], hi[i]);
        const auto& rl = ck.get("rew_low");
        rew_low_.restore(static_cast<std::uint64_t>(rl[0]), rl[1], rl[2]);
        const auto& rh = ck.get("rew_high");
        rew_high_.restore(static_cast<std::uint64_t>(rh[0]), rh[1], rh[2]);
        const auto& cnt = ck.get("counters");
        steps_done_ = static_cast<std::uint64_t>(cnt[0]);
        episodes_done_ = static_cast<std::uint64_t>(cnt[1]);
    }

private:
    static void restore_velocity(const Checkpoint& ck, const std::string& name,
                                 SgdMomentum& opt, std::size_t expect) {
        auto v = ck.get(name);
        if (!v.empty() && v.size() != expect)
            throw IncompatibleCheckpointError("velocity size mismatch for " + name);
        opt.velocity() = std::move(v);
    }

    // -- encodings ------------------------------------------------------------

    double norm_in(std::size_t i, double x) const {
        return (x - ranges_[i].mid()) / ranges_[i].half();
    }
    double denorm_action(std::size_t i, double a) const {
        return std::clamp(ranges_[i].mid() + a * ranges_[i].half(), ranges_[i].lo,
                          ranges_[i].hi);
    }

    std::vector<double> encode_high(const std::vector<CutFeatures>& feats) const {
        const double n = static_cast<double>(env_.graph().size());
        std::vector<double> out;
        out.reserve(feats.size() * 5);
        for (const auto& f : feats) {
            out.push_back(static_cast<double>(f.is_controllable));
            out.push_back(static_cast<double>(f.distance) / n);
            out.push_back(static_cast<double>(f.size) / n);
            for (double e : f.extras) out.push_back(e);
        }
        return out;
    }

    std::vector<double> encode_low(const CausalGraphDynamic& g, const CcmView& view,
                                   const GoalBox& goal) const {
        std::vector<double> out(g.size() + 2 * pad_, 0.0);
        for (int id : view.retained) {
            const std::size_t i = g.idx(id);
            out[i] = norm_in(i, g.state()[i]);
        }
        for (std::size_t d = 0; d < goal.dim(); ++d) {
            const std::size_t i = g.idx(view.local_target[d]);
            out[g.size() + d] = norm_in(i, goal.center[d]);
            out[g.size() + pad_ + d] = 1.0;
        }
        return out;
    }

    // -- chain construction -----------------------------------------------------

    std::vector<CcmView> build_chain(const CausalGraphDynamic& g,
                                     const CutSet& cut) const {
        std::vector<CcmView> chain;
        chain.push_back(make_view(g, cut.nodes, targets_));
        std::vector<int> entry = cut.nodes;
        for (int d = 2; d < hp_.cascade_depth; ++d) {
            CcmView rest = make_view(g, sources_, entry);
            CutSetCatalog sub;
            try {
                sub = enumerate_min_cuts(g, rest);
            } catch (const NoPathError&) {
                break;
            }
            if (sub.cuts.empty()) break;
            chain.push_back(make_view(g, sub.cuts[0].nodes, entry));
            entry = sub.cuts[0].nodes;
        }
        chain.push_back(make_view(g, sources_, entry));
        return chain;
    }

    /// Deterministic boundary proposal for cascade goal assignment: policy
    /// mean for the first boundary node, reconstruction look-ahead for
    /// companions of the active cut, range midpoint otherwise.
    std::vector<double> propose_boundary(const CausalGraphDynamic& g,
                                         const CcmView& view, const GoalBox& goal,
                                         const CutSet& active_cut) const {
        const auto x = encode_low(g, view, goal);
        const auto mean = lo_policy_.forward(x);
        std::vector<double> out;
        out.reserve(view.local_modifiable.size());
        const bool is_active_cut = view.local_modifiable == active_cut.nodes;
        double v0_env = 0.0;
        for (std::size_t k = 0; k < view.local_modifiable.size(); ++k) {
            const std::size_t i = g.idx(view.local_modifiable[k]);
            if (k == 0) {
                v0_env = denorm_action(i, mean[0]);
                out.push_back(v0_env);
            } else if (hp_.multivariate_low_action &&
                       k < static_cast<std::size_t>(action_dim_)) {
                out.push_back(denorm_action(i, mean[k]));
            } else if (is_active_cut && k - 1 < fcr_.companions()) {
                const std::size_t i0 = g.idx(view.local_modifiable[0]);
                const double v0n = trackers_[i0].normalize(v0_env);
                out.push_back(trackers_[i].denormalize(fcr_.peek(k - 1, v0n)));
            } else {
                out.push_back(ranges_[i].mid());
            }
        }
        return out;
    }

    double subgoal_half_width(int node_id) const {
        const std::size_t i = env_.graph().idx(node_id);
        return std::max(hp_.subgoal_eps * 2.0 * ranges_[i].half(), 1e-9);
    }

    double anneal_epsilon() const {
        if (budget_ == 0) return hp_.eps_high_final;
        const double f =
            std::min(1.0, static_cast<double>(steps_done_) /
                              (0.8 * static_cast<double>(budget_)));
        return hp_.eps_high_start + f * (hp_.eps_high_final - hp_.eps_high_start);
    }

    // -- training episode ---------------------------------------------------------

    void run_training_episode(int log_seed, LogSink& sink) {
        auto& g = env_.graph();
        env_.reset(derive_seed(seed_, 0xE9000000ULL + episodes_done_));
        const int episode = static_cast<int>(episodes_done_);
        const GoalBox& global_goal = scenario_.goal;
        const double eps_hi = anneal_epsilon();
        const CategoricalHead hi_head{eps_hi};
        std::vector<int> region;

        Trajectory hi_traj;
        hi_traj.gamma = hp_.gamma;
        std::vector<FcrModule::Sequence> fcr_batch;

        int t = 0;
        const int T =
            (scenario_.episode_len + hp_.low_horizon - 1) / hp_.low_horizon;
        for (int seg = 0; seg < T && t < scenario_.episode_len; ++seg) {
            const auto feats = features(g, catalog_, region);
            const auto hs = encode_high(feats);
            const auto logits = hi_policy_.forward(hs);
            const auto pick = hi_head.sample(logits, policy_rng_);
            const CutSet& cut = catalog_.cuts[pick.action];
            const bool iscon = feats[pick.action].is_controllable != 0;

            auto chain = build_chain(g, cut);
            auto goals = cascade_goals(
                chain, global_goal,
                [&](const CcmView& v, const GoalBox& gl) {
                    return propose_boundary(g, v, gl, cut);
                },
                [&](int id) { return subgoal_half_width(id); });

            const std::size_t companions =
                hp_.multivariate_low_action ? 0 : cut.size() - 1;
            fcr_.start_segment(companions);
            std::vector<FcrModule::Sequence> seqs(companions);
            std::vector<double> prev_truth(companions);
            for (std::size_t j = 0; j < companions; ++j) {
                const std::size_t i = g.idx(cut.nodes[j + 1]);
                prev_truth[j] = trackers_[i].normalize(g.value(cut.nodes[j + 1]));
            }

            std::vector<Trajectory> trajs(chain.size());
            for (auto& tr : trajs) tr.gamma = hp_.gamma;
            std::vector<double> seg_rewards;

            const int seg_start = t;
            const int seg_end =
                std::min(t + hp_.low_horizon, scenario_.episode_len);
            for (; t < seg_end; ++t)
                step_training(chain, goals, cut, seqs, prev_truth, trajs,
                              seg_rewards, episode, log_seed, t, pick.action, sink);
            steps_done_ += static_cast<std::uint64_t>(seg_end - seg_start);
            for (int id : cut.nodes) g.release_boundary(id);

            // low-level updates, one per view stream
            if (!trajs.empty() && !trajs[0].empty()) {
                double lp = 0.0, lv = 0.0;
                int nupd = 0;
                for (auto& tr : trajs) {
                    tr.steps.back().done = true;
                    try {
                        A2cOptions o;
                        o.entropy_coef = hp_.entropy_coef;
                        o.reward_norm = hp_.normalize_rewards ? &rew_low_ : nullptr;
                        const auto st =
                            a2c_update(tr, lo_policy_, lo_head_, lo_value_,
                                       opt_lo_p_, opt_lo_ls_, opt_lo_v_, o);
                        lp += st.policy_loss;
                        lv += st.value_loss;
                        ++nupd;
                    } catch (const NumericsError& e) {
                        ++skipped_updates_;
                        std::cerr << "[ccm] skipped low-level update: " << e.what()
                                  << "\n";
                    }
                }
                if (nupd > 0) {
                    LogRow upd;
                    upd.seed = log_seed;
                    upd.episode = episode;
                    upd.t = t - 1;
                    upd.level = "upd_low";
                    upd.cut_id = pick.action;
                    upd.loss_policy = lp / nupd;
                    upd.loss_value = lv / nupd;
                    sink.row(upd);
                }
            }

            for (auto& s : seqs)
                if (!s.targets.empty()) fcr_batch.push_back(std::move(s));

            const double avg_low = avg_low_reward(seg_rewards, hp_.gamma);
            const double rh = high_reward(avg_low, iscon, hp_);
            Transition ht;
            ht.state = hs;
            ht.action_index = pick.action;
            ht.reward = rh;
            ht.value = hi_value_.forward(hs)[0];
            ht.log_prob = pick.log_prob;
            hi_traj.steps.push_back(std::move(ht));

            LogRow hrow;
            hrow.seed = log_seed;
            hrow.episode = episode;
            hrow.t = t - 1;
            hrow.level = "high";
            hrow.cut_id = pick.action;
            hrow.goal_center = global_goal.center;
            hrow.reward = rh;
            sink.row(hrow);

            region = g.descendants_of(cut.nodes);
        }

        // episode-end updates
        double hi_lp = std::numeric_limits<double>::quiet_NaN();
        double hi_lv = std::numeric_limits<double>::quiet_NaN();
        if (!hi_traj.empty()) {
            hi_traj.steps.back().done = true;
            try {
                A2cOptions o;
                o.entropy_coef = hp_.entropy_coef;
                o.reward_norm = hp_.normalize_rewards ? &rew_high_ : nullptr;
                const auto st = a2c_update(hi_traj, hi_policy_, hi_head, hi_value_,
                                           opt_hi_p_, opt_hi_v_, o);
                hi_lp = st.policy_loss;
                hi_lv = st.value_loss;
            } catch (const NumericsError& e) {
                ++skipped_updates_;
                std::cerr << "[ccm] skipped high-level update: " << e.what() << "\n";
            }
        }
        double fcr_loss_ep = std::numeric_limits<double>::quiet_NaN();
        if (!fcr_batch.empty()) {
            try {
                fcr_loss_ep = fcr_.update(fcr_batch, hp_.fcr_mse);
            } catch (const NumericsError& e) {
                ++skipped_updates_;
                std::cerr << "[ccm] skipped reconstruction update: " << e.what()
                          << "\n";
            }
        }
        LogRow upd;
        upd.seed = log_seed;
        upd.episode = episode;
        upd.t = t - 1;
        upd.level = "upd_high";
        upd.loss_policy = hi_lp;
        upd.loss_value = hi_lv;
        upd.loss_fcr = fcr_loss_ep;
        sink.row(upd);
    }

    void step_training(const std::vector<CcmView>& chain,
                       const std::vector<GoalBox>& goals, const CutSet& cut,
                       std::vector<FcrModule::Sequence>& seqs,
                       std::vector<double>& prev_truth,
                       std::vector<Trajectory>& trajs,
                       std::vector<double>& seg_rewards, int episode, int log_seed,
                       int t, int cut_id, LogSink& sink) {
        auto& g = env_.graph();
        const std::size_t K = chain.size();
        const std::size_t companions = seqs.size();

        // this step's reconstruction truths, read before anything moves
        std::vector<double> truth_now(companions);
        for (std::size_t j = 0; j < companions; ++j) {
            const std::size_t i = g.idx(cut.nodes[j + 1]);
            truth_now[j] = trackers_[i].normalize(g.value(cut.nodes[j + 1]));
        }

        Interventions phys;
        std::vector<double> boundary_natural_next(K, 0.0);  // first node per view
        std::vector<std::vector<double>> actions_env(K);
        for (std::size_t k = 0; k < K; ++k) {
            const auto& view = chain[k];
            const auto x = encode_low(g, view, goals[k]);
            const auto mean = lo_policy_.forward(x);
            const auto smp = lo_head_.sample(mean, policy_rng_);
            Transition tr;
            tr.state = x;
            tr.action = smp.action;
            tr.value = lo_value_.forward(x)[0];
            tr.log_prob = smp.log_prob;
            trajs[k].steps.push_back(std::move(tr));

            const std::size_t nact = std::min<std::size_t>(
                action_dim_, view.local_modifiable.size());
            for (std::size_t a = 0; a < nact; ++a) {
                const int id = view.local_modifiable[a];
                const double env_a = denorm_action(g.idx(id), smp.action[a]);
                actions_env[k].push_back(env_a);
                if (k + 1 == K) {
                    phys[id] = env_a;  // the physical boundary acts through step()
                } else {
                    if (a == 0) boundary_natural_next[k] = g.natural_value(id);
                    g.clamp_boundary(id, env_a);
                }
            }
        }

        // reconstruction pass for the active cut's companions: logged here,
        // trained at episode end against what the environment actually did
        std::vector<double> recon_env(companions, 0.0);
        if (companions > 0) {
            const std::size_t i0 = g.idx(cut.nodes[0]);
            const double v0n = trackers_[i0].normalize(actions_env[0][0]);
            for (std::size_t j = 0; j < companions; ++j) {
                seqs[j].inputs.push_back({v0n, prev_truth[j]});
                seqs[j].targets.push_back(truth_now[j]);
                const double pred = fcr_.advance(j, v0n);
                recon_env[j] =
                    trackers_[g.idx(cut.nodes[j + 1])].denormalize(pred);
                fcr_.feed_truth(j, truth_now[j]);
                prev_truth[j] = truth_now[j];
            }
        }

        env_.step(phys);
        for (std::size_t i = 0; i < g.size(); ++i)
            trackers_[i].observe(g.state()[i]);

        for (std::size_t k = 0; k < K; ++k) {
            const auto& view = chain[k];
            std::vector<double> vals;
            vals.reserve(view.local_target.size());
            for (int id : view.local_target) vals.push_back(g.value(id));
            if (k >= 1 && !vals.empty()) {
                // the downstream neighbour clamps the first boundary node;
                // judge this view on what that node would naturally do
                vals[0] = boundary_natural_next[k - 1];
            }
            const double r =
                box_reward(vals, goals[k], hp_.reward_margin, hp_.inside_scale);
            trajs[k].steps.back().reward = r;
            if (k == 0) seg_rewards.push_back(r);

            LogRow row;
            row.seed = log_seed;
            row.episode = episode;
            row.t = t;
            row.level = k == 0 ? "low" : "up";
            row.cut_id = cut_id;
            row.goal_center = goals[k].center;
            row.action = actions_env[k];
            if (k == 0)
                for (double v : recon_env) row.action.push_back(v);
            row.reward = r;
            sink.row(row);
        }
    }

    // -- evaluation episode ------------------------------------------------------

    void run_eval_episode(Environment& env, int episode, int log_seed,
                          Actuation mode, LogSink& sink) {
        auto& g = env.graph();
        const GoalBox& global_goal = scenario_.goal;
        std::vector<int> region;
        int t = 0;
        const int T =
            (scenario_.episode_len + hp_.low_horizon - 1) / hp_.low_horizon;
        const CategoricalHead greedy_head{0.0};
        for (int seg = 0; seg < T && t < scenario_.episode_len; ++seg) {
            const auto feats = features(g, catalog_, region);
            const auto hs = encode_high(feats);
            const auto logits = hi_policy_.forward(hs);
            const int a = greedy_head.greedy(logits);
            const CutSet& cut = catalog_.cuts[a];
            auto chain = build_chain(g, cut);
            auto goals = cascade_goals(
                chain, global_goal,
                [&](const CcmView& v, const GoalBox& gl) {
                    return propose_boundary(g, v, gl, cut);
                },
                [&](int id) { return subgoal_half_width(id); });
            const std::size_t companions =
                (mode == Actuation::Direct && !hp_.multivariate_low_action)
                    ? cut.size() - 1
                    : 0;
            fcr_.start_segment(companions);

            const int seg_end =
                std::min(t + hp_.low_horizon, scenario_.episode_len);
            for (; t < seg_end; ++t) {
                Interventions phys;
                std::vector<std::vector<double>> actions_env(chain.size());
                std::vector<double> boundary_natural_next(chain.size(), 0.0);
                for (std::size_t k = 0; k < chain.size(); ++k) {
                    const auto& view = chain[k];
                    if (mode == Actuation::Cascade && k + 1 != chain.size())
                        continue;  // only the physical boundary acts
                    const auto x = encode_low(g, view, goals[k]);
                    const auto mean = lo_policy_.forward(x);
                    const std::size_t nact = std::min<std::size_t>(
                        action_dim_, view.local_modifiable.size());
                    for (std::size_t idx = 0; idx < nact; ++idx) {
                        const int id = view.local_modifiable[idx];
                        const double env_a = denorm_action(g.idx(id), mean[idx]);
                        actions_env[k].push_back(env_a);
                        if (k + 1 == chain.size()) {
                            phys[id] = env_a;
                        } else {
                            if (idx == 0)
                                boundary_natural_next[k] = g.natural_value(id);
                            g.clamp_boundary(id, env_a);
                        }
                    }
                    if (k == 0 && companions > 0) {
                        const std::size_t i0 = g.idx(cut.nodes[0]);
                        const double v0n =
                            trackers_[i0].normalize(actions_env[0][0]);
                        for (std::size_t j = 0; j < companions; ++j) {
                            const double pred = fcr_.advance(j, v0n);
                            fcr_.feed_truth(j, pred);  // self-conditioning
                            const std::size_t ij = g.idx(cut.nodes[j + 1]);
                            const double env_v = trackers_[ij].denormalize(pred);
                            actions_env[k].push_back(env_v);
                            g.clamp_boundary(cut.nodes[j + 1], env_v);
                        }
                    }
                }

                env.step(phys);

                std::vector<double> tv;
                for (int id : targets_) tv.push_back(g.value(id));
                LogRow row;
                row.seed = log_seed;
                row.episode = episode;
                row.t = t;
                row.level = "low";
                row.cut_id = a;
                row.goal_center = global_goal.center;
                row.action = actions_env[0].empty() ? actions_env.back()
                                                    : actions_env[0];
                row.reward = box_reward(tv, global_goal, hp_.reward_margin,
                                        hp_.inside_scale);
                sink.row(row);

                if (mode == Actuation::Direct) {
                    for (std::size_t k = 1; k < chain.size(); ++k) {
                        std::vector<double> vals;
                        for (int id : chain[k].local_target)
                            vals.push_back(g.value(id));
                        if (!vals.empty()) vals[0] = boundary_natural_next[k - 1];
                        LogRow urow;
                        urow.seed = log_seed;
                        urow.episode = episode;
                        urow.t = t;
                        urow.level = "up";
                        urow.cut_id = a;
                        urow.goal_center = goals[k].center;
                        urow.action = actions_env[k];
                        urow.reward = box_reward(vals, goals[k], hp_.reward_margin,
                                                 hp_.inside_scale);
                        sink.row(urow);
                    }
                }
            }
            for (int id : cut.nodes) g.release_boundary(id);
            region = g.descendants_of(cut.nodes);
        }
    }

    Scenario scenario_;
    HyperParams hp_;
    std::uint64_t seed_ = 0;
    Environment env_;
    CutSetCatalog catalog_;
    std::vector<int> sources_, targets_;
    std::vector<detail::StaticRange> ranges_;
    std::vector<RangeTracker> trackers_;
    std::size_t max_cut_ = 0, pad_ = 0;
    int action_dim_ = 1;

    FeedforwardNet hi_policy_, hi_value_, lo_policy_, lo_value_;
    GaussianHead lo_head_{1, 0.0};
    FcrModule fcr_;
    SgdMomentum opt_hi_p_, opt_hi_v_, opt_lo_p_, opt_lo_ls_, opt_lo_v_;
    RunningStd rew_low_, rew_high_;
    Rng policy_rng_;

    std::uint64_t budget_ = 0;
    std::uint64_t steps_done_ = 0;
    std::uint64_t episodes_done_ = 0;
    std::uint64_t skipped_updates_ = 0;
};

}  // namespace ccm
