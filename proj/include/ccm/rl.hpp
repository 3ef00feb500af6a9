#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/nn.hpp"
#include "ccm/policy.hpp"

namespace ccm {

/// One on-policy transition. `action_index` is used by categorical policies,
/// `action` by Gaussian ones. `value` and `log_prob` record the estimates at
/// collection time; the update recomputes both under the current parameters.
struct Transition {
    std::vector<double> state;
    int action_index = 0;
    std::vector<double> action;
    double reward = 0.0;
    double value = 0.0;
    double log_prob = 0.0;
    bool done = false;
};

struct Trajectory {
    std::vector<Transition> steps;
    double gamma = 0.99;
    /// Value bootstrap for a rollout that was truncated mid-episode.
    std::optional<double> bootstrap_value;

    bool empty() const { return steps.empty(); }
};

/// Running standard deviation (Welford); used to rescale rewards before the
/// gradient step so that large reward margins do not dominate.
class RunningStd {
public:
    void observe(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    double sd() const {
        if (n_ < 2) return 1.0;
        return std::sqrt(m2_ / static_cast<double>(n_ - 1));
    }
    double scale() const { return std::max(sd(), 1e-8); }

    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double m2() const { return m2_; }
    void restore(std::uint64_t n, double mean, double m2) {
        n_ = n;
        mean_ = mean;
        m2_ = m2;
    }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct A2cOptions {
    double entropy_coef = 0.01;
    double max_grad_norm = 10.0;        // global-norm clip per parameter group
    RunningStd* reward_norm = nullptr;  // optional reward scaling
};

struct A2cStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

namespace detail {

inline std::vector<double> discounted_returns(const Trajectory& traj) {
    std::vector<double> g(traj.steps.size());
    double acc = traj.bootstrap_value.value_or(0.0);
    if (!traj.steps.empty() && traj.steps.back().done) acc = 0.0;
    for (std::size_t t = traj.steps.size(); t-- > 0;) {
        const auto& s = traj.steps[t];
        if (s.done) acc = 0.0;
        acc = s.reward + traj.gamma * acc;
        g[t] = acc;
    }
    return g;
}

inline void check_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw NumericsError(std::string(what) + " is non-finite");
}

inline void clip_by_norm(std::vector<double>& grad, double max_norm) {
    if (max_norm <= 0.0 || grad.empty()) return;
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
}

}  // namespace detail

/// Advantage actor-critic step for a categorical policy. The value net is a
/// scalar-output net over the same state. Throws NumericsError (before
/// touching any parameter) if a loss or gradient is non-finite.
inline A2cStats a2c_update(const Trajectory& traj, FeedforwardNet& policy,
                           const CategoricalHead& head, FeedforwardNet& value,
                           SgdMomentum& policy_opt, SgdMomentum& value_opt,
                           const A2cOptions& opts = {}) {
    if (traj.empty()) throw ShapeError("a2c_update on an empty trajectory");

    Trajectory scaled;
    const Trajectory* use = &traj;
    if (opts.reward_norm) {
        for (const auto& s : traj.steps) opts.reward_norm->observe(s.reward);
        scaled = traj;
        const double inv = 1.0 / opts.reward_norm->scale();
        for (auto& s : scaled.steps) s.reward *= inv;
        if (scaled.bootstrap_value) *scaled.bootstrap_value *= inv;
        use = &scaled;
    }

    const auto returns = detail::discounted_returns(*use);
    const double n = static_cast<double>(use->steps.size());

    std::vector<double> pgrad, vgrad;
    A2cStats stats;
    for (std::size_t t = 0; t < use->steps.size(); ++t) {
        const auto& s = use->steps[t];
        const auto v = value.forward(s.state);
        const double adv = returns[t] - v[0];
        const auto logits = policy.forward(s.state);
        const double logp = head.log_prob(logits, s.action_index);
        stats.policy_loss += (-logp * adv) / n;
        stats.entropy += head.entropy(logits) / n;
        stats.value_loss += adv * adv / n;

        const auto dlogits =
            head.loss_grad(logits, s.action_index, adv / n, opts.entropy_coef / n);
        policy.backward(dlogits, pgrad);
        const double dv[1] = {2.0 * (v[0] - returns[t]) / n};
        value.backward(dv, vgrad);
    }
    detail::check_finite(stats.policy_loss, "policy loss");
    detail::check_finite(stats.value_loss, "value loss");
    detail::check_finite(stats.entropy, "entropy");
    if (!all_finite(pgrad) || !all_finite(vgrad))
        throw NumericsError("non-finite gradient");
    detail::clip_by_norm(pgrad, opts.max_grad_norm);
    detail::clip_by_norm(vgrad, opts.max_grad_norm);

    policy_opt.step(policy.params(), pgrad);
    value_opt.step(value.params(), vgrad);
    if (!all_finite(policy.params()) || !all_finite(value.params()))
        throw NumericsError("non-finite parameters after update");
    return stats;
}

/// Advantage actor-critic step for a Gaussian policy (mean net + learned
/// log-std vector).
inline A2cStats a2c_update(const Trajectory& traj, FeedforwardNet& policy,
                           GaussianHead& head, FeedforwardNet& value,
                           SgdMomentum& policy_opt, SgdMomentum& log_std_opt,
                           SgdMomentum& value_opt, const A2cOptions& opts = {}) {
    if (traj.empty()) throw ShapeError("a2c_update on an empty trajectory");

    Trajectory scaled;
    const Trajectory* use = &traj;
    if (opts.reward_norm) {
        for (const auto& s : traj.steps) opts.reward_norm->observe(s.reward);
        scaled = traj;
        const double inv = 1.0 / opts.reward_norm->scale();
        for (auto& s : scaled.steps) s.reward *= inv;
        if (scaled.bootstrap_value) *scaled.bootstrap_value *= inv;
        use = &scaled;
    }

    const auto returns = detail::discounted_returns(*use);
    const double n = static_cast<double>(use->steps.size());

    std::vector<double> pgrad, vgrad, lsgrad;
    A2cStats stats;
    for (std::size_t t = 0; t < use->steps.size(); ++t) {
        const auto& s = use->steps[t];
        const auto v = value.forward(s.state);
        const double adv = returns[t] - v[0];
        const auto mean = policy.forward(s.state);
        const double logp = head.log_prob(mean, s.action);
        stats.policy_loss += (-logp * adv) / n;
        stats.entropy += head.entropy() / n;
        stats.value_loss += adv * adv / n;

        const auto dmean =
            head.loss_grad(mean, s.action, adv / n, opts.entropy_coef / n, lsgrad);
        policy.backward(dmean, pgrad);
        const double dv[1] = {2.0 * (v[0] - returns[t]) / n};
        value.backward(dv, vgrad);
    }
    detail::check_finite(stats.policy_loss, "policy loss");
    detail::check_finite(stats.value_loss, "value loss");
    detail::check_finite(stats.entropy, "entropy");
    if (!all_finite(pgrad) || !all_finite(vgrad) || !all_finite(lsgrad))
        throw NumericsError("non-finite gradient");
    detail::clip_by_norm(pgrad, opts.max_grad_norm);
    detail::clip_by_norm(vgrad, opts.max_grad_norm);
    detail::clip_by_norm(lsgrad, opts.max_grad_norm);

    policy_opt.step(policy.params(), pgrad);
    log_std_opt.step(head.log_std, lsgrad);
    head.clamp();
    value_opt.step(value.params(), vgrad);
    if (!all_finite(policy.params()) || !all_finite(value.params()) ||
        !all_finite(head.log_std))
        throw NumericsError("non-finite parameters after update");
    return stats;
}

}  // namespace ccm
