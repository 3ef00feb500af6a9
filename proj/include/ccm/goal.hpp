#pragma once

#include <cmath>
#include <iostream>
#include <span>
#include <vector>

#include "ccm/errors.hpp"

namespace ccm {

/// Interval goal q = [center - eps, center + eps], elementwise.
struct GoalBox {
    std::vector<double> center;
    std::vector<double> half_width;

    GoalBox() = default;
    GoalBox(std::vector<double> c, std::vector<double> hw)
        : center(std::move(c)), half_width(std::move(hw)) {
        if (center.size() != half_width.size())
            throw ShapeError("goal center/half-width size mismatch");
        for (double e : half_width)
            if (!(e > 0.0)) throw ParamError("goal half-width must be positive");
    }
    GoalBox(double c, double hw) : GoalBox(std::vector<double>{c}, {hw}) {}

    std::size_t dim() const { return center.size(); }
    double lo(std::size_t i) const { return center[i] - half_width[i]; }
    double hi(std::size_t i) const { return center[i] + half_width[i]; }

    bool contains(std::span<const double> s) const {
        for (std::size_t i = 0; i < center.size(); ++i)
            if (s[i] < lo(i) || s[i] > hi(i)) return false;
        return true;
    }
};

/// Tuning constants shared by both levels of the controller.
struct HyperParams {
    int low_horizon = 10;    // C: env steps per high-level action
    int high_horizon = 10;   // T: high-level steps per episode
    double gamma = 0.99;
    double alpha = 1.0;      // weight of the low-level feedback in the high reward
    double cross_penalty = 2.0;    // m: charged when the cut is already controllable
    double length_penalty = 0.5;   // n: charged every high-level step
    double reward_margin = 24.0;   // omega
    double inside_scale = 0.1;     // upsilon, in (0,1)
    double subgoal_eps = 0.05;     // cascade goal half-width, fraction of node range

    double lr_policy = 3e-4;
    double lr_value = 1e-3;
    double lr_fcr = 1e-3;
    double momentum = 0.9;
    double entropy_coef = 0.01;
    int hidden = 64;        // two hidden layers of this width
    int rnn_hidden = 32;
    double eps_high_start = 0.3;  // high-level forced exploration, annealed
    double eps_high_final = 0.05;
    bool normalize_rewards = true;
    int cascade_depth = 2;
    bool multivariate_low_action = false;  // ablation: full Gaussian over the cut
    bool fcr_mse = false;                  // ablation: squared error instead of BCE

    void validate() const {
        if (low_horizon < 1 || high_horizon < 1) throw ParamError("horizons must be >= 1");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ParamError("gamma must be in (0,1]");
        if (cross_penalty < 0.0 || length_penalty < 0.0)
            throw ParamError("penalties must be nonnegative");
        if (!(reward_margin > 0.0)) throw ParamError("reward margin must be positive");
        if (!(inside_scale > 0.0 && inside_scale < 1.0))
            throw ParamError("inside scale must be in (0,1)");
        if (!(subgoal_eps > 0.0)) throw ParamError("subgoal_eps must be positive");
        if (cascade_depth < 1) throw ParamError("cascade_depth must be >= 1");
    }
};

/// Distance from a point to the goal box, outside portion (L1).
inline double dist_outside(std::span<const double> s, const GoalBox& q) {
    double d = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i)
        d += std::max(s[i] - q.hi(i), 0.0) + std::max(q.lo(i) - s[i], 0.0);
    return d;
}

/// Distance from the box center to the clamp of the point into the box (L1).
inline double dist_inside(std::span<const double> s, const GoalBox& q) {
    double d = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double clamped = std::min(q.hi(i), std::max(q.lo(i), s[i]));
        d += std::abs(q.center[i] - clamped);
    }
    return d;
}

/// Goal-interval reward: omega - dist_outside - upsilon * dist_inside.
/// Maximal (= omega) exactly at the box center.
inline double box_reward(std::span<const double> s, const GoalBox& q, double omega,
                         double upsilon) {
    if (s.size() != q.dim()) throw ShapeError("state/goal dimension mismatch");
    return omega - dist_outside(s, q) - upsilon * dist_inside(s, q);
}

/// The outside distance exactly as printed in the source formulation, whose
/// second term ignores the state. Kept for regression comparison only; the
/// corrected form above is the one in use.
inline double dist_outside_literal(std::span<const double> s, const GoalBox& q) {
    double d = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i)
        d += std::max(s[i] - q.hi(i), 0.0) + std::max(q.lo(i), 0.0);
    return d;
}

inline double box_reward_literal(std::span<const double> s, const GoalBox& q,
                                 double omega, double upsilon) {
    if (s.size() != q.dim()) throw ShapeError("state/goal dimension mismatch");
    return omega - dist_outside_literal(s, q) - upsilon * dist_inside(s, q);
}

/// High-level reward: the low-level feedback, a cross penalty when the chosen
/// cut is already inside the controllable region, and a constant length
/// penalty per high-level step.
inline double high_reward(double avg_low, bool is_controllable,
                          const HyperParams& hp) {
    const double base = hp.alpha * avg_low - hp.length_penalty;
    return is_controllable ? base - hp.cross_penalty : base + hp.cross_penalty;
}

/// Discounted single-step average of one low-level segment. An empty segment
/// yields 0 with a warning (episode ended before the segment started).
inline double avg_low_reward(std::span<const double> rewards, double gamma) {
    if (rewards.empty()) {
        std::cerr << "[ccm] warning: averaging an empty low-level segment\n";
        return 0.0;
    }
    double acc = 0.0;
    double g = 1.0;
    for (double r : rewards) {
        acc += g * r;
        g *= gamma;
    }
    return acc / static_cast<double>(rewards.size());
}

}  // namespace ccm
