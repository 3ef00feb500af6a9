#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/nn.hpp"
#include "ccm/rng.hpp"

namespace ccm {

inline std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

inline double categorical_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

/// Discrete head over a fixed action set, with optional epsilon mixing
/// toward the uniform distribution (forced exploration). Log-probabilities
/// and gradients are those of the mixture that is actually sampled.
struct CategoricalHead {
    double epsilon = 0.0;

    std::vector<double> mixture(std::span<const double> logits) const {
        auto p = softmax(logits);
        if (epsilon > 0.0) {
            const double u = 1.0 / static_cast<double>(p.size());
            for (double& v : p) v = (1.0 - epsilon) * v + epsilon * u;
        }
        return p;
    }

    struct Sample {
        int action = 0;
        double log_prob = 0.0;
    };

    Sample sample(std::span<const double> logits, Rng& rng) const {
        if (!all_finite(logits)) throw NumericsError("non-finite policy logits");
        const auto p = mixture(logits);
        const double r = rng.uniform(0.0, 1.0);
        double acc = 0.0;
        int a = static_cast<int>(p.size()) - 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (r < acc) { a = static_cast<int>(i); break; }
        }
        return {a, std::log(p[a])};
    }

    double log_prob(std::span<const double> logits, int action) const {
        return std::log(mixture(logits)[action]);
    }

    int greedy(std::span<const double> logits) const {
        return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                logits.begin());
    }

    double entropy(std::span<const double> logits) const {
        return categorical_entropy(softmax(logits));
    }

    /// d/dlogits of [-coef_pg * log pi(a) - coef_ent * H(pi)], where pi is the
    /// sampled mixture for the first term and the raw softmax for the entropy.
    std::vector<double> loss_grad(std::span<const double> logits, int action,
                                  double coef_pg, double coef_ent) const {
        const auto p = softmax(logits);
        const auto pm = mixture(logits);
        const double h = categorical_entropy(p);
        std::vector<double> g(logits.size());
        const double scale = (1.0 - epsilon) * p[action] / pm[action];
        for (std::size_t j = 0; j < logits.size(); ++j) {
            const double dlogp = scale * ((static_cast<int>(j) == action ? 1.0 : 0.0) -
                                          p[j]);
            const double dh = -p[j] * (std::log(std::max(p[j], 1e-300)) + h);
            g[j] = -coef_pg * dlogp - coef_ent * dh;
        }
        return g;
    }
};

/// Diagonal Gaussian head: the mean comes from a net, the log-stddev is a
/// free learned vector clamped to [-5, 2].
struct GaussianHead {
    std::vector<double> log_std;
    static constexpr double kLogStdMin = -5.0;
    static constexpr double kLogStdMax = 2.0;

    explicit GaussianHead(int dim = 1, double init_log_std = 0.0)
        : log_std(dim, init_log_std) {}

    void clamp() {
        for (double& v : log_std) v = std::clamp(v, kLogStdMin, kLogStdMax);
    }

    struct Sample {
        std::vector<double> action;
        double log_prob = 0.0;
    };

    Sample sample(std::span<const double> mean, Rng& rng) const {
        if (!all_finite(mean)) throw NumericsError("non-finite policy mean");
        Sample s;
        s.action.resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double sd = std::exp(std::clamp(log_std[i], kLogStdMin, kLogStdMax));
            s.action[i] = mean[i] + sd * rng.normal(0.0, 1.0);
        }
        s.log_prob = log_prob(mean, s.action);
        return s;
    }

    double log_prob(std::span<const double> mean,
                    std::span<const double> action) const {
        double lp = 0.0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double ls = std::clamp(log_std[i], kLogStdMin, kLogStdMax);
            const double sd = std::exp(ls);
            const double z = (action[i] - mean[i]) / sd;
            lp += -0.5 * z * z - ls - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        return lp;
    }

    double entropy() const {
        double h = 0.0;
        for (double ls : log_std)
            h += std::clamp(ls, kLogStdMin, kLogStdMax) +
                 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
        return h;
    }

    /// Gradient of [-coef_pg * log pi(a|mean) - coef_ent * H] w.r.t. the mean
    /// (returned) and log_std (accumulated into grad_log_std).
    std::vector<double> loss_grad(std::span<const double> mean,
                                  std::span<const double> action, double coef_pg,
                                  double coef_ent,
                                  std::vector<double>& grad_log_std) const {
        if (grad_log_std.size() != log_std.size())
            grad_log_std.assign(log_std.size(), 0.0);
        std::vector<double> gmean(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double ls = std::clamp(log_std[i], kLogStdMin, kLogStdMax);
            const double sd = std::exp(ls);
            const double z = (action[i] - mean[i]) / sd;
            gmean[i] = -coef_pg * (z / sd);
            // d log pi / d log_std = z^2 - 1 ; d H / d log_std = 1
            grad_log_std[i] += -coef_pg * (z * z - 1.0) - coef_ent * 1.0;
        }
        return gmean;
    }
};

}  // namespace ccm
