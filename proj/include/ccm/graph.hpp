#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/rng.hpp"

namespace ccm {

enum class NodeRole { Modifiable, Target, Observed };

inline std::string to_string(NodeRole r) {
    switch (r) {
        case NodeRole::Modifiable: return "modifiable";
        case NodeRole::Target: return "target";
        default: return "observed";
    }
}

inline NodeRole node_role_from_string(const std::string& s) {
    if (s == "modifiable") return NodeRole::Modifiable;
    if (s == "target") return NodeRole::Target;
    if (s == "observed") return NodeRole::Observed;
    throw ConfigError("unknown node role: " + s);
}

enum class HillSign { Activation, Repression };

/// One regulation term of a delayed Hill equation. `delay` counts whole
/// simulation steps back in the parent's history.
struct HillTerm {
    HillSign sign = HillSign::Activation;
    double gain = 1.0;       // saturation level
    double threshold = 1.0;  // half-effect input
    double exponent = 1.0;   // steepness, >= 1
    int delay = 0;           // >= 0 steps
};

/// Saturating regulation response. Activation rises from 0 toward `gain`,
/// repression falls from `gain` toward 0.
inline double eval_hill(double x, HillSign sign, double gain, double threshold,
                        double exponent) {
    if (x < 0.0) throw DomainError("hill input must be nonnegative");
    if (gain <= 0.0 || threshold <= 0.0 || exponent < 1.0)
        throw ParamError("hill parameters out of range");
    const double xn = std::pow(x, exponent);
    const double kn = std::pow(threshold, exponent);
    if (sign == HillSign::Activation) return gain * xn / (kn + xn);
    return gain * kn / (kn + xn);
}

inline double eval_hill(double x, const HillTerm& t) {
    return eval_hill(x, t.sign, t.gain, t.threshold, t.exponent);
}

/// Rate function for an integrated node: f(self, parent values, params) -> d/dt.
using OdeRateFn =
    std::function<double(double, std::span<const double>, std::span<const double>)>;

namespace detail {
inline std::map<std::string, OdeRateFn>& ode_registry() {
    static std::map<std::string, OdeRateFn> reg = [] {
        std::map<std::string, OdeRateFn> r;
        // Built-in rate library for the reduced glucose-insulin system.
        // Parents are passed sorted by node id.
        r["insulin_plasma"] = [](double self, std::span<const double> par,
                                 std::span<const double> p) {
            // params: [clearance, dilution volume]; parent: infusion rate
            const double u = par.empty() ? 0.0 : std::max(0.0, par[0]);
            return -p[0] * self + u / p[1];
        };
        r["insulin_action"] = [](double self, std::span<const double> par,
                                 std::span<const double> p) {
            // params: [decay, activation]; parent: plasma insulin
            const double ins = par.empty() ? 0.0 : std::max(0.0, par[0]);
            return -p[0] * self + p[1] * ins;
        };
        r["gut_glucose"] = [](double self, std::span<const double>,
                              std::span<const double> p) {
            // params: [absorption]; meals arrive as impulses added to the state
            return -p[0] * self;
        };
        r["glucose_plasma"] = [](double self, std::span<const double> par,
                                 std::span<const double> p) {
            // params: [liver rate, liver setpoint, insulin sensitivity, gut gain]
            // parents (by id): remote insulin action, gut glucose
            const double x = par.size() > 0 ? std::max(0.0, par[0]) : 0.0;
            const double q = par.size() > 1 ? std::max(0.0, par[1]) : 0.0;
            return -p[0] * (self - p[1]) - p[2] * x * self + p[3] * q;
        };
        return r;
    }();
    return reg;
}
}  // namespace detail

inline void register_ode_rate(const std::string& name, OdeRateFn fn) {
    detail::ode_registry()[name] = std::move(fn);
}

struct LinearGaussian {
    std::vector<double> weights;  // one per parent, parents sorted by id
    double noise_sd = 0.0;
};

struct HillDelay {
    std::vector<HillTerm> terms;  // one per parent, parents sorted by id
    double noise_sd = 0.0;
};

struct OdeRate {
    std::string name;            // key into the rate registry
    std::vector<double> params;  // rate constants
    double step = 1.0;           // integration substep, fraction of one sim step
};

struct StructuralEquation {
    enum class Kind { LinearGaussian, HillDelay, OdeRate };
    Kind kind = Kind::LinearGaussian;
    LinearGaussian linear;
    HillDelay hill;
    OdeRate ode;

    static StructuralEquation linear_gaussian(std::vector<double> w, double sd) {
        StructuralEquation e;
        e.kind = Kind::LinearGaussian;
        e.linear = {std::move(w), sd};
        return e;
    }
    static StructuralEquation hill_delay(std::vector<HillTerm> terms, double sd) {
        StructuralEquation e;
        e.kind = Kind::HillDelay;
        e.hill = {std::move(terms), sd};
        return e;
    }
    static StructuralEquation ode_rate(std::string name, std::vector<double> p,
                                       double step) {
        StructuralEquation e;
        e.kind = Kind::OdeRate;
        e.ode = {std::move(name), std::move(p), step};
        return e;
    }

    int max_delay() const {
        int d = 0;
        if (kind == Kind::HillDelay)
            for (const auto& t : hill.terms) d = std::max(d, t.delay);
        return d;
    }
};

struct NodeSpec {
    int id = 0;
    NodeRole role = NodeRole::Observed;
    StructuralEquation equation;
    double init_value = 0.0;
    /// Plausible value range: clamp bound for interventions and integrated
    /// states, and the seed of the normalization range trackers.
    std::optional<std::pair<double, double>> range;
};

enum class NoiseKind { None, RandomLarge };

/// External surprise regime: parentless ancestors of the targets are
/// occasionally multiplied by a large factor.
struct NoiseRegime {
    NoiseKind kind = NoiseKind::None;
    double trigger_prob = 0.0;
    double magnitude_factor = 12.0;  // > 10 when kind == RandomLarge

    void validate() const {
        if (kind == NoiseKind::RandomLarge) {
            if (magnitude_factor <= 10.0)
                throw ParamError("random_large magnitude_factor must exceed 10");
            if (trigger_prob < 0.0 || trigger_prob > 1.0)
                throw ParamError("trigger_prob must lie in [0,1]");
        }
    }
};

using Interventions = std::map<int, double>;  // node id -> clamp value

/// A directed acyclic system of structural equations with per-step
/// synchronous updates: every node's next value is computed from the
/// time-t snapshot (lagged where an equation asks for it), so influence
/// propagates exactly one edge per step.
class CausalGraphDynamic {
public:
    CausalGraphDynamic() = default;

    // -- construction (use build_graph) ------------------------------------

    static CausalGraphDynamic build(std::vector<NodeSpec> specs,
                                    const std::vector<std::pair<int, int>>& edges,
                                    std::uint64_t seed = 0) {
        CausalGraphDynamic g;
        g.nodes_ = std::move(specs);
        std::sort(g.nodes_.begin(), g.nodes_.end(),
                  [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
            if (g.index_.count(g.nodes_[i].id))
                throw ConfigError("duplicate node id " + std::to_string(g.nodes_[i].id));
            g.index_[g.nodes_[i].id] = i;
        }
        const std::size_t n = g.nodes_.size();
        g.parents_.assign(n, {});
        g.children_.assign(n, {});
        for (const auto& [p, c] : edges) {
            auto pi = g.index_.find(p);
            auto ci = g.index_.find(c);
            if (pi == g.index_.end() || ci == g.index_.end())
                throw ConfigError("edge references unknown node id");
            g.parents_[ci->second].push_back(pi->second);
            g.children_[pi->second].push_back(ci->second);
        }
        for (auto& v : g.parents_) std::sort(v.begin(), v.end());
        for (auto& v : g.children_) std::sort(v.begin(), v.end());

        g.topo_check();
        g.arity_check();

        bool has_mod = false, has_tgt = false;
        for (const auto& s : g.nodes_) {
            has_mod |= s.role == NodeRole::Modifiable;
            has_tgt |= s.role == NodeRole::Target;
        }
        if (!has_mod || !has_tgt)
            throw ConfigError("graph needs at least one modifiable and one target node");

        g.max_delay_ = 0;
        for (const auto& s : g.nodes_)
            g.max_delay_ = std::max(g.max_delay_, s.equation.max_delay());

        g.seed_ = seed;
        g.reset(seed);
        return g;
    }

    // -- introspection ------------------------------------------------------

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeSpec>& nodes() const { return nodes_; }
    const NodeSpec& node(int id) const { return nodes_[idx(id)]; }
    std::size_t idx(int id) const {
        auto it = index_.find(id);
        if (it == index_.end())
            throw ConfigError("unknown node id " + std::to_string(id));
        return it->second;
    }
    int id_of(std::size_t i) const { return nodes_[i].id; }

    const std::vector<std::size_t>& parents_of(std::size_t i) const { return parents_[i]; }
    const std::vector<std::size_t>& children_of(std::size_t i) const { return children_[i]; }

    std::vector<int> ids_with_role(NodeRole r) const {
        std::vector<int> out;
        for (const auto& s : nodes_)
            if (s.role == r) out.push_back(s.id);
        return out;
    }

    const std::vector<double>& state() const { return state_; }
    double value(int id) const { return state_[idx(id)]; }
    void set_value(int id, double v) { state_[idx(id)] = v; }

    const Interventions& active_interventions() const { return clamps_; }
    int max_delay() const { return max_delay_; }

    /// Parent value as seen by an equation with delay tau at the current time.
    double lagged(std::size_t i, int tau) const {
        if (tau <= 0) return state_[i];
        const int t = std::min(tau, max_delay_);
        return history_[(head_ + static_cast<std::size_t>(t) - 1) % history_.size()][i];
    }

    // -- dynamics ------------------------------------------------------------

    void reset(std::uint64_t seed) {
        seed_ = seed;
        state_.resize(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) state_[i] = nodes_[i].init_value;
        const std::size_t cap = static_cast<std::size_t>(std::max(1, max_delay_));
        history_.assign(cap, state_);
        head_ = 0;
        clamps_.clear();
        node_rng_.clear();
        node_rng_.reserve(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            node_rng_.push_back(Rng::substream(seed, i));
        noise_rng_ = Rng::substream(seed, 0xA01CEULL);
    }

    /// Clamp a modifiable node: takes effect immediately and persists on
    /// every subsequent step until released. While clamped the node ignores
    /// its own equation (and therefore its parents).
    void apply_do(int id, double value) {
        const auto& s = nodes_[idx(id)];
        if (s.role != NodeRole::Modifiable)
            throw InterventionError("do() on non-modifiable node " + std::to_string(id));
        clamps_[id] = value;
        state_[idx(id)] = value;
    }

    void release_do(int id) { clamps_.erase(id); }

    /// Boundary actuation for surgered views: a cut node acts as the local
    /// modifiable boundary of its view, so the role check does not apply.
    /// Same clamp semantics as apply_do otherwise.
    void clamp_boundary(int id, double value) {
        clamps_[id] = value;
        state_[idx(id)] = value;
    }
    void release_boundary(int id) { clamps_.erase(id); }

    /// Advance one step. `step_interventions` are one-shot clamps for this
    /// step only; persistent clamps from apply_do stay in force.
    const std::vector<double>& step(const Interventions& step_interventions = {}) {
        for (const auto& [id, v] : step_interventions) {
            if (nodes_[idx(id)].role != NodeRole::Modifiable)
                throw InterventionError("intervention on non-modifiable node " +
                                        std::to_string(id));
            (void)v;
        }
        std::vector<double> next(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const int id = nodes_[i].id;
            if (auto it = step_interventions.find(id); it != step_interventions.end()) {
                next[i] = it->second;
                continue;
            }
            if (auto it = clamps_.find(id); it != clamps_.end()) {
                next[i] = it->second;
                continue;
            }
            next[i] = evaluate_node(i);
        }
        // rotate the ring: current state becomes history slot t-1
        if (!history_.empty()) {
            head_ = (head_ + history_.size() - 1) % history_.size();
            history_[head_] = state_;
        }
        state_ = std::move(next);
        return state_;
    }

    /// The value a node's own equation produces right now, ignoring any
    /// clamp. Used to read what a boundary would do if it were not actuated.
    double natural_value(int id) {
        return evaluate_node(idx(id));
    }

    /// Apply the external surprise regime; returns the ids that were hit.
    std::vector<int> inject_noise(const NoiseRegime& regime) {
        std::vector<int> hit;
        if (regime.kind == NoiseKind::None) return hit;
        regime.validate();
        ensure_noise_targets();
        for (std::size_t i : noise_eligible_) {
            if (noise_rng_.uniform(0.0, 1.0) < regime.trigger_prob) {
                const double f = noise_rng_.uniform(regime.magnitude_factor,
                                                    2.0 * regime.magnitude_factor);
                state_[i] *= f;
                hit.push_back(nodes_[i].id);
            }
        }
        return hit;
    }

    /// Parentless, non-modifiable nodes with a directed path to a target.
    std::vector<int> noise_eligible_ids() {
        ensure_noise_targets();
        std::vector<int> out;
        for (std::size_t i : noise_eligible_) out.push_back(nodes_[i].id);
        return out;
    }

    /// Node ids reachable from `from` (inclusive) along directed edges.
    std::vector<int> descendants_of(const std::vector<int>& from) const {
        std::vector<char> seen(nodes_.size(), 0);
        std::vector<std::size_t> stack;
        for (int id : from) {
            const std::size_t i = idx(id);
            if (!seen[i]) { seen[i] = 1; stack.push_back(i); }
        }
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t c : children_[u])
                if (!seen[c]) { seen[c] = 1; stack.push_back(c); }
        }
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (seen[i]) out.push_back(nodes_[i].id);
        return out;
    }

    std::pair<double, double> range_of(std::size_t i) const {
        if (nodes_[i].range) return *nodes_[i].range;
        const double v = nodes_[i].init_value;
        return {v - 1.0, v + 1.0};
    }

private:
    double evaluate_node(std::size_t i) {
        const auto& eq = nodes_[i].equation;
        const auto& par = parents_[i];
        switch (eq.kind) {
            case StructuralEquation::Kind::LinearGaussian: {
                double mu = 0.0;
                for (std::size_t k = 0; k < par.size(); ++k)
                    mu += eq.linear.weights[k] * state_[par[k]];
                if (eq.linear.noise_sd > 0.0)
                    mu += node_rng_[i].normal(0.0, eq.linear.noise_sd);
                return mu;
            }
            case StructuralEquation::Kind::HillDelay: {
                double mu = 0.0;
                for (std::size_t k = 0; k < par.size(); ++k) {
                    const auto& t = eq.hill.terms[k];
                    // concentrations are nonnegative; noise undershoot is cut off
                    const double x = std::max(0.0, lagged(par[k], t.delay));
                    mu += eval_hill(x, t);
                }
                if (eq.hill.noise_sd > 0.0)
                    mu += node_rng_[i].normal(0.0, eq.hill.noise_sd);
                return mu;
            }
            case StructuralEquation::Kind::OdeRate: {
                auto it = detail::ode_registry().find(eq.ode.name);
                if (it == detail::ode_registry().end())
                    throw ConfigError("unknown ode rate function: " + eq.ode.name);
                std::vector<double> pv(par.size());
                for (std::size_t k = 0; k < par.size(); ++k) pv[k] = state_[par[k]];
                const double h = eq.ode.step;
                const int substeps = std::max(1, static_cast<int>(std::lround(1.0 / h)));
                const auto [lo, hi] = range_of(i);
                double x = state_[i];
                for (int s = 0; s < substeps; ++s) {
                    x += h * it->second(x, pv, eq.ode.params);
                    x = std::clamp(x, std::max(0.0, lo), hi);
                }
                return x;
            }
        }
        throw CcmError("unreachable equation kind");
    }

    void topo_check() const {
        std::vector<int> indeg(nodes_.size(), 0);
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            indeg[i] = static_cast<int>(parents_[i].size());
        std::vector<std::size_t> q;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (indeg[i] == 0) q.push_back(i);
        std::size_t seen = 0;
        while (!q.empty()) {
            const std::size_t u = q.back();
            q.pop_back();
            ++seen;
            for (std::size_t c : children_[u])
                if (--indeg[c] == 0) q.push_back(c);
        }
        if (seen != nodes_.size()) throw CycleError("edge relation contains a cycle");
    }

    void arity_check() const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& eq = nodes_[i].equation;
            const std::size_t np = parents_[i].size();
            if (eq.kind == StructuralEquation::Kind::LinearGaussian &&
                eq.linear.weights.size() != np)
                throw ArityError("node " + std::to_string(nodes_[i].id) + " has " +
                                 std::to_string(np) + " parents but " +
                                 std::to_string(eq.linear.weights.size()) + " weights");
            if (eq.kind == StructuralEquation::Kind::HillDelay &&
                eq.hill.terms.size() != np)
                throw ArityError("node " + std::to_string(nodes_[i].id) +
                                 " hill terms do not match parent count");
            if (eq.kind == StructuralEquation::Kind::LinearGaussian &&
                eq.linear.noise_sd < 0.0)
                throw ParamError("negative noise sd");
            if (eq.kind == StructuralEquation::Kind::HillDelay) {
                if (eq.hill.noise_sd < 0.0) throw ParamError("negative noise sd");
                for (const auto& t : eq.hill.terms) {
                    if (t.gain <= 0.0 || t.threshold <= 0.0 || t.exponent < 1.0 ||
                        t.delay < 0)
                        throw ParamError("hill term parameters out of range");
                }
            }
        }
    }

    void ensure_noise_targets() {
        if (noise_cached_) return;
        std::vector<int> targets = ids_with_role(NodeRole::Target);
        // reverse reachability from the targets
        std::vector<char> on_path(nodes_.size(), 0);
        std::vector<std::size_t> stack;
        for (int id : targets) {
            const std::size_t i = idx(id);
            if (!on_path[i]) { on_path[i] = 1; stack.push_back(i); }
        }
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t p : parents_[u])
                if (!on_path[p]) { on_path[p] = 1; stack.push_back(p); }
        }
        noise_eligible_.clear();
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (on_path[i] && parents_[i].empty() &&
                nodes_[i].role != NodeRole::Modifiable)
                noise_eligible_.push_back(i);
        noise_cached_ = true;
    }

    std::vector<NodeSpec> nodes_;
    std::unordered_map<int, std::size_t> index_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<double> state_;
    std::vector<std::vector<double>> history_;  // ring: head_ = slot for t-1
    std::size_t head_ = 0;
    Interventions clamps_;
    int max_delay_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<Rng> node_rng_;
    Rng noise_rng_;
    std::vector<std::size_t> noise_eligible_;
    bool noise_cached_ = false;
};

inline CausalGraphDynamic build_graph(std::vector<NodeSpec> specs,
                                      const std::vector<std::pair<int, int>>& edges,
                                      std::uint64_t seed = 0) {
    return CausalGraphDynamic::build(std::move(specs), edges, seed);
}

}  // namespace ccm
