#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/goal.hpp"
#include "ccm/graph.hpp"
#include "ccm/graph_io.hpp"
#include "ccm/rng.hpp"

namespace ccm {

/// Scheduled carbohydrate impulses added to one node's state.
struct MealSchedule {
    int node_id = 0;
    std::vector<int> times;     // nominal step indices
    int jitter = 0;             // uniform +- jitter steps, redrawn per episode
    std::vector<double> carbs;  // impulse size per meal
};

/// A parameter vector for the integrated physiological model, tagged with
/// the cohort group it belongs to.
struct IndividualParams {
    std::vector<double> values;
    std::string group = "adult";  // adolescent | adult | child
    int id = 0;

    std::string label() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%03d", id);
        return group + buf;
    }
};

/// One runnable experiment setting: a frozen graph, the goal box over the
/// target nodes, the noise regime and episode length.
struct Scenario {
    std::string name;
    GraphSpec graph;
    GoalBox goal;  // aligned with target node ids, sorted
    NoiseRegime noise;
    int episode_len = 100;
    std::optional<MealSchedule> meals;
    std::optional<IndividualParams> individual;
    std::uint64_t fixture_digest = 0;

    std::vector<int> target_ids() const {
        std::vector<int> out;
        for (const auto& n : graph.nodes)
            if (n.role == NodeRole::Target) out.push_back(n.id);
        std::sort(out.begin(), out.end());
        return out;
    }
    std::vector<int> modifiable_ids() const {
        std::vector<int> out;
        for (const auto& n : graph.nodes)
            if (n.role == NodeRole::Modifiable) out.push_back(n.id);
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["episode_len"] = s.episode_len;
    j["goal"] = {{"center", s.goal.center}, {"epsilon", s.goal.half_width}};
    j["noise"] = {{"kind", s.noise.kind == NoiseKind::None ? "none" : "random_large"},
                  {"trigger_prob", s.noise.trigger_prob},
                  {"magnitude_factor", s.noise.magnitude_factor}};
    j["graph"] = graph_to_json(s.graph);
    if (s.meals) {
        j["meals"] = {{"node", s.meals->node_id},
                      {"times", s.meals->times},
                      {"jitter", s.meals->jitter},
                      {"carbs", s.meals->carbs}};
    }
    if (s.individual) {
        j["individual"] = {{"group", s.individual->group},
                           {"id", s.individual->id},
                           {"values", s.individual->values}};
    }
    return j;
}

inline Scenario scenario_from_json(const json& j) {
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.episode_len = j.at("episode_len").get<int>();
    if (s.episode_len < 1) throw ConfigError("episode_len must be positive");
    s.graph = graph_from_json(j.at("graph"));

    const auto& gj = j.at("goal");
    auto center = gj.at("center").get<std::vector<double>>();
    std::vector<double> eps;
    if (gj.at("epsilon").is_array())
        eps = gj.at("epsilon").get<std::vector<double>>();
    else
        eps.assign(center.size(), gj.at("epsilon").get<double>());
    s.goal = GoalBox(std::move(center), std::move(eps));

    const auto& nj = j.at("noise");
    const std::string kind = nj.at("kind").get<std::string>();
    if (kind == "none") s.noise.kind = NoiseKind::None;
    else if (kind == "random_large") s.noise.kind = NoiseKind::RandomLarge;
    else throw ConfigError("unknown noise kind: " + kind);
    s.noise.trigger_prob = nj.at("trigger_prob").get<double>();
    s.noise.magnitude_factor = nj.at("magnitude_factor").get<double>();
    s.noise.validate();

    if (j.contains("meals")) {
        MealSchedule m;
        m.node_id = j["meals"].at("node").get<int>();
        m.times = j["meals"].at("times").get<std::vector<int>>();
        m.jitter = j["meals"].at("jitter").get<int>();
        m.carbs = j["meals"].at("carbs").get<std::vector<double>>();
        if (m.times.size() != m.carbs.size())
            throw ConfigError("meal times/carbs length mismatch");
        s.meals = std::move(m);
    }
    if (j.contains("individual")) {
        IndividualParams ind;
        ind.group = j["individual"].at("group").get<std::string>();
        ind.id = j["individual"].at("id").get<int>();
        ind.values = j["individual"].at("values").get<std::vector<double>>();
        s.individual = std::move(ind);
    }

    const auto targets = s.target_ids();
    if (targets.empty()) throw ConfigError("scenario has no target nodes");
    if (targets.size() != s.goal.dim())
        throw ConfigError("goal dimension does not match target count");
    return s;
}

// ---------------------------------------------------------------------------
// fixture loading

inline std::string fixture_dir() {
    if (const char* env = std::getenv("CCM_FIXTURES")) return env;
#ifdef CCM_DEFAULT_FIXTURE_DIR
    return CCM_DEFAULT_FIXTURE_DIR;
#else
    return "fixtures";
#endif
}

inline std::string digest_hex(std::uint64_t d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
    return buf;
}

/// Load a scenario fixture and verify it against the digest manifest.
/// Topologies are frozen: a mismatch is an error, not a warning.
inline Scenario load_scenario(const std::string& scenario_name,
                              const std::string& dir = fixture_dir()) {
    const std::string path = dir + "/" + scenario_name + ".json";
    const std::string text = read_text_file(path);
    const std::uint64_t digest = fnv1a64(text);

    const std::string manifest_path = dir + "/MANIFEST.json";
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad fixture manifest: ") + e.what());
    }
    const std::string key = scenario_name + ".json";
    if (!manifest.contains(key))
        throw ConfigError("fixture not listed in manifest: " + key);
    const std::string expected = manifest.at(key).get<std::string>();
    if (expected != digest_hex(digest))
        throw ConfigError("fixture digest mismatch for " + key + " (have " +
                          digest_hex(digest) + ", manifest says " + expected + ")");

    Scenario s;
    try {
        s = scenario_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad fixture file: ") + e.what());
    }
    s.fixture_digest = digest;
    return s;
}

// ---------------------------------------------------------------------------
// the four scenario families

inline Scenario build_env1(const std::string& dir = fixture_dir()) {
    return load_scenario("env1", dir);
}
inline Scenario build_env2(const std::string& dir = fixture_dir()) {
    return load_scenario("env2", dir);
}
inline Scenario build_env3(const std::string& dir = fixture_dir()) {
    return load_scenario("env3", dir);
}

/// Flattened rate-parameter vector of every integrated node, node-id order.
inline std::vector<double> ode_param_vector(const GraphSpec& g) {
    std::vector<double> out;
    for (const auto& n : g.nodes)
        if (n.equation.kind == StructuralEquation::Kind::OdeRate)
            out.insert(out.end(), n.equation.ode.params.begin(),
                       n.equation.ode.params.end());
    return out;
}

inline void set_ode_param_vector(GraphSpec& g, std::span<const double> values) {
    std::size_t k = 0;
    for (auto& n : g.nodes) {
        if (n.equation.kind != StructuralEquation::Kind::OdeRate) continue;
        for (auto& p : n.equation.ode.params) {
            if (k >= values.size()) throw ParamError("parameter vector too short");
            p = values[k++];
        }
    }
    if (k != values.size()) throw ParamError("parameter vector too long");
}

/// The physiological scenario for one individual: the fixture's base graph
/// with the individual's rate parameters substituted in.
inline Scenario build_glucose(const IndividualParams& individual,
                              const std::string& dir = fixture_dir()) {
    Scenario s = load_scenario("glucose", dir);
    for (double v : individual.values)
        if (!(v > 0.0)) throw ParamError("glucose rate parameters must be positive");
    set_ode_param_vector(s.graph, individual.values);
    s.individual = individual;
    return s;
}

inline IndividualParams glucose_base_individual(const std::string& dir = fixture_dir()) {
    Scenario s = load_scenario("glucose", dir);
    IndividualParams ind;
    ind.values = ode_param_vector(s.graph);
    ind.group = "adult";
    ind.id = 4;
    return ind;
}

/// Per-group multiplicative spread (log-uniform half-range). The child group
/// is deliberately the farthest from the base adult.
inline double cohort_group_range(const std::string& group) {
    if (group == "adult") return 0.10;
    if (group == "adolescent") return 0.25;
    if (group == "child") return 0.45;
    throw ConfigError("unknown cohort group: " + group);
}

/// Draw a cohort of perturbed individuals around a base parameter vector.
/// Three equally sized groups; every multiplier stays within +-50% of base.
/// `range_scale` shrinks or stretches every group's spread (0 reproduces the
/// base exactly).
inline std::vector<IndividualParams> make_cohort(const IndividualParams& base,
                                                 int count, Rng& rng,
                                                 double range_scale = 1.0) {
    if (count < 1) throw ParamError("cohort count must be >= 1");
    static const char* kGroups[3] = {"adolescent", "adult", "child"};
    std::vector<IndividualParams> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int gi = std::min(i * 3 / count, 2);
        IndividualParams ind;
        ind.group = kGroups[gi];
        ind.id = i - gi * (count / 3) + 1;
        const double r = cohort_group_range(ind.group) * range_scale;
        ind.values = base.values;
        for (double& v : ind.values) {
            const double span = std::log(1.0 + r);
            double m = std::exp(rng.uniform(-span, span));
            m = std::clamp(m, 0.5, 1.5);
            v *= m;
        }
        out.push_back(std::move(ind));
    }
    return out;
}

/// Fraction of a trace inside [lo, hi].
inline double tir(std::span<const double> trace, double lo = 70.0,
                  double hi = 180.0) {
    if (trace.empty()) throw ParamError("tir of an empty trace");
    std::size_t in = 0;
    for (double g : trace)
        if (g >= lo && g <= hi) ++in;
    return static_cast<double>(in) / static_cast<double>(trace.size());
}

/// Strip all stochasticity from a scenario (for determinism checks).
inline Scenario zero_noise(Scenario s) {
    s.noise.kind = NoiseKind::None;
    for (auto& n : s.graph.nodes) {
        if (n.equation.kind == StructuralEquation::Kind::LinearGaussian)
            n.equation.linear.noise_sd = 0.0;
        if (n.equation.kind == StructuralEquation::Kind::HillDelay)
            n.equation.hill.noise_sd = 0.0;
    }
    if (s.meals) s.meals->jitter = 0;
    return s;
}

// ---------------------------------------------------------------------------

/// A scenario instantiated for one episode stream: owns the graph, applies
/// meals and the noise regime, and counts steps.
class Environment {
public:
    explicit Environment(Scenario scenario, std::uint64_t seed = 0)
        : scenario_(std::move(scenario)) {
        graph_ = scenario_.graph.instantiate(seed);
        reset(seed);
    }

    const Scenario& scenario() const { return scenario_; }
    CausalGraphDynamic& graph() { return graph_; }
    const CausalGraphDynamic& graph() const { return graph_; }
    int t() const { return t_; }
    bool episode_done() const { return t_ >= scenario_.episode_len; }

    void reset(std::uint64_t seed) {
        graph_.reset(seed);
        env_rng_ = Rng::substream(seed, 0x3a7fULL);
        t_ = 0;
        meal_steps_.clear();
        if (scenario_.meals) {
            const auto& m = *scenario_.meals;
            for (std::size_t i = 0; i < m.times.size(); ++i) {
                int jitter = 0;
                if (m.jitter > 0)
                    jitter = static_cast<int>(
                                 env_rng_.uniform_int(2 * m.jitter + 1)) -
                             m.jitter;
                meal_steps_.push_back(m.times[i] + jitter);
            }
        }
    }

    /// Advance one step under the given one-shot interventions; meals and
    /// the noise regime are applied after the structural update.
    const std::vector<double>& step(const Interventions& interventions = {}) {
        graph_.step(interventions);
        ++t_;
        if (scenario_.meals) {
            const auto& m = *scenario_.meals;
            for (std::size_t i = 0; i < meal_steps_.size(); ++i) {
                if (meal_steps_[i] == t_) {
                    const std::size_t q = graph_.idx(m.node_id);
                    graph_.set_value(m.node_id, graph_.state()[q] + m.carbs[i]);
                }
            }
        }
        graph_.inject_noise(scenario_.noise);
        return graph_.state();
    }

    std::vector<double> target_values() const {
        std::vector<double> out;
        for (int id : scenario_.target_ids()) out.push_back(graph_.value(id));
        return out;
    }

private:
    Scenario scenario_;
    CausalGraphDynamic graph_;
    Rng env_rng_;
    int t_ = 0;
    std::vector<int> meal_steps_;
};

}  // namespace ccm
