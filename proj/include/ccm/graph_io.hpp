#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ccm/errors.hpp"
#include "ccm/graph.hpp"

namespace ccm {

using json = nlohmann::json;

// Graph file schema (see docs/formats.md): {"nodes":[...], "edges":[[p,c],...]}.
// Per-parent vectors (weights, hill terms) align with the node's parents
// sorted by id.

inline json equation_to_json(const StructuralEquation& eq) {
    json j;
    switch (eq.kind) {
        case StructuralEquation::Kind::LinearGaussian:
            j["type"] = "linear_gaussian";
            j["weights"] = eq.linear.weights;
            j["noise_sd"] = eq.linear.noise_sd;
            break;
        case StructuralEquation::Kind::HillDelay: {
            j["type"] = "hill_delay";
            j["noise_sd"] = eq.hill.noise_sd;
            json terms = json::array();
            for (const auto& t : eq.hill.terms) {
                terms.push_back({{"sign", t.sign == HillSign::Activation
                                              ? "activation"
                                              : "repression"},
                                 {"gain", t.gain},
                                 {"threshold", t.threshold},
                                 {"exponent", t.exponent},
                                 {"delay", t.delay}});
            }
            j["terms"] = std::move(terms);
            break;
        }
        case StructuralEquation::Kind::OdeRate:
            j["type"] = "ode_rate";
            j["name"] = eq.ode.name;
            j["params"] = eq.ode.params;
            j["step"] = eq.ode.step;
            break;
    }
    return j;
}

inline StructuralEquation equation_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "linear_gaussian") {
        return StructuralEquation::linear_gaussian(
            j.at("weights").get<std::vector<double>>(),
            j.at("noise_sd").get<double>());
    }
    if (type == "hill_delay") {
        std::vector<HillTerm> terms;
        for (const auto& tj : j.at("terms")) {
            HillTerm t;
            const std::string sign = tj.at("sign").get<std::string>();
            if (sign == "activation") t.sign = HillSign::Activation;
            else if (sign == "repression") t.sign = HillSign::Repression;
            else throw ConfigError("unknown hill sign: " + sign);
            t.gain = tj.at("gain").get<double>();
            t.threshold = tj.at("threshold").get<double>();
            t.exponent = tj.at("exponent").get<double>();
            t.delay = tj.at("delay").get<int>();
            terms.push_back(t);
        }
        return StructuralEquation::hill_delay(std::move(terms),
                                              j.at("noise_sd").get<double>());
    }
    if (type == "ode_rate") {
        return StructuralEquation::ode_rate(j.at("name").get<std::string>(),
                                            j.at("params").get<std::vector<double>>(),
                                            j.at("step").get<double>());
    }
    throw ConfigError("unknown equation type: " + type);
}

inline json node_to_json(const NodeSpec& s) {
    json j;
    j["id"] = s.id;
    j["role"] = to_string(s.role);
    j["init"] = s.init_value;
    j["equation"] = equation_to_json(s.equation);
    if (s.range) j["range"] = {s.range->first, s.range->second};
    return j;
}

inline NodeSpec node_from_json(const json& j) {
    NodeSpec s;
    s.id = j.at("id").get<int>();
    s.role = node_role_from_string(j.at("role").get<std::string>());
    s.init_value = j.at("init").get<double>();
    s.equation = equation_from_json(j.at("equation"));
    if (j.contains("range")) {
        auto r = j.at("range").get<std::vector<double>>();
        if (r.size() != 2 || !(r[0] < r[1]))
            throw ConfigError("node range must be [lo, hi] with lo < hi");
        s.range = {r[0], r[1]};
    }
    return s;
}

struct GraphSpec {
    std::vector<NodeSpec> nodes;
    std::vector<std::pair<int, int>> edges;

    CausalGraphDynamic instantiate(std::uint64_t seed = 0) const {
        return build_graph(nodes, edges, seed);
    }
};

inline json graph_to_json(const GraphSpec& g) {
    json j;
    j["nodes"] = json::array();
    for (const auto& n : g.nodes) j["nodes"].push_back(node_to_json(n));
    j["edges"] = json::array();
    for (const auto& [p, c] : g.edges) j["edges"].push_back({p, c});
    return j;
}

inline GraphSpec graph_from_json(const json& j) {
    GraphSpec g;
    for (const auto& nj : j.at("nodes")) g.nodes.push_back(node_from_json(nj));
    for (const auto& ej : j.at("edges")) {
        if (!ej.is_array() || ej.size() != 2)
            throw ConfigError("edges must be [parent, child] pairs");
        g.edges.emplace_back(ej[0].get<int>(), ej[1].get<int>());
    }
    return g;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << text;
}

inline GraphSpec load_graph_file(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad graph file: ") + e.what());
    }
    return graph_from_json(j);
}

inline void save_graph_file(const GraphSpec& g, const std::string& path) {
    write_text_file(path, graph_to_json(g).dump(2) + "\n");
}

}  // namespace ccm
