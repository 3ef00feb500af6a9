#pragma once

#include <utility>
#include <vector>

#include "ccm/graph.hpp"

namespace ccm::testing {

/// Linear-Gaussian node with one weight per parent (parents sorted by id).
inline NodeSpec lin_node(int id, NodeRole role, std::vector<double> weights,
                         double sd, double init = 0.0) {
    NodeSpec n;
    n.id = id;
    n.role = role;
    n.init_value = init;
    n.equation = StructuralEquation::linear_gaussian(std::move(weights), sd);
    n.range = {{-50.0, 50.0}};
    return n;
}

/// A -> B -> C chain, A modifiable, C target, unit weights, no noise.
inline CausalGraphDynamic chain3(double w1 = 1.0, double w2 = 1.0,
                                 double sd = 0.0) {
    return build_graph({lin_node(0, NodeRole::Modifiable, {}, sd),
                        lin_node(1, NodeRole::Observed, {w1}, sd),
                        lin_node(2, NodeRole::Target, {w2}, sd)},
                       {{0, 1}, {1, 2}});
}

/// A -> B -> C -> D chain, A modifiable, D target.
inline CausalGraphDynamic chain4(double sd = 0.0) {
    return build_graph({lin_node(0, NodeRole::Modifiable, {}, sd),
                        lin_node(1, NodeRole::Observed, {1.0}, sd),
                        lin_node(2, NodeRole::Observed, {1.0}, sd),
                        lin_node(3, NodeRole::Target, {1.0}, sd)},
                       {{0, 1}, {1, 2}, {2, 3}});
}

inline std::vector<std::pair<int, int>> edges_of(const CausalGraphDynamic& g) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t c : g.children_of(i))
            out.push_back({g.id_of(i), g.id_of(c)});
    return out;
}

/// The two-route example: A -> {B, C}, B -> D, C -> E, {D, E} -> F.
/// A modifiable (id 0), F target (id 5); interior ids B=1, C=2, D=3, E=4.
inline CausalGraphDynamic two_route(double sd = 0.0) {
    return build_graph({lin_node(0, NodeRole::Modifiable, {}, sd),
                        lin_node(1, NodeRole::Observed, {1.0}, sd),
                        lin_node(2, NodeRole::Observed, {1.0}, sd),
                        lin_node(3, NodeRole::Observed, {1.0}, sd),
                        lin_node(4, NodeRole::Observed, {1.0}, sd),
                        lin_node(5, NodeRole::Target, {1.0, 1.0}, sd)},
                       {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 5}});
}

}  // namespace ccm::testing
