#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "ccm/cuts.hpp"
#include "ccm/graph.hpp"
#include "support/helpers.hpp"

namespace ccm::testing {

/// Exhaustive reference for minimum vertex cuts: scan all subsets of the
/// candidate interior nodes in increasing size and keep every smallest
/// subset whose removal disconnects the sources from the sinks. Plain BFS,
/// independent of the max-flow implementation under test.
class CutOracle {
public:
    CutOracle(const CausalGraphDynamic& g, std::vector<int> sources,
              std::vector<int> sinks)
        : g_(g), sources_(std::move(sources)), sinks_(std::move(sinks)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            const int id = g.id_of(i);
            const bool boundary =
                std::find(sources_.begin(), sources_.end(), id) != sources_.end() ||
                std::find(sinks_.begin(), sinks_.end(), id) != sinks_.end();
            if (!boundary && g.nodes()[i].role == NodeRole::Observed)
                candidates_.push_back(id);
        }
    }

    bool disconnects(const std::vector<int>& removed) const {
        std::vector<char> blocked(g_.size(), 0);
        for (int id : removed) blocked[g_.idx(id)] = 1;
        std::vector<char> seen(g_.size(), 0);
        std::vector<std::size_t> stack;
        for (int id : sources_) {
            const std::size_t i = g_.idx(id);
            if (!blocked[i]) { seen[i] = 1; stack.push_back(i); }
        }
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t c : g_.children_of(u)) {
                if (blocked[c] || seen[c]) continue;
                seen[c] = 1;
                stack.push_back(c);
            }
        }
        for (int id : sinks_)
            if (seen[g_.idx(id)]) return false;
        return true;
    }

    bool connected() const { return !disconnects({}); }

    /// All minimum-size disconnecting subsets, sorted. Empty when no subset
    /// of candidates can disconnect (or nothing is connected to begin with).
    std::vector<CutSet> all_min_cuts() const {
        if (!connected()) return {};
        for (std::size_t k = 1; k <= candidates_.size(); ++k) {
            std::vector<CutSet> found;
            std::vector<int> pick(k);
            enumerate_subsets(0, 0, k, pick, found);
            if (!found.empty()) {
                std::sort(found.begin(), found.end());
                return found;
            }
        }
        return {};
    }

private:
    void enumerate_subsets(std::size_t start, std::size_t depth, std::size_t k,
                           std::vector<int>& pick,
                           std::vector<CutSet>& found) const {
        if (depth == k) {
            if (disconnects(pick)) found.push_back(CutSet{pick});
            return;
        }
        for (std::size_t i = start; i + (k - depth) <= candidates_.size(); ++i) {
            pick[depth] = candidates_[i];
            enumerate_subsets(i + 1, depth + 1, k, pick, found);
        }
    }

    const CausalGraphDynamic& g_;
    std::vector<int> sources_, sinks_;
    std::vector<int> candidates_;
};

/// Random DAG corpus entry: forward-edge linear-Gaussian graphs over one
/// modifiable source (id 0), `interior` observed nodes, one target sink.
/// Direct source->sink edges are excluded so an interior cut always exists.
inline CausalGraphDynamic random_dag(Rng& rng, int interior, double sd = 0.0,
                                     std::uint64_t graph_seed = 5) {
    const int source = 0, sink = interior + 1;
    std::set<std::pair<int, int>> edge_set;
    for (int u = 0; u <= interior; ++u) {
        for (int v = u + 1; v <= sink; ++v) {
            if (u == source && v == sink) continue;
            const double p = (v == u + 1) ? 0.55 : 0.25;
            if (rng.uniform(0.0, 1.0) < p) edge_set.insert({u, v});
        }
    }
    // splice a two-hop path through a random interior node if disconnected
    auto reaches_sink = [&] {
        std::vector<char> seen(sink + 1, 0);
        std::vector<int> stack{source};
        seen[source] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (const auto& [a, b] : edge_set)
                if (a == u && !seen[b]) { seen[b] = 1; stack.push_back(b); }
        }
        return seen[sink] != 0;
    };
    if (!reaches_sink()) {
        const int mid = 1 + static_cast<int>(rng.uniform_int(interior));
        edge_set.insert({source, mid});
        edge_set.insert({mid, sink});
    }

    std::vector<int> indeg(sink + 1, 0);
    for (const auto& [u, v] : edge_set) ++indeg[v];
    std::vector<NodeSpec> nodes;
    for (int id = 0; id <= sink; ++id) {
        const NodeRole role = id == source  ? NodeRole::Modifiable
                              : id == sink  ? NodeRole::Target
                                            : NodeRole::Observed;
        std::vector<double> w(indeg[id]);
        for (auto& x : w) x = rng.uniform(-1.0, 1.0);
        nodes.push_back(lin_node(id, role, std::move(w), sd));
    }
    return build_graph(nodes,
                       {edge_set.begin(), edge_set.end()}, graph_seed);
}

}  // namespace ccm::testing
