#pragma once

#include <algorithm>
#include <iostream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/graph.hpp"

namespace ccm {

/// One minimum vertex cut: removing `nodes` disconnects every path from the
/// modifiable boundary to the target boundary.
struct CutSet {
    std::vector<int> nodes;  // sorted node ids
    std::size_t size() const { return nodes.size(); }
    bool operator==(const CutSet& o) const { return nodes == o.nodes; }
    bool operator<(const CutSet& o) const { return nodes < o.nodes; }
};

/// The high-level action space: all minimum vertex cuts in canonical
/// (lexicographic) order.
struct CutSetCatalog {
    std::vector<CutSet> cuts;
    bool truncated = false;  // enumeration hit the cap

    std::string canonical() const {
        std::ostringstream ss;
        for (const auto& c : cuts) {
            for (std::size_t i = 0; i < c.nodes.size(); ++i)
                ss << (i ? "," : "") << c.nodes[i];
            ss << ";";
        }
        return ss.str();
    }
};

/// Per-cut statistics fed to the high-level policy.
struct CutFeatures {
    int is_controllable = 0;  // cut intersects the controllable region
    int distance = 0;         // shortest hops from the cut to any target
    int size = 0;             // number of vertices in the cut
    std::vector<double> extras;  // degree sums, normalized by node count
};

/// A surgered subgraph: nodes retained after severing the boundary edges,
/// acting as a sub-environment with its own boundaries.
struct CcmView {
    std::vector<int> retained;                     // sorted node ids
    std::vector<std::pair<int, int>> severed;      // removed edges
    std::vector<int> local_modifiable;             // entry boundary
    std::vector<int> local_target;                 // exit boundary

    bool contains(int id) const {
        return std::binary_search(retained.begin(), retained.end(), id);
    }
};

struct SurgeryResult {
    CcmView downstream;  // entry = cut, exit = targets
    CcmView upstream;    // entry = sources, exit = cut
};

namespace detail {

/// Plain directed graph view used by cut computations.
struct Digraph {
    std::size_t n = 0;
    std::vector<std::vector<std::size_t>> adj;
    std::vector<std::vector<std::size_t>> radj;

    void init(std::size_t nodes) {
        n = nodes;
        adj.assign(n, {});
        radj.assign(n, {});
    }
    void add_edge(std::size_t u, std::size_t v) {
        adj[u].push_back(v);
        radj[v].push_back(u);
    }
};

inline std::vector<char> reach(const std::vector<std::vector<std::size_t>>& adj,
                               const std::vector<std::size_t>& from,
                               const std::vector<char>* blocked = nullptr) {
    std::vector<char> seen(adj.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t s : from) {
        if (blocked && (*blocked)[s]) continue;
        if (!seen[s]) { seen[s] = 1; stack.push_back(s); }
    }
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t v : adj[u]) {
            if (blocked && (*blocked)[v]) continue;
            if (!seen[v]) { seen[v] = 1; stack.push_back(v); }
        }
    }
    return seen;
}

/// Max-flow on a unit/infinite capacity network (BFS augmentation).
struct FlowNet {
    struct Arc {
        std::size_t to;
        long long cap;
        std::size_t rev;
    };
    std::vector<std::vector<Arc>> arcs;

    void init(std::size_t n) { arcs.assign(n, {}); }
    void add(std::size_t u, std::size_t v, long long cap) {
        arcs[u].push_back({v, cap, arcs[v].size()});
        arcs[v].push_back({u, 0, arcs[u].size() - 1});
    }

    /// Returns max flow, stopping early once flow exceeds `limit`.
    long long max_flow(std::size_t s, std::size_t t, long long limit) {
        long long flow = 0;
        while (flow <= limit) {
            std::vector<std::pair<std::size_t, std::size_t>> pred(
                arcs.size(), {SIZE_MAX, SIZE_MAX});
            std::queue<std::size_t> q;
            q.push(s);
            pred[s] = {s, SIZE_MAX};
            while (!q.empty() && pred[t].first == SIZE_MAX) {
                const std::size_t u = q.front();
                q.pop();
                for (std::size_t k = 0; k < arcs[u].size(); ++k) {
                    const Arc& a = arcs[u][k];
                    if (a.cap > 0 && pred[a.to].first == SIZE_MAX) {
                        pred[a.to] = {u, k};
                        q.push(a.to);
                    }
                }
            }
            if (pred[t].first == SIZE_MAX) break;
            long long push = std::numeric_limits<long long>::max();
            for (std::size_t v = t; v != s;) {
                auto [u, k] = pred[v];
                push = std::min(push, arcs[u][k].cap);
                v = u;
            }
            for (std::size_t v = t; v != s;) {
                auto [u, k] = pred[v];
                arcs[u][k].cap -= push;
                arcs[arcs[u][k].to][arcs[u][k].rev].cap += push;
                v = u;
            }
            flow += push;
        }
        return flow;
    }

    /// Adjacency of the residual graph (positive-capacity arcs only).
    std::vector<std::vector<std::size_t>> residual_adj() const {
        std::vector<std::vector<std::size_t>> out(arcs.size());
        for (std::size_t u = 0; u < arcs.size(); ++u)
            for (const Arc& a : arcs[u])
                if (a.cap > 0) out[u].push_back(a.to);
        return out;
    }
};

/// Tarjan strongly-connected components; returns component id per node,
/// with components numbered in reverse topological order.
inline std::vector<int> scc(const std::vector<std::vector<std::size_t>>& adj,
                            int& comp_count) {
    const std::size_t n = adj.size();
    std::vector<int> comp(n, -1), low(n, 0), num(n, -1);
    std::vector<std::size_t> stack;
    std::vector<char> on_stack(n, 0);
    int counter = 0;
    comp_count = 0;

    // iterative tarjan
    struct Frame { std::size_t v; std::size_t ei; };
    for (std::size_t root = 0; root < n; ++root) {
        if (num[root] != -1) continue;
        std::vector<Frame> call;
        call.push_back({root, 0});
        num[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& [v, ei] = call.back();
            if (ei < adj[v].size()) {
                const std::size_t w = adj[v][ei++];
                if (num[w] == -1) {
                    num[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], num[w]);
                }
            } else {
                if (low[v] == num[v]) {
                    while (true) {
                        const std::size_t w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = comp_count;
                        if (w == v) break;
                    }
                    ++comp_count;
                }
                const std::size_t vv = v;
                call.pop_back();
                if (!call.empty())
                    low[call.back().v] = std::min(low[call.back().v], low[vv]);
            }
        }
    }
    return comp;
}

}  // namespace detail

/// Enumerate all minimum vertex cuts between `sources` and `sinks` over an
/// arbitrary node universe. `candidate` marks nodes allowed in a cut.
/// Node-splitting reduction: candidates get a unit-capacity internal edge,
/// everything else is uncuttable (infinite). All minimum cuts are recovered
/// by enumerating closed sets of the residual graph, capped at `max_cuts`.
inline CutSetCatalog enumerate_min_cuts_impl(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
    const std::vector<char>& candidate, const std::vector<std::size_t>& sources,
    const std::vector<std::size_t>& sinks, const std::vector<int>& ids,
    std::size_t max_cuts = 64) {
    CutSetCatalog catalog;
    if (sources.empty() || sinks.empty())
        throw NoPathError("cut query needs nonempty boundaries");

    // reachability precheck
    std::vector<std::vector<std::size_t>> adj(n);
    for (auto [u, v] : edges) adj[u].push_back(v);
    auto seen = detail::reach(adj, sources);
    bool any = false;
    for (std::size_t t : sinks) any |= seen[t] != 0;
    if (!any) throw NoPathError("no path from modifiable to target boundary");

    const long long INF = static_cast<long long>(n) + 2;
    const std::size_t S = 2 * n, T = 2 * n + 1;
    detail::FlowNet net;
    net.init(2 * n + 2);
    // v_in = 2v, v_out = 2v+1
    for (std::size_t v = 0; v < n; ++v)
        net.add(2 * v, 2 * v + 1, candidate[v] ? 1 : INF);
    for (auto [u, v] : edges) net.add(2 * u + 1, 2 * v, INF);
    for (std::size_t s : sources) net.add(S, 2 * s, INF);
    for (std::size_t t : sinks) net.add(2 * t + 1, T, INF);

    const long long flow = net.max_flow(S, T, INF);
    if (flow >= INF) {
        // some source->sink route avoids every candidate: nothing to cut
        return catalog;
    }

    // Residual closure enumeration: a closed set W (no residual arc leaving
    // W) containing S and excluding T is the source side of one minimum cut.
    auto radj = net.residual_adj();
    int comp_count = 0;
    auto comp = detail::scc(radj, comp_count);
    std::vector<std::vector<int>> comp_succ(comp_count);
    for (std::size_t u = 0; u < radj.size(); ++u)
        for (std::size_t v : radj[u])
            if (comp[u] != comp[v]) comp_succ[comp[u]].push_back(comp[v]);
    for (auto& v : comp_succ) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    const int cS = comp[S], cT = comp[T];

    auto closure_of = [&](std::vector<char>& in, int c) {
        std::vector<int> stack{c};
        if (!in[c]) in[c] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : comp_succ[u])
                if (!in[v]) { in[v] = 1; stack.push_back(v); }
        }
    };

    std::vector<char> base(comp_count, 0);
    closure_of(base, cS);
    if (base[cT]) throw CcmError("internal: sink residual-reachable after max flow");

    // components that may be added to a closure (cannot residual-reach T)
    std::vector<char> reaches_t(comp_count, 0);
    {
        // reverse the component DAG and walk back from cT
        std::vector<std::vector<int>> rsucc(comp_count);
        for (int u = 0; u < comp_count; ++u)
            for (int v : comp_succ[u]) rsucc[v].push_back(u);
        std::vector<int> stack{cT};
        reaches_t[cT] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : rsucc[u])
                if (!reaches_t[v]) { reaches_t[v] = 1; stack.push_back(v); }
        }
    }
    std::vector<int> addable;
    for (int c = 0; c < comp_count; ++c)
        if (!base[c] && !reaches_t[c]) addable.push_back(c);

    std::set<std::vector<int>> found_cuts;
    std::set<std::vector<char>> visited;
    bool truncated = false;

    auto cut_of = [&](const std::vector<char>& in) {
        std::vector<int> cut;
        for (std::size_t v = 0; v < n; ++v)
            if (candidate[v] && in[comp[2 * v]] && !in[comp[2 * v + 1]])
                cut.push_back(ids[v]);
        std::sort(cut.begin(), cut.end());
        return cut;
    };

    // DFS over antichain extensions of the base closure
    std::vector<std::pair<std::vector<char>, std::size_t>> work;
    work.push_back({base, 0});
    while (!work.empty()) {
        auto [in, start] = work.back();
        work.pop_back();
        if (!visited.insert(in).second) continue;
        auto cut = cut_of(in);
        if (cut.size() == static_cast<std::size_t>(flow)) {
            if (found_cuts.size() >= max_cuts && !found_cuts.count(cut)) {
                truncated = true;
                continue;
            }
            found_cuts.insert(std::move(cut));
        }
        for (std::size_t k = start; k < addable.size(); ++k) {
            if (in[addable[k]]) continue;
            auto next = in;
            closure_of(next, addable[k]);
            if (next[cT]) continue;
            work.push_back({std::move(next), k + 1});
        }
    }

    if (truncated)
        std::cerr << "[ccm] warning: minimum-cut enumeration capped at "
                  << max_cuts << " cuts\n";

    for (const auto& c : found_cuts) catalog.cuts.push_back(CutSet{c});
    std::sort(catalog.cuts.begin(), catalog.cuts.end());
    catalog.truncated = truncated;
    return catalog;
}

/// All minimum vertex cuts between the graph's modifiable and target
/// boundaries. Boundary nodes and any modifiable/target node are excluded
/// from cut membership: they must survive in both surgered views.
inline CutSetCatalog enumerate_min_cuts(const CausalGraphDynamic& g,
                                        const std::vector<int>& sources,
                                        const std::vector<int>& sinks,
                                        std::size_t max_cuts = 64) {
    const std::size_t n = g.size();
    std::vector<char> candidate(n, 1);
    std::vector<std::size_t> src, snk;
    for (int id : sources) {
        src.push_back(g.idx(id));
        candidate[g.idx(id)] = 0;
    }
    for (int id : sinks) {
        for (std::size_t s : src)
            if (s == g.idx(id)) throw BoundaryError("node is both source and sink");
        snk.push_back(g.idx(id));
        candidate[g.idx(id)] = 0;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (g.nodes()[i].role != NodeRole::Observed) candidate[i] = 0;

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = g.id_of(i);
        for (std::size_t c : g.children_of(i)) edges.push_back({i, c});
    }
    return enumerate_min_cuts_impl(n, edges, candidate, src, snk, ids, max_cuts);
}

inline CutSetCatalog enumerate_min_cuts(const CausalGraphDynamic& g,
                                        std::size_t max_cuts = 64) {
    return enumerate_min_cuts(g, g.ids_with_role(NodeRole::Modifiable),
                              g.ids_with_role(NodeRole::Target), max_cuts);
}

/// Re-cut inside a surgered view (used to deepen a cascade chain).
inline CutSetCatalog enumerate_min_cuts(const CausalGraphDynamic& g,
                                        const CcmView& view,
                                        std::size_t max_cuts = 64) {
    // local index over retained nodes
    std::vector<int> ids = view.retained;
    std::map<int, std::size_t> local;
    for (std::size_t i = 0; i < ids.size(); ++i) local[ids[i]] = i;
    std::set<std::pair<int, int>> severed(view.severed.begin(), view.severed.end());
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (int id : ids) {
        const std::size_t u = g.idx(id);
        for (std::size_t ci : g.children_of(u)) {
            const int cid = g.id_of(ci);
            if (!local.count(cid)) continue;
            if (severed.count({id, cid})) continue;
            edges.push_back({local[id], local[cid]});
        }
    }
    std::vector<char> candidate(ids.size(), 1);
    std::vector<std::size_t> src, snk;
    for (int id : view.local_modifiable) {
        src.push_back(local.at(id));
        candidate[local.at(id)] = 0;
    }
    for (int id : view.local_target) {
        snk.push_back(local.at(id));
        candidate[local.at(id)] = 0;
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (g.node(ids[i]).role != NodeRole::Observed) candidate[i] = 0;
    return enumerate_min_cuts_impl(ids.size(), edges, candidate, src, snk, ids,
                                   max_cuts);
}

/// Carve the view between an entry and an exit boundary: the entry's
/// in-edges and the exit's out-edges are severed; retained nodes are those
/// on some entry->exit path plus every ancestor their dynamics still need.
inline CcmView make_view(const CausalGraphDynamic& g, std::vector<int> entry,
                         std::vector<int> exit) {
    std::sort(entry.begin(), entry.end());
    std::sort(exit.begin(), exit.end());
    const std::size_t n = g.size();
    std::vector<char> entry_mask(n, 0), exit_mask(n, 0);
    for (int id : entry) entry_mask[g.idx(id)] = 1;
    for (int id : exit) exit_mask[g.idx(id)] = 1;

    CcmView view;
    for (int id : entry)
        for (std::size_t p : g.parents_of(g.idx(id)))
            view.severed.push_back({g.id_of(p), id});
    for (int id : exit)
        for (std::size_t c : g.children_of(g.idx(id)))
            if (!entry_mask[c])  // keep shared boundary edges in degenerate views
                view.severed.push_back({id, g.id_of(c)});
    std::set<std::pair<int, int>> severed(view.severed.begin(), view.severed.end());

    auto allowed = [&](std::size_t u, std::size_t v) {
        return !severed.count({g.id_of(u), g.id_of(v)});
    };

    // forward closure from the entry
    std::vector<char> fwd(n, 0);
    {
        std::vector<std::size_t> stack;
        for (int id : entry) { fwd[g.idx(id)] = 1; stack.push_back(g.idx(id)); }
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t c : g.children_of(u))
                if (!fwd[c] && allowed(u, c)) { fwd[c] = 1; stack.push_back(c); }
        }
    }
    // backward closure from the exit
    std::vector<char> bwd(n, 0);
    {
        std::vector<std::size_t> stack;
        for (int id : exit) { bwd[g.idx(id)] = 1; stack.push_back(g.idx(id)); }
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t p : g.parents_of(u))
                if (!bwd[p] && allowed(p, u)) { bwd[p] = 1; stack.push_back(p); }
        }
    }

    std::vector<char> keep(n, 0);
    for (std::size_t v = 0; v < n; ++v) keep[v] = fwd[v] && bwd[v];
    for (int id : entry) keep[g.idx(id)] = 1;
    for (int id : exit) keep[g.idx(id)] = 1;

    // ancestors needed for dynamics, never through severed edges
    bool grew = true;
    while (grew) {
        grew = false;
        for (std::size_t v = 0; v < n; ++v) {
            if (!keep[v] || entry_mask[v]) continue;
            for (std::size_t p : g.parents_of(v)) {
                if (!keep[p] && allowed(p, v)) {
                    keep[p] = 1;
                    grew = true;
                }
            }
        }
    }

    for (std::size_t v = 0; v < n; ++v)
        if (keep[v]) view.retained.push_back(g.id_of(v));
    view.local_modifiable = std::move(entry);
    view.local_target = std::move(exit);
    return view;
}

/// Split the system at `cut`. The downstream view keeps everything between
/// the cut (in-edges severed, so it becomes the local modifiable boundary)
/// and the global targets; the upstream view keeps everything between the
/// declared boundary and the cut (out-edges severed: local target boundary).
inline SurgeryResult surgery(const CausalGraphDynamic& g, const CutSet& cut,
                             const std::vector<int>& upstream_boundary) {
    for (int id : cut.nodes)
        for (int b : upstream_boundary)
            if (id == b) throw BoundaryError("cut intersects the upstream boundary");
    SurgeryResult out;
    out.downstream = make_view(g, cut.nodes, g.ids_with_role(NodeRole::Target));
    out.upstream = make_view(g, upstream_boundary, cut.nodes);
    return out;
}

/// High-level state: one feature block per catalog entry.
/// `controllable_region` is the node set already commanded by the active
/// view (empty before the first cut of an episode).
inline std::vector<CutFeatures> features(const CausalGraphDynamic& g,
                                         const CutSetCatalog& catalog,
                                         const std::vector<int>& controllable_region) {
    std::vector<char> region(g.size(), 0);
    for (int id : controllable_region) region[g.idx(id)] = 1;

    const auto targets = g.ids_with_role(NodeRole::Target);
    std::vector<char> is_target(g.size(), 0);
    for (int t : targets) is_target[g.idx(t)] = 1;

    // multi-source BFS from the targets over reversed edges gives, for every
    // node, its forward hop count to the nearest target
    std::vector<int> dist(g.size(), std::numeric_limits<int>::max());
    std::queue<std::size_t> q;
    for (int t : targets) {
        dist[g.idx(t)] = 0;
        q.push(g.idx(t));
    }
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (std::size_t p : g.parents_of(u)) {
            if (dist[p] > dist[u] + 1) {
                dist[p] = dist[u] + 1;
                q.push(p);
            }
        }
    }

    const double nn = static_cast<double>(g.size());
    std::vector<CutFeatures> out;
    out.reserve(catalog.cuts.size());
    for (const auto& cut : catalog.cuts) {
        CutFeatures f;
        f.size = static_cast<int>(cut.size());
        int best = std::numeric_limits<int>::max();
        double indeg = 0.0, outdeg = 0.0;
        for (int id : cut.nodes) {
            const std::size_t i = g.idx(id);
            if (region[i]) f.is_controllable = 1;
            best = std::min(best, is_target[i] ? 0 : dist[i]);
            indeg += static_cast<double>(g.parents_of(i).size());
            outdeg += static_cast<double>(g.children_of(i).size());
        }
        f.distance = best == std::numeric_limits<int>::max() ? static_cast<int>(nn)
                                                             : best;
        f.extras = {indeg / nn, outdeg / nn};
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace ccm
