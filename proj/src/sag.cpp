#include "mse/sag.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mse {

const SagNode& SagGraph::node(NodeId id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw std::out_of_range("sag: no node " + std::to_string(id));
    return it->second;
}

std::size_t SagGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& [_, out] : edges) n += out.size();
    return n;
}

std::vector<NodeId> SagGraph::parents_of(NodeId id) const {
    std::vector<NodeId> out;
    for (const auto& [parent, out_edges] : edges)
        for (const auto& e : out_edges)
            if (e.child == id) out.push_back(parent);
    return out;
}

SagGraph build_sag(const DiverseSelection& roots, const SearchContext& ctx, double p_low) {
    if (roots.chosen.empty()) throw std::invalid_argument("build_sag: no roots");
    if (!(p_low > 0.0 && p_low < 1.0)) throw std::invalid_argument("build_sag: P_l must be in (0,1)");

    SagGraph g;
    g.r = ctx.cache().r();
    g.class_index = ctx.class_index();
    g.base_confidence = ctx.base_confidence();
    g.p_low = p_low;
    g.mode = ctx.mode();

    auto expandable = [&](const SagNode& n) { return n.confidence >= p_low && n.set.size() >= 2; };

    // Pending nodes grouped by cardinality; processed from the largest.
    std::map<int, std::set<NodeId>, std::greater<>> frontier;
    for (const auto& rec : roots.chosen) {
        if (rec.set.r() != g.r) throw std::invalid_argument("build_sag: root on a different grid");
        if (g.nodes.count(rec.set.bits())) continue;
        const double conf = ctx.confidence(rec.set);
        if (conf < ctx.threshold())
            throw std::invalid_argument("build_sag: root " + rec.set.to_string() + " is not sufficient");
        g.nodes[rec.set.bits()] = SagNode{rec.set, conf, false, true};
        g.roots.push_back(rec.set.bits());
        frontier[rec.set.size()].insert(rec.set.bits());
    }

    while (!frontier.empty()) {
        const auto level = std::move(frontier.begin()->second);
        frontier.erase(frontier.begin());

        std::vector<NodeId> parents;
        std::vector<PatchSet> fresh;
        for (NodeId id : level) {
            SagNode& n = g.nodes.at(id);
            if (!expandable(n)) continue;
            n.expanded = true;
            parents.push_back(id);
            for (int p : n.set.indices()) {
                const PatchSet child = n.set.without(p);
                if (!g.nodes.count(child.bits())) fresh.push_back(child);
            }
        }
        std::sort(fresh.begin(), fresh.end());
        fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
        const auto conf = ctx.confidences(fresh);
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            g.nodes[fresh[i].bits()] = SagNode{fresh[i], conf[i], false, false};
            frontier[fresh[i].size()].insert(fresh[i].bits());
        }
        for (NodeId id : parents) {
            const PatchSet& set = g.nodes.at(id).set;
            auto& out = g.edges[id];
            for (int p : set.indices()) out.push_back({set.without(p).bits(), p});
            std::sort(out.begin(), out.end(), [](const SagEdge& a, const SagEdge& b) { return a.child < b.child; });
        }
    }

    if (auto bad = structural_violations(g); !bad.empty())
        throw std::logic_error("build_sag produced a malformed graph: " + bad.front());
    return g;
}

double node_importance(const SagGraph& graph, NodeId parent, NodeId child) {
    auto it = graph.edges.find(parent);
    if (it != graph.edges.end()) {
        for (const auto& e : it->second)
            if (e.child == child) return graph.node(parent).confidence - graph.node(child).confidence;
    }
    throw std::out_of_range("sag: no edge " + std::to_string(parent) + " -> " + std::to_string(child));
}

std::vector<std::string> structural_violations(const SagGraph& g) {
    std::vector<std::string> bad;
    auto note = [&](const std::string& s) { bad.push_back(s); };

    if (g.roots.empty()) note("graph has no roots");
    std::set<NodeId> root_set(g.roots.begin(), g.roots.end());
    if (root_set.size() != g.roots.size()) note("duplicate root");
    for (NodeId r : g.roots) {
        auto it = g.nodes.find(r);
        if (it == g.nodes.end()) note("root " + std::to_string(r) + " is not a node");
        else if (!it->second.is_root) note("root " + std::to_string(r) + " not flagged as root");
    }

    std::set<NodeId> has_parent;
    for (const auto& [id, n] : g.nodes) {
        if (n.set.r() != g.r) note("node " + std::to_string(id) + " on a different grid");
        if (n.set.bits() != id) note("node key " + std::to_string(id) + " does not match its set");
        if (n.set.empty()) note("empty set materialized");
        if (n.is_root != (root_set.count(id) > 0)) note("root flag mismatch at " + std::to_string(id));
        const bool should_expand = n.confidence >= g.p_low && n.set.size() >= 2;
        if (n.expanded != should_expand) note("expansion flag wrong at " + n.set.to_string());
        auto eit = g.edges.find(id);
        const std::size_t out_degree = eit == g.edges.end() ? 0 : eit->second.size();
        if (n.expanded && out_degree != static_cast<std::size_t>(n.set.size()))
            note("expanded node " + n.set.to_string() + " lacks children");
        if (!n.expanded && out_degree != 0) note("unexpanded node " + n.set.to_string() + " has children");
    }
    for (const auto& [parent, out] : g.edges) {
        auto pit = g.nodes.find(parent);
        if (pit == g.nodes.end()) {
            note("edge from unknown node " + std::to_string(parent));
            continue;
        }
        std::set<NodeId> seen;
        for (const auto& e : out) {
            if (!seen.insert(e.child).second) note("parallel edge from " + std::to_string(parent));
            auto cit = g.nodes.find(e.child);
            if (cit == g.nodes.end()) {
                note("edge to unknown node " + std::to_string(e.child));
                continue;
            }
            const PatchSet& p = pit->second.set;
            if (e.removed_patch < 0 || e.removed_patch >= p.universe() || !p.contains(e.removed_patch) ||
                p.without(e.removed_patch) != cit->second.set)
                note("edge " + p.to_string() + " -> " + cit->second.set.to_string() + " is not a single-patch removal");
            has_parent.insert(e.child);
        }
    }
    for (const auto& [id, n] : g.nodes)
        if (!n.is_root && !has_parent.count(id)) note("orphan node " + n.set.to_string());
    return bad;
}

}  // namespace mse
