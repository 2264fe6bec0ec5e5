// Structured attention graph (SAG): a DAG of patch sets rooted at diverse
// MSEs. Each edge removes one patch from its parent; nodes whose confidence
// is below P_l are kept as leaves and not expanded.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mse/diversity.hpp"
#include "mse/search.hpp"

namespace mse {

using NodeId = std::uint64_t;  // bit vector of the node's patch set

struct SagNode {
    PatchSet set;
    double confidence = 0.0;
    bool expanded = false;
    bool is_root = false;

    bool operator==(const SagNode&) const = default;
};

struct SagEdge {
    NodeId child = 0;
    int removed_patch = 0;

    bool operator==(const SagEdge&) const = default;
};

struct SagGraph {
    int r = 0;
    int class_index = 0;
    double base_confidence = 0.0;
    double p_low = 0.0;
    PerturbationMode mode;
    std::map<NodeId, SagNode> nodes;
    /// Outgoing edges per parent, ordered by child id.
    std::map<NodeId, std::vector<SagEdge>> edges;
    /// Root ids in selection order.
    std::vector<NodeId> roots;

    const SagNode& node(NodeId id) const;
    std::size_t edge_count() const;
    std::vector<NodeId> parents_of(NodeId id) const;
};

/// Breadth-first expansion (largest sets first) from the chosen roots.
SagGraph build_sag(const DiverseSelection& roots, const SearchContext& ctx, double p_low);

/// Confidence drop along an edge; throws std::out_of_range if the edge
/// does not exist.
double node_importance(const SagGraph& graph, NodeId parent, NodeId child);

/// Human-readable descriptions of every structural defect; empty when the
/// graph is well formed.
std::vector<std::string> structural_violations(const SagGraph& graph);

}  // namespace mse
