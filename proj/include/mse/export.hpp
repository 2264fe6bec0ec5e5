// SAG serialization: structured JSON, Graphviz DOT with rendered node
// images, and a self-contained HTML viewer.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mse/imaging.hpp"
#include "mse/sag.hpp"

namespace mse {

/// Node and edge arrays are sorted by id; ids are the decimal value of the
/// patch bit vector.
nlohmann::json to_json(const SagGraph& graph);
SagGraph graph_from_json(const nlohmann::json& doc);

void export_json(const SagGraph& graph, const std::filesystem::path& path);
SagGraph read_graph_json(const std::filesystem::path& path);

/// Display rendering of a node: pixels outside the set are black whatever
/// the scoring perturbation was.
Image render_node(const Image& image, const PatchSet& set);

/// Writes <out_dir>/sag.dot and one node_<id>.png per node. Returns the
/// path of the DOT file.
std::filesystem::path export_dot(const SagGraph& graph, const Image& image,
                                 const std::filesystem::path& out_dir);
std::string to_dot(const SagGraph& graph);

/// Ids highlighted when a node is clicked: the node, every ancestor and
/// every descendant.
std::map<NodeId, std::vector<NodeId>> highlight_sets(const SagGraph& graph);

void export_html(const SagGraph& graph, const Image& image, const std::filesystem::path& path);
std::string to_html(const SagGraph& graph, const Image& image);

}  // namespace mse
