#include "mse/export.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mse/base64.hpp"
#include "mse/image_io.hpp"

namespace mse {

using nlohmann::json;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string percent(double confidence) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", confidence * 100.0);
    return buf;
}

}  // namespace

json to_json(const SagGraph& g) {
    json nodes = json::array();
    for (const auto& [id, n] : g.nodes) {
        nodes.push_back({{"id", id},
                         {"patches", n.set.indices()},
                         {"confidence", n.confidence},
                         {"is_root", n.is_root},
                         {"expanded", n.expanded}});
    }
    json edges = json::array();
    for (const auto& [parent, out] : g.edges) {
        for (const auto& e : out) {
            edges.push_back({{"parent", parent},
                             {"child", e.child},
                             {"removed_patch", e.removed_patch},
                             {"drop", node_importance(g, parent, e.child)}});
        }
    }
    return {{"r", g.r},
            {"base_confidence", g.base_confidence},
            {"class_index", g.class_index},
            {"mode", g.mode.to_string()},
            {"p_low", g.p_low},
            {"roots", g.roots},
            {"nodes", std::move(nodes)},
            {"edges", std::move(edges)}};
}

SagGraph graph_from_json(const json& doc) {
    try {
        SagGraph g;
        g.r = doc.at("r").get<int>();
        g.base_confidence = doc.at("base_confidence").get<double>();
        g.class_index = doc.at("class_index").get<int>();
        g.mode = PerturbationMode::parse(doc.at("mode").get<std::string>());
        g.p_low = doc.at("p_low").get<double>();
        for (const auto& n : doc.at("nodes")) {
            const auto id = n.at("id").get<NodeId>();
            const auto patches = n.at("patches").get<std::vector<int>>();
            SagNode node{PatchSet::of(g.r, patches), n.at("confidence").get<double>(),
                         n.at("expanded").get<bool>(), n.at("is_root").get<bool>()};
            if (node.set.bits() != id) throw std::invalid_argument("node id does not match its patches");
            if (!g.nodes.emplace(id, node).second) throw std::invalid_argument("duplicate node id");
        }
        for (const auto& e : doc.at("edges"))
            g.edges[e.at("parent").get<NodeId>()].push_back(
                {e.at("child").get<NodeId>(), e.at("removed_patch").get<int>()});
        for (auto& [_, out] : g.edges)
            std::sort(out.begin(), out.end(), [](const SagEdge& a, const SagEdge& b) { return a.child < b.child; });
        if (doc.contains("roots")) {
            g.roots = doc.at("roots").get<std::vector<NodeId>>();
        } else {
            for (const auto& [id, n] : g.nodes)
                if (n.is_root) g.roots.push_back(id);
        }
        return g;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed SAG document: ") + e.what());
    }
}

void export_json(const SagGraph& graph, const std::filesystem::path& path) {
    write_text(path, to_json(graph).dump(2) + "\n");
}

SagGraph read_graph_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return graph_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

Image render_node(const Image& image, const PatchSet& set) {
    return perturb(image, set, PerturbationMode::black());
}

// ---------------------------------------------------------------------------
// DOT
// ---------------------------------------------------------------------------

std::string to_dot(const SagGraph& g) {
    std::ostringstream os;
    os << "digraph sag {\n"
       << "  rankdir=TB;\n"
       << "  node [shape=box, labelloc=b, imagescale=true];\n";
    for (const auto& [id, n] : g.nodes) {
        os << "  n" << id << " [label=\"" << percent(n.confidence) << "\", image=\"node_" << id
           << ".png\"";
        if (n.is_root) os << ", penwidth=2";
        os << "];\n";
    }
    os << "  { rank=min;";
    for (NodeId r : g.roots) os << " n" << r << ";";
    os << " }\n";
    for (const auto& [parent, out] : g.edges)
        for (const auto& e : out)
            os << "  n" << parent << " -> n" << e.child << " [label=\"-" << e.removed_patch << "\"];\n";
    os << "}\n";
    return os.str();
}

std::filesystem::path export_dot(const SagGraph& g, const Image& image, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [id, n] : g.nodes)
        write_png(out_dir / ("node_" + std::to_string(id) + ".png"), render_node(image, n.set));
    const auto path = out_dir / "sag.dot";
    write_text(path, to_dot(g));
    return path;
}

// ---------------------------------------------------------------------------
// HTML
// ---------------------------------------------------------------------------

std::map<NodeId, std::vector<NodeId>> highlight_sets(const SagGraph& g) {
    std::map<NodeId, std::vector<NodeId>> down, up;
    for (const auto& [parent, out] : g.edges)
        for (const auto& e : out) {
            down[parent].push_back(e.child);
            up[e.child].push_back(parent);
        }
    auto reach = [](NodeId start, std::map<NodeId, std::vector<NodeId>>& adj, std::set<NodeId>& seen) {
        std::deque<NodeId> queue{start};
        while (!queue.empty()) {
            const NodeId cur = queue.front();
            queue.pop_front();
            for (NodeId next : adj[cur])
                if (seen.insert(next).second) queue.push_back(next);
        }
    };
    std::map<NodeId, std::vector<NodeId>> out;
    for (const auto& [id, _] : g.nodes) {
        std::set<NodeId> seen{id};
        reach(id, down, seen);
        reach(id, up, seen);
        out[id] = {seen.begin(), seen.end()};
    }
    return out;
}

namespace {

constexpr const char* kHtmlHead = R"(<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>Structured attention graph</title>
<style>
body { font-family: sans-serif; margin: 16px; background: #fafafa; }
#graph { position: relative; }
#edges { position: absolute; left: 0; top: 0; pointer-events: none; }
.level { display: flex; justify-content: center; gap: 18px; margin: 0 0 48px 0; position: relative; z-index: 1; }
.node { border: 2px solid #999; background: #fff; padding: 4px; text-align: center; cursor: pointer; }
.node img { display: block; width: 112px; height: 112px; image-rendering: auto; }
.node.root { border-color: #1f5fbf; border-width: 3px; }
.node.dim { opacity: 0.25; }
.node.hl { border-color: #d9480f; }
.conf { font-size: 13px; margin-top: 3px; }
line { stroke: #888; stroke-width: 1.5; }
line.dim { stroke-opacity: 0.15; }
line.hl { stroke: #d9480f; stroke-width: 2.5; }
</style>
</head>
<body>
)";

constexpr const char* kHtmlScript = R"(<script>
(function () {
  const data = JSON.parse(document.getElementById('sag-data').textContent);
  const graph = document.getElementById('graph');
  const svg = document.getElementById('edges');
  function draw() {
    const box = graph.getBoundingClientRect();
    svg.setAttribute('width', box.width);
    svg.setAttribute('height', box.height);
    let lines = '';
    for (const e of data.edges) {
      const a = document.getElementById('n' + e.parent).getBoundingClientRect();
      const b = document.getElementById('n' + e.child).getBoundingClientRect();
      lines += '<line data-p="' + e.parent + '" data-c="' + e.child + '" x1="' +
        (a.left + a.width / 2 - box.left) + '" y1="' + (a.bottom - box.top) + '" x2="' +
        (b.left + b.width / 2 - box.left) + '" y2="' + (b.top - box.top) + '"></line>';
    }
    svg.innerHTML = lines;
  }
  function clear() {
    for (const el of document.querySelectorAll('.dim, .hl')) el.classList.remove('dim', 'hl');
  }
  function highlight(id) {
    clear();
    const on = new Set(data.highlight[id]);
    for (const el of document.querySelectorAll('.node'))
      el.classList.add(on.has(el.dataset.id) ? 'hl' : 'dim');
    for (const el of svg.querySelectorAll('line'))
      el.classList.add(on.has(el.dataset.p) && on.has(el.dataset.c) ? 'hl' : 'dim');
  }
  for (const el of document.querySelectorAll('.node'))
    el.addEventListener('click', function (ev) { ev.stopPropagation(); highlight(el.dataset.id); });
  document.body.addEventListener('click', clear);
  window.addEventListener('resize', draw);
  draw();
})();
</script>
</body>
</html>
)";

}  // namespace

std::string to_html(const SagGraph& g, const Image& image) {
    // Node ids go to the page as strings: they can exceed 2^53.
    json data;
    data["edges"] = json::array();
    for (const auto& [parent, out] : g.edges)
        for (const auto& e : out)
            data["edges"].push_back({{"parent", std::to_string(parent)}, {"child", std::to_string(e.child)}});
    json hl = json::object();
    for (const auto& [id, ids] : highlight_sets(g)) {
        json arr = json::array();
        for (NodeId x : ids) arr.push_back(std::to_string(x));
        hl[std::to_string(id)] = std::move(arr);
    }
    data["highlight"] = std::move(hl);

    std::map<int, std::vector<NodeId>, std::greater<>> levels;
    for (const auto& [id, n] : g.nodes) levels[n.set.size()].push_back(id);

    std::ostringstream os;
    os << kHtmlHead;
    os << "<p>Class " << g.class_index << ", full-image confidence " << percent(g.base_confidence)
       << ". Click a node to highlight its ancestors and descendants.</p>\n";
    os << "<div id=\"graph\">\n<svg id=\"edges\"></svg>\n";
    for (const auto& [size, ids] : levels) {
        os << "<div class=\"level\" data-size=\"" << size << "\">\n";
        for (NodeId id : ids) {
            const auto& n = g.nodes.at(id);
            os << "<div class=\"node" << (n.is_root ? " root" : "") << "\" id=\"n" << id << "\" data-id=\"" << id
               << "\" title=\"patches " << n.set.to_string() << "\">"
               << "<img alt=\"" << n.set.to_string() << "\" src=\"data:image/png;base64,"
               << base64_encode(encode_png(render_node(image, n.set))) << "\">"
               << "<div class=\"conf\">" << percent(n.confidence) << "</div></div>\n";
        }
        os << "</div>\n";
    }
    os << "</div>\n";
    os << "<script type=\"application/json\" id=\"sag-data\">" << data.dump() << "</script>\n";
    os << kHtmlScript;
    return os.str();
}

void export_html(const SagGraph& graph, const Image& image, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_text(path, to_html(graph, image));
}

}  // namespace mse
