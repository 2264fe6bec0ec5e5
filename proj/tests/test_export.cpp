#include <cctype>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mse/export.hpp"
#include "mse/image_io.hpp"
#include "support/fakes.hpp"
#include "support/fixtures.hpp"

using namespace mse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    Image image;
    std::unique_ptr<testing::GradedClassifier> clf;
    std::unique_ptr<EvalCache> cache;
    std::unique_ptr<SearchContext> ctx;
    SagGraph graph;
};

/// Two overlapping roots over a graded classifier, so the graph has several
/// levels and shared nodes.
std::unique_ptr<Fixture> graded_fixture(std::uint64_t seed) {
    auto f = std::make_unique<Fixture>();
    std::mt19937_64 rng(seed);
    f->image = testing::textured_image(28, 28, rng);
    std::vector<double> w(49, 0.0);
    for (int p : {8, 9, 10, 16}) w[p] = 0.25;
    w[30] = 0.9;
    f->clf = std::make_unique<testing::GradedClassifier>(f->image, 7, w);
    f->cache = std::make_unique<EvalCache>(*f->clf, f->image, 7);
    f->ctx = std::make_unique<SearchContext>(*f->cache, 0, 0.9, PerturbationMode::black());
    DiverseSelection sel;
    for (const auto& s : {PatchSet::of(7, {8, 9, 10, 16}), PatchSet::of(7, {30})})
        sel.chosen.push_back({s, f->ctx->confidence(s), f->ctx->base_confidence(), true});
    f->graph = build_sag(sel, *f->ctx, 0.4);
    return f;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mse_test_export_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Minimal recursive-descent checker for the DOT language (the subset of
// statements any generator might reasonably emit).
class DotChecker {
public:
    explicit DotChecker(const std::string& text) { tokenize(text); }

    bool parse(std::set<std::string>& declared, std::vector<std::pair<std::string, std::string>>& edges) {
        declared_ = &declared;
        edges_ = &edges;
        try {
            if (peek() == "strict") next();
            const auto kind = next();
            if (kind != "digraph" && kind != "graph") return false;
            if (peek() != "{") next();  // graph id
            stmt_list();
            return pos_ == toks_.size();
        } catch (const std::exception&) {
            return false;
        }
    }

private:
    void tokenize(const std::string& s) {
        std::size_t i = 0;
        while (i < s.size()) {
            const char c = s[i];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++i;
            } else if (c == '"') {
                std::string t = "\"";
                ++i;
                while (i < s.size() && s[i] != '"') {
                    if (s[i] == '\\' && i + 1 < s.size()) t += s[i++];
                    t += s[i++];
                }
                if (i >= s.size()) throw std::runtime_error("unterminated string");
                ++i;
                toks_.push_back(t + "\"");
            } else if (c == '-' && i + 1 < s.size() && (s[i + 1] == '>' || s[i + 1] == '-')) {
                toks_.push_back(s.substr(i, 2));
                i += 2;
            } else if (std::string("{}[];,=").find(c) != std::string::npos) {
                toks_.emplace_back(1, c);
                ++i;
            } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-') {
                std::size_t j = i;
                while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '.' ||
                                        s[j] == '-'))
                    ++j;
                toks_.push_back(s.substr(i, j - i));
                i = j;
            } else {
                throw std::runtime_error(std::string("bad character ") + c);
            }
        }
    }
    const std::string& peek() const {
        static const std::string eof;
        return pos_ < toks_.size() ? toks_[pos_] : eof;
    }
    std::string next() {
        if (pos_ >= toks_.size()) throw std::runtime_error("unexpected end");
        return toks_[pos_++];
    }
    void expect(const std::string& t) {
        if (next() != t) throw std::runtime_error("expected " + t);
    }
    static bool is_id(const std::string& t) {
        return !t.empty() && std::string("{}[];,=").find(t[0]) == std::string::npos && t != "->" && t != "--";
    }
    std::string id() {
        auto t = next();
        if (!is_id(t)) throw std::runtime_error("expected id, got " + t);
        return t;
    }
    void attr_list() {
        while (peek() == "[") {
            next();
            while (peek() != "]") {
                id();
                expect("=");
                id();
                if (peek() == "," || peek() == ";") next();
            }
            expect("]");
        }
    }
    void stmt_list() {
        expect("{");
        while (peek() != "}") {
            stmt();
            if (peek() == ";") next();
        }
        expect("}");
    }
    void stmt() {
        if (peek() == "{" || peek() == "subgraph") {
            if (peek() == "subgraph") {
                next();
                if (peek() != "{") id();
            }
            stmt_list();
            return;
        }
        const auto a = id();
        if (a == "graph" || a == "node" || a == "edge") {
            attr_list();
            return;
        }
        if (peek() == "=") {
            next();
            id();
            return;
        }
        std::string from = a;
        bool edge = false;
        while (peek() == "->") {
            next();
            const auto to = id();
            edges_->emplace_back(from, to);
            from = to;
            edge = true;
        }
        if (!edge) declared_->insert(a);
        attr_list();
    }

    std::vector<std::string> toks_;
    std::size_t pos_ = 0;
    std::set<std::string>* declared_ = nullptr;
    std::vector<std::pair<std::string, std::string>>* edges_ = nullptr;
};

/// Ancestors and descendants by BFS over the exported document alone.
std::map<std::string, std::set<std::string>> reachability_oracle(const json& doc) {
    std::map<std::string, std::vector<std::string>> down, up;
    for (const auto& e : doc["edges"]) {
        const auto p = std::to_string(e["parent"].get<std::uint64_t>());
        const auto c = std::to_string(e["child"].get<std::uint64_t>());
        down[p].push_back(c);
        up[c].push_back(p);
    }
    std::map<std::string, std::set<std::string>> out;
    for (const auto& n : doc["nodes"]) {
        const auto id = std::to_string(n["id"].get<std::uint64_t>());
        std::set<std::string> seen{id};
        for (auto* adj : {&down, &up}) {
            std::deque<std::string> q{id};
            while (!q.empty()) {
                const auto cur = q.front();
                q.pop_front();
                for (const auto& nx : (*adj)[cur])
                    if (seen.insert(nx).second) q.push_back(nx);
            }
        }
        out[id] = seen;
    }
    return out;
}

}  // namespace

TEST_CASE("JSON export of the three-node example") {
    std::mt19937_64 rng(51);
    auto inst = testing::make_instance(testing::textured_image(28, 28, rng), 7, {PatchSet::of(7, {3, 7})});
    EvalCache cache(*inst.classifier, inst.image, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    DiverseSelection sel;
    sel.chosen.push_back({PatchSet::of(7, {3, 7}), 0.95, 0.95, true});
    const auto g = build_sag(sel, ctx, 0.4);
    const json doc = to_json(g);
    CHECK(doc["r"] == 7);
    CHECK(doc["class_index"] == 0);
    CHECK(doc["mode"] == "black");
    CHECK(doc["base_confidence"] == 0.95);
    REQUIRE(doc["nodes"].size() == 3);
    REQUIRE(doc["edges"].size() == 2);
    std::uint64_t prev = 0;
    for (const auto& n : doc["nodes"]) {
        CHECK(n["id"].get<std::uint64_t>() > prev);
        prev = n["id"].get<std::uint64_t>();
        CHECK(PatchSet::of(7, n["patches"].get<std::vector<int>>()).bits() == prev);
    }
    for (const auto& e : doc["edges"])
        CHECK(e["drop"].get<double>() == node_importance(g, e["parent"].get<NodeId>(), e["child"].get<NodeId>()));
    CHECK(doc["nodes"][2]["id"] == PatchSet::of(7, {3, 7}).bits());
    CHECK(doc["nodes"][2]["is_root"] == true);
}

TEST_CASE("JSON round trip") {
    auto f = graded_fixture(52);
    CHECK(f->graph.nodes.size() > 5);
    const auto dir = scratch("json");
    export_json(f->graph, dir / "g.json");
    const auto back = read_graph_json(dir / "g.json");
    CHECK(back.r == f->graph.r);
    CHECK(back.class_index == f->graph.class_index);
    CHECK(back.base_confidence == f->graph.base_confidence);
    CHECK(back.p_low == f->graph.p_low);
    CHECK(back.mode == f->graph.mode);
    CHECK(back.nodes == f->graph.nodes);
    CHECK(back.edges == f->graph.edges);
    CHECK(back.roots == f->graph.roots);
    CHECK(structural_violations(back).empty());
    CHECK(to_json(back).dump() == to_json(f->graph).dump());

    std::ofstream(dir / "bad.json") << "{\"r\": 7}";
    CHECK_THROWS_AS(read_graph_json(dir / "bad.json"), std::invalid_argument);
    std::ofstream(dir / "worse.json") << "{";
    CHECK_THROWS_AS(read_graph_json(dir / "worse.json"), std::invalid_argument);
    CHECK_THROWS(export_json(f->graph, dir / "no" / "such" / "dir" / "g.json"));
}

TEST_CASE("DOT export") {
    auto f = graded_fixture(53);
    const auto dir = scratch("dot");
    const auto path = export_dot(f->graph, f->image, dir);
    CHECK(path == dir / "sag.dot");

    std::set<std::string> declared;
    std::vector<std::pair<std::string, std::string>> edges;
    const std::string text = slurp(path);
    REQUIRE(DotChecker(text).parse(declared, edges));
    CHECK(declared.size() == f->graph.nodes.size());
    CHECK(edges.size() == f->graph.edge_count());
    for (const auto& [a, b] : edges) {
        CHECK(declared.count(a));
        CHECK(declared.count(b));
    }
    CHECK(text.find("rank=min") != std::string::npos);

    for (const auto& [id, n] : f->graph.nodes) {
        const auto png = dir / ("node_" + std::to_string(id) + ".png");
        REQUIRE(fs::exists(png));
        CHECK(text.find("image=\"node_" + std::to_string(id) + ".png\"") != std::string::npos);
        CHECK(to_rgb8(read_image(png)) == to_rgb8(perturb(f->image, n.set, PerturbationMode::black())));
    }
    // Rendering is byte-deterministic.
    const auto again = scratch("dot2");
    export_dot(f->graph, f->image, again);
    for (const auto& entry : fs::directory_iterator(dir))
        CHECK(slurp(entry.path()) == slurp(again / entry.path().filename()));
}

TEST_CASE("node image of the full set is the original") {
    std::mt19937_64 rng(54);
    const Image img = testing::textured_image(28, 28, rng);
    CHECK(to_rgb8(render_node(img, PatchSet::full(7))) == to_rgb8(img));
    CHECK(encode_png(render_node(img, PatchSet::of(7, {4}))) == encode_png(render_node(img, PatchSet::of(7, {4}))));
}

TEST_CASE("HTML export is self-contained and highlights by reachability") {
    auto f = graded_fixture(55);
    const auto dir = scratch("html");
    export_html(f->graph, f->image, dir / "sag.html");
    const std::string html = slurp(dir / "sag.html");
    CHECK(html.find("http://") == std::string::npos);
    CHECK(html.find("https://") == std::string::npos);
    CHECK(html.find("<link") == std::string::npos);
    CHECK(html.find("<script src") == std::string::npos);
    std::size_t images = 0;
    for (std::size_t at = html.find("<img "); at != std::string::npos; at = html.find("<img ", at + 1)) {
        ++images;
        const auto src = html.find("src=\"", at);
        CHECK(html.compare(src + 5, 22, "data:image/png;base64,") == 0);
    }
    CHECK(images == f->graph.nodes.size());

    const std::string open = "<script type=\"application/json\" id=\"sag-data\">";
    const auto begin = html.find(open);
    REQUIRE(begin != std::string::npos);
    const auto end = html.find("</script>", begin);
    const json data = json::parse(html.substr(begin + open.size(), end - begin - open.size()));

    const auto oracle = reachability_oracle(to_json(f->graph));
    REQUIRE(data["highlight"].size() == oracle.size());
    for (const auto& [id, expected] : oracle) {
        const auto got = data["highlight"][id].get<std::vector<std::string>>();
        CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
    }
    // A root highlights its whole subtree.
    for (NodeId root : f->graph.roots) {
        const auto hl = highlight_sets(f->graph).at(root);
        std::deque<NodeId> q{root};
        while (!q.empty()) {
            const NodeId cur = q.front();
            q.pop_front();
            CHECK(std::find(hl.begin(), hl.end(), cur) != hl.end());
            if (auto it = f->graph.edges.find(cur); it != f->graph.edges.end())
                for (const auto& e : it->second) q.push_back(e.child);
        }
    }
}
