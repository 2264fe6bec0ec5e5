#include <cstring>
#include <random>
#include <set>

#include "doctest.h"
#include "mse/diversity.hpp"
#include "mse/sag.hpp"
#include "support/fakes.hpp"
#include "support/fixtures.hpp"

using namespace mse;

namespace {

DiverseSelection roots_of(std::initializer_list<PatchSet> sets, double conf = 0.95) {
    DiverseSelection sel;
    for (const auto& s : sets) sel.chosen.push_back({s, conf, conf, true});
    return sel;
}

}  // namespace

TEST_CASE("single pair root with weak children") {
    std::mt19937_64 rng(41);
    auto inst = testing::make_instance(testing::textured_image(28, 28, rng), 7, {PatchSet::of(7, {3, 7})});
    EvalCache cache(*inst.classifier, inst.image, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    const auto g = build_sag(roots_of({PatchSet::of(7, {3, 7})}), ctx, 0.4);
    CHECK(g.nodes.size() == 3);
    CHECK(g.edge_count() == 2);
    CHECK(g.roots == std::vector<NodeId>{PatchSet::of(7, {3, 7}).bits()});
    CHECK(g.node(PatchSet::of(7, {3, 7}).bits()).expanded);
    for (int p : {3, 7}) {
        const auto& child = g.node(PatchSet::of(7, {p}).bits());
        CHECK_FALSE(child.expanded);
        CHECK(child.confidence == 0.05);
    }
    CHECK(structural_violations(g).empty());
}

TEST_CASE("shared children are merged") {
    std::mt19937_64 rng(42);
    const auto a = PatchSet::of(7, {1, 2, 3}), b = PatchSet::of(7, {2, 3, 4});
    auto inst = testing::make_instance(testing::textured_image(28, 28, rng), 7, {a, b});
    EvalCache cache(*inst.classifier, inst.image, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    const auto g = build_sag(roots_of({a, b}), ctx, 0.4);
    const NodeId shared = PatchSet::of(7, {2, 3}).bits();
    CHECK(g.nodes.count(shared) == 1);
    auto parents = g.parents_of(shared);
    std::sort(parents.begin(), parents.end());
    CHECK(parents == std::vector<NodeId>{a.bits(), b.bits()});
    CHECK(g.nodes.size() == 7);
    CHECK(g.edge_count() == 6);
}

TEST_CASE("a size-3 term root yields exactly four nodes") {
    std::mt19937_64 rng(43);
    const auto term = PatchSet::of(7, {10, 24, 38});
    auto inst = testing::make_instance(testing::textured_image(28, 28, rng), 7, {term});
    // Every proper subset scores p_low, checked directly.
    for (int p : term.indices()) CHECK(inst.classifier->score_of(term.without(p)) == 0.05);
    EvalCache cache(*inst.classifier, inst.image, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    const auto g = build_sag(roots_of({term}), ctx, 0.4);
    CHECK(g.nodes.size() == 4);
    for (const auto& [id, n] : g.nodes)
        if (id != term.bits()) CHECK(n.confidence == doctest::Approx(0.05));
}

TEST_CASE("build_sag rejects bad roots") {
    std::mt19937_64 rng(44);
    auto inst = testing::make_instance(testing::textured_image(28, 28, rng), 7, {PatchSet::of(7, {3, 7})});
    EvalCache cache(*inst.classifier, inst.image, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    CHECK_THROWS_AS(build_sag(DiverseSelection{}, ctx, 0.4), std::invalid_argument);
    CHECK_THROWS_AS(build_sag(roots_of({PatchSet::of(7, {3})}), ctx, 0.4), std::invalid_argument);
}

TEST_CASE("node_importance") {
    SagGraph g;
    g.r = 7;
    g.p_low = 0.4;
    const auto p = PatchSet::of(7, {1, 2}), c = PatchSet::of(7, {1}), d = PatchSet::of(7, {2});
    g.nodes[p.bits()] = {p, 0.93, true, true};
    g.nodes[c.bits()] = {c, 0.10, false, false};
    g.nodes[d.bits()] = {d, 0.93, false, false};
    g.edges[p.bits()] = {{c.bits(), 2}, {d.bits(), 1}};
    g.roots = {p.bits()};
    CHECK(node_importance(g, p.bits(), c.bits()) == doctest::Approx(0.83));
    CHECK(node_importance(g, p.bits(), d.bits()) == 0.0);
    CHECK_THROWS_AS(node_importance(g, c.bits(), p.bits()), std::out_of_range);
    CHECK_THROWS_AS(node_importance(g, p.bits(), 12345), std::out_of_range);
}

TEST_CASE("largest drop identifies the dominant patch") {
    std::mt19937_64 rng(45);
    const Image img = testing::textured_image(28, 28, rng);
    std::vector<double> w(49, 0.0);
    w[8] = 0.6;  // dominant
    w[9] = 0.15;
    w[15] = 0.12;
    w[16] = 0.1;
    testing::GradedClassifier clf(img, 7, w);
    EvalCache cache(clf, img, 7);
    SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
    const auto root = PatchSet::of(7, {8, 9, 15, 16});
    const auto g = build_sag(roots_of({root}), ctx, 0.4);

    const auto& out = g.edges.at(root.bits());
    const auto best = std::max_element(out.begin(), out.end(), [&](const SagEdge& a, const SagEdge& b) {
        return node_importance(g, root.bits(), a.child) < node_importance(g, root.bits(), b.child);
    });
    CHECK(best->removed_patch == 8);

    // Per-patch oracle on a fresh cache.
    EvalCache fresh(clf, img, 7);
    const double full = set_confidence(fresh, root, 0, PerturbationMode::black());
    int oracle = -1;
    double oracle_drop = -1;
    for (int p : root.indices()) {
        const double drop = full - set_confidence(fresh, root.without(p), 0, PerturbationMode::black());
        if (drop > oracle_drop) {
            oracle_drop = drop;
            oracle = p;
        }
    }
    CHECK(oracle == 8);
    CHECK(node_importance(g, root.bits(), root.without(8).bits()) == oracle_drop);
}

TEST_CASE("graded graphs are structurally sound and reproducible") {
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> u(0.0, 0.35);
    for (int trial = 0; trial < 10; ++trial) {
        const Image img = testing::textured_image(28, 28, rng);
        std::vector<double> w(49, 0.0);
        const auto hot = testing::random_disjoint_terms(rng, 7, 1, 6, 6).front();
        for (int p : hot.indices()) w[p] = u(rng) + 0.1;
        testing::GradedClassifier clf(img, 7, w);
        EvalCache cache(clf, img, 7);
        SearchContext ctx(cache, 0, 0.9, PerturbationMode::black());
        if (ctx.confidence(hot) < ctx.threshold()) continue;

        const auto g = build_sag(roots_of({hot}), ctx, 0.4);
        CHECK(structural_violations(g).empty());
        CHECK(g.nodes.size() <= (1u << hot.size()) - 1);
        std::set<NodeId> ids;
        for (const auto& [id, n] : g.nodes) {
            ids.insert(n.set.bits());
            CHECK(n.set.is_subset_of(hot));
            if (n.expanded) CHECK(n.confidence >= 0.4);
        }
        CHECK(ids.size() == g.nodes.size());

        EvalCache fresh(clf, img, 7);
        for (const auto& [id, n] : g.nodes) {
            const double again = set_confidence(fresh, n.set, 0, PerturbationMode::black());
            CHECK(std::memcmp(&again, &n.confidence, sizeof(double)) == 0);
        }
        EvalCache other(clf, img, 7);
        SearchContext ctx2(other, 0, 0.9, PerturbationMode::black());
        CHECK(build_sag(roots_of({hot}), ctx2, 0.4).nodes == g.nodes);
    }
}

TEST_CASE("structural_violations catches defects") {
    SagGraph g;
    g.r = 7;
    g.p_low = 0.4;
    const auto p = PatchSet::of(7, {1, 2}), c = PatchSet::of(7, {1});
    g.nodes[p.bits()] = {p, 0.9, true, true};
    g.nodes[c.bits()] = {c, 0.1, false, false};
    g.roots = {p.bits()};
    g.edges[p.bits()] = {{c.bits(), 2}};
    CHECK_FALSE(structural_violations(g).empty());  // only one of two children

    const auto d = PatchSet::of(7, {2});
    g.nodes[d.bits()] = {d, 0.1, false, false};
    g.edges[p.bits()] = {{c.bits(), 2}, {d.bits(), 1}};
    CHECK(structural_violations(g).empty());

    auto wrong_patch = g;
    wrong_patch.edges[p.bits()][0].removed_patch = 1;
    CHECK_FALSE(structural_violations(wrong_patch).empty());

    auto cycle = g;
    cycle.nodes[c.bits()].expanded = true;
    cycle.nodes[c.bits()].confidence = 0.5;
    cycle.edges[c.bits()] = {{p.bits(), 2}};
    CHECK_FALSE(structural_violations(cycle).empty());

    auto low = g;
    low.nodes[p.bits()].confidence = 0.3;
    CHECK_FALSE(structural_violations(low).empty());
}
