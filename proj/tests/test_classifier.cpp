#include <cstring>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "mse/classifier.hpp"
#include "support/fakes.hpp"
#include "support/fixtures.hpp"

using namespace mse;
using mse::testing::FunctionClassifier;

namespace {

bool same_bits(const Scores& a, const Scores& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("argmax and target_class") {
    CHECK(argmax({0.2, 0.2}) == 0);
    CHECK(argmax({0.1, 0.3, 0.3}) == 1);
    CHECK_THROWS_AS(argmax({}), std::invalid_argument);

    const FunctionClassifier tie(2, [](const Image&) { return Scores{0.2, 0.2}; });
    CHECK(target_class(tie, testing::constant_image(14, 14, 0.5f)) == 0);

    std::mt19937_64 rng(1);
    auto inst = testing::make_instance(testing::textured_image(56, 56, rng), 7, {PatchSet::of(7, {3, 7})});
    CHECK(target_class(*inst.classifier, inst.image) == 0);
    CHECK(inst.classifier->classify(inst.image)[0] == 0.95);
}

TEST_CASE("set_confidence on the synthetic DNF") {
    std::mt19937_64 rng(2);
    auto inst = testing::make_instance(testing::textured_image(224, 224, rng), 7, {PatchSet::of(7, {3, 7})});
    EvalCache cache(*inst.classifier, inst.image, 7);
    const auto black = PerturbationMode::black();
    CHECK(set_confidence(cache, PatchSet::of(7, {3, 7}), 0, black) == 0.95);
    CHECK(set_confidence(cache, PatchSet::of(7, {3}), 0, black) == 0.05);
    CHECK(set_confidence(cache, PatchSet::full(7), 0, black) == inst.classifier->classify(inst.image)[0]);
    CHECK(set_confidence(cache, PatchSet::of(7, {3}), 1, black) == doctest::Approx(0.95));
    CHECK_THROWS_AS(set_confidence(cache, PatchSet::of(7, {3}), 2, black), std::invalid_argument);
    CHECK_THROWS_AS(set_confidence(cache, PatchSet::of(6, {3}), 0, black), std::invalid_argument);
}

TEST_CASE("synthetic presence reads back the kept patches") {
    std::mt19937_64 rng(3);
    for (int size : {28, 224}) {
        auto inst = testing::make_instance(testing::textured_image(size, size, rng), 7, {PatchSet::of(7, {0})});
        const PatchGrid grid(7, size, size);
        std::bernoulli_distribution coin(0.2);
        for (int trial = 0; trial < 10; ++trial) {
            PatchSet s(7);
            for (int p = 0; p < 49; ++p)
                if (coin(rng)) s = s.with(p);
            const auto present = inst.classifier->present_patches(perturb(inst.image, grid, s, PerturbationMode::black()));
            CHECK(s.is_subset_of(present));
        }
        // An isolated patch is read as present and its neighbours are not.
        const auto one = inst.classifier->present_patches(
            perturb(inst.image, grid, PatchSet::of(7, {24}), PerturbationMode::black()));
        CHECK(one == PatchSet::of(7, {24}));
    }
}

TEST_CASE("synthetic DNF is monotone under set inclusion") {
    std::mt19937_64 rng(4);
    std::bernoulli_distribution coin(0.5);
    for (int inst_no = 0; inst_no < 10; ++inst_no) {
        auto inst = testing::random_instance(rng, 7, 28);
        EvalCache cache(*inst.classifier, inst.image, 7);
        for (int trial = 0; trial < 30; ++trial) {
            PatchSet small(7), big(7);
            for (int p = 0; p < 49; ++p) {
                if (coin(rng)) {
                    big = big.with(p);
                    if (coin(rng)) small = small.with(p);
                }
            }
            REQUIRE(set_confidence(cache, small, 0, PerturbationMode::black()) <=
                    set_confidence(cache, big, 0, PerturbationMode::black()));
        }
    }
}

TEST_CASE("eval cache evaluates each key once") {
    std::mt19937_64 rng(5);
    auto inst = testing::random_instance(rng, 7, 28);
    EvalCache cache(*inst.classifier, inst.image, 7);
    std::uniform_int_distribution<int> patch(0, 48);
    std::set<std::pair<std::uint64_t, std::string>> keys;
    for (int i = 0; i < 300; ++i) {
        PatchSet s = PatchSet::of(7, {patch(rng)});
        if (i % 3) s = s.with(patch(rng));
        const auto mode = i % 5 == 0 ? PerturbationMode::blur(3.0) : PerturbationMode::black();
        keys.emplace(s.bits(), mode.to_string());
        const Scores first = cache.scores(s, mode);
        CHECK(same_bits(first, cache.scores(s, mode)));
    }
    CHECK(cache.classifier_calls() == keys.size());
    CHECK(cache.distinct_keys() == keys.size());
    CHECK(cache.misses() == keys.size());
    CHECK(cache.hits() + cache.misses() == 600);
}

TEST_CASE("eval cache is single-flight under concurrency") {
    std::mt19937_64 rng(6);
    const Image img = testing::textured_image(28, 28, rng);
    const FunctionClassifier slow(2, [](const Image& im) {
        std::this_thread::sleep_for(std::chrono::microseconds(200));
        double s = 0;
        for (float v : im.data) s += v;
        s /= static_cast<double>(im.data.size());
        return Scores{s, 1 - s};
    });
    EvalCache cache(slow, img, 7);
    std::vector<PatchSet> sets;
    for (int p = 0; p < 49; ++p) sets.push_back(PatchSet::of(7, {p}));
    std::vector<std::jthread> threads;
    std::vector<std::vector<Scores>> results(6);
    for (int t = 0; t < 6; ++t)
        threads.emplace_back([&, t] {
            for (int round = 0; round < 3; ++round) {
                std::vector<PatchSet> order = sets;
                std::rotate(order.begin(), order.begin() + (t * 7) % 49, order.end());
                auto ptrs = cache.scores_batch(order, PerturbationMode::black());
                if (round == 0)
                    for (auto* p : ptrs) results[t].push_back(*p);
            }
        });
    threads.clear();
    CHECK(cache.classifier_calls() == 49);
    CHECK(slow.images_seen == 49);
    CHECK(cache.distinct_keys() == 49);
    // Every thread saw the same bits for every key.
    for (int t = 0; t < 6; ++t) REQUIRE(results[t].size() == 49);
    for (int p = 0; p < 49; ++p) {
        const Scores& ref = cache.scores(sets[p], PerturbationMode::black());
        for (int t = 0; t < 6; ++t) {
            const int pos = (p - (t * 7) % 49 + 49) % 49;
            CHECK(same_bits(results[t][pos], ref));
        }
    }
}

TEST_CASE("eval cache propagates classifier failures and recovers") {
    std::mt19937_64 rng(7);
    const Image img = testing::textured_image(28, 28, rng);
    int failures_left = 1;
    const FunctionClassifier flaky(2, [&](const Image&) {
        if (failures_left > 0) {
            --failures_left;
            throw std::runtime_error("boom");
        }
        return Scores{0.5, 0.5};
    });
    EvalCache cache(flaky, img, 7);
    CHECK_THROWS_AS(cache.scores(PatchSet::of(7, {1}), PerturbationMode::black()), std::runtime_error);
    CHECK(cache.scores(PatchSet::of(7, {1}), PerturbationMode::black()) == Scores{0.5, 0.5});

    const FunctionClassifier bad(2, [](const Image&) { return Scores{1.5, 0.0}; });
    EvalCache bad_cache(bad, img, 7);
    CHECK_THROWS(bad_cache.scores(PatchSet::of(7, {1}), PerturbationMode::black()));
}

TEST_CASE("evaluation is deterministic across caches") {
    std::mt19937_64 rng(8);
    auto inst = testing::random_instance(rng, 7, 28);
    EvalCache a(*inst.classifier, inst.image, 7), b(*inst.classifier, inst.image, 7);
    for (int p = 0; p < 49; ++p) {
        const auto s = PatchSet::of(7, {p, (p * 5) % 49});
        CHECK(same_bits(a.scores(s, PerturbationMode::blur(10.0)), b.scores(s, PerturbationMode::blur(10.0))));
    }
}
