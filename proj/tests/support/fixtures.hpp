// Shared test fixtures: random textured images, random synthetic DNF
// instances and brute-force oracles that never touch the search code.

#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "mse/classifier.hpp"
#include "mse/imaging.hpp"

namespace doctest {
template <>
struct StringMaker<mse::PatchSet> {
    static String convert(const mse::PatchSet& s) { return s.to_string().c_str(); }
};
template <>
struct StringMaker<std::vector<mse::PatchSet>> {
    static String convert(const std::vector<mse::PatchSet>& v) {
        std::string out = "[";
        for (const auto& s : v) out += s.to_string() + " ";
        return (out + "]").c_str();
    }
};
}  // namespace doctest

namespace mse::testing {

inline Image textured_image(int height, int width, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.2f, 1.0f);
    Image img(height, width, 3);
    for (float& v : img.data) v = u(rng);
    return img;
}

inline Image constant_image(int height, int width, float value) {
    return Image(height, width, 3, value);
}

/// `count` pairwise disjoint terms with sizes drawn from [min_size, max_size].
inline std::vector<PatchSet> random_disjoint_terms(std::mt19937_64& rng, int r, int count, int min_size,
                                                   int max_size) {
    std::vector<int> patches(r * r);
    std::iota(patches.begin(), patches.end(), 0);
    std::shuffle(patches.begin(), patches.end(), rng);
    std::uniform_int_distribution<int> size_dist(min_size, max_size);
    std::vector<PatchSet> terms;
    std::size_t next = 0;
    for (int t = 0; t < count; ++t) {
        PatchSet s(r);
        const int size = size_dist(rng);
        for (int i = 0; i < size; ++i) s = s.with(patches[next++]);
        terms.push_back(s);
    }
    return terms;
}

struct DnfInstance {
    Image image;
    std::vector<PatchSet> terms;
    std::shared_ptr<SyntheticMonotoneDnf> classifier;
};

inline DnfInstance make_instance(Image image, int r, std::vector<PatchSet> terms) {
    DnfInstance inst{std::move(image), std::move(terms), nullptr};
    inst.classifier = std::make_shared<SyntheticMonotoneDnf>(inst.image, r, inst.terms);
    return inst;
}

/// Random instance: 1-3 disjoint terms of size 1-4 on a textured image.
inline DnfInstance random_instance(std::mt19937_64& rng, int r, int image_size) {
    std::uniform_int_distribution<int> count(1, 3);
    auto terms = random_disjoint_terms(rng, r, count(rng), 1, 4);
    return make_instance(textured_image(image_size, image_size, rng), r, std::move(terms));
}

/// Calls f on every subset of {0..n-1} with exactly k elements.
template <class F>
void for_each_subset(int n, int k, F&& f) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    if (k > n) return;
    while (true) {
        f(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) --i;
        if (i < 0) return;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

/// Every minimal sufficient set of size <= max_size, by exhaustive
/// enumeration over the classifier's symbolic score (no pixels involved).
inline std::vector<PatchSet> exhaustive_minimal_sets(const SyntheticMonotoneDnf& clf, int r, double p_high,
                                                     int max_size) {
    const double threshold = p_high * clf.score_of(PatchSet::full(r));
    std::vector<PatchSet> out;
    for (int k = 1; k <= max_size; ++k) {
        for_each_subset(r * r, k, [&](const std::vector<int>& idx) {
            const PatchSet s = PatchSet::of(r, idx);
            if (clf.score_of(s) < threshold) return;
            for (int p : idx)
                if (clf.score_of(s.without(p)) >= threshold) return;
            out.push_back(s);
        });
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mse::testing
