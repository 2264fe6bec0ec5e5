#include "mse/search.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>

namespace mse {

void SearchConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("search config: " + what); };
    if (r < 1 || r > kMaxGridSide) fail("r out of range");
    if (!(p_low > 0.0 && p_low < p_high && p_high <= 1.0)) fail("need 0 < P_l < P_h <= 1");
    if (!(m > 0 && m <= r * r)) fail("need 0 < m <= r^2");
    if (!(k > 0 && k < m)) fail("need 0 < k < m");
    if (beam_width < 1) fail("beam width must be >= 1");
    if (expansions < 1) fail("expansion count must be >= 1");
    if (max_iterations < 0) fail("max_iterations must be >= 0");
    if (diverse_count < 1) fail("diverse count must be >= 1");
    if (mode.is_blur() && !(mode.sigma > 0.0)) fail("blur sigma must be positive");
}

bool ranks_before(const MseRecord& a, const MseRecord& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.set < b.set;
}

SearchContext::SearchContext(EvalCache& cache, int class_index, double p_high, PerturbationMode mode)
    : cache_(cache), class_index_(class_index), p_high_(p_high), mode_(mode), base_confidence_(0.0) {
    base_confidence_ = confidence(PatchSet::full(cache.r()));
}

double SearchContext::confidence(const PatchSet& set) const {
    return set_confidence(cache_, set, class_index_, mode_);
}

std::vector<double> SearchContext::confidences(std::span<const PatchSet> sets) const {
    const auto scores = cache_.scores_batch(sets, mode_);
    std::vector<double> out;
    out.reserve(scores.size());
    for (const Scores* s : scores) {
        if (class_index_ < 0 || class_index_ >= static_cast<int>(s->size()))
            throw std::invalid_argument("class index out of range");
        out.push_back((*s)[static_cast<std::size_t>(class_index_)]);
    }
    return out;
}

SearchContext make_context(EvalCache& cache, int class_index, const SearchConfig& config) {
    if (cache.r() != config.r) throw std::invalid_argument("search context: cache grid differs from config r");
    return SearchContext(cache, class_index, config.p_high, config.mode);
}

bool is_sufficient(const PatchSet& set, const SearchContext& ctx) {
    return ctx.confidence(set) >= ctx.threshold();
}

MseRecord check_minimal(const PatchSet& set, const SearchContext& ctx) {
    MseRecord rec{set, ctx.confidence(set), ctx.base_confidence(), false};
    if (rec.confidence < ctx.threshold()) return rec;
    if (set.size() <= 1) {
        rec.minimal = !set.empty();
        return rec;
    }
    std::vector<PatchSet> children;
    for (int p : set.indices()) children.push_back(set.without(p));
    const auto conf = ctx.confidences(children);
    rec.minimal = std::all_of(conf.begin(), conf.end(), [&](double c) { return c < ctx.threshold(); });
    return rec;
}

namespace {

void sort_records(std::vector<MseRecord>& records) {
    std::sort(records.begin(), records.end(), ranks_before);
}

// Sufficient candidates become records; the non-minimal ones are logged.
std::vector<MseRecord> finalize(const std::vector<PatchSet>& sufficient, const SearchContext& ctx,
                                SearchStats* stats) {
    std::vector<MseRecord> out;
    for (const auto& s : sufficient) {
        auto rec = check_minimal(s, ctx);
        if (rec.minimal) {
            out.push_back(rec);
        } else if (stats != nullptr) {
            stats->discarded_non_minimal.push_back(s);
        }
    }
    return out;
}

}  // namespace

std::vector<MseRecord> combinatorial_search(const CoarseAttention& attention, const SearchContext& ctx,
                                            const SearchConfig& config, SearchStats* stats) {
    config.validate();
    if (attention.r != config.r || static_cast<int>(attention.values.size()) != config.r * config.r)
        throw std::invalid_argument("combinatorial_search: attention grid differs from config r");
    const std::vector<int> pool = attention.top(config.m);
    const int m = static_cast<int>(pool.size());
    const int k = config.k;

    std::vector<PatchSet> subsets;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        PatchSet s(config.r);
        for (int i : idx) s = s.with(pool[i]);
        subsets.push_back(s);
        int i = k - 1;
        while (i >= 0 && idx[i] == m - k + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }

    const auto conf = ctx.confidences(subsets);
    std::vector<PatchSet> sufficient;
    for (std::size_t i = 0; i < subsets.size(); ++i)
        if (conf[i] >= ctx.threshold()) sufficient.push_back(subsets[i]);
    if (stats != nullptr) stats->candidates_scored += subsets.size();

    auto out = finalize(sufficient, ctx, stats);
    sort_records(out);
    return out;
}

std::vector<MseRecord> beam_search(const CoarseAttention& attention, const SearchContext& ctx,
                                   const SearchConfig& config, SearchStats* stats) {
    config.validate();
    if (attention.r != config.r || static_cast<int>(attention.values.size()) != config.r * config.r)
        throw std::invalid_argument("beam_search: attention grid differs from config r");
    const std::size_t width = static_cast<std::size_t>(config.beam_width);
    const std::vector<int> ranking = attention.ranking();

    struct State {
        PatchSet set;
        double confidence;
        double attention;
    };
    auto attention_of = [&](const PatchSet& s) {
        double sum = 0.0;
        for (int p : s.indices()) sum += attention.values[static_cast<std::size_t>(p)];
        return sum;
    };
    std::vector<MseRecord> finished;
    // Every set seen to be sufficient so far. A proper superset of one of
    // them cannot be minimal.
    std::vector<PatchSet> sufficient_seen;
    auto contains_sufficient = [&](const PatchSet& s) {
        return std::any_of(sufficient_seen.begin(), sufficient_seen.end(),
                           [&](const PatchSet& k) { return k != s && k.is_subset_of(s); });
    };

    // Minimality for a sufficient candidate. The child dropping the least
    // attended patch is tried alone first, since it is the one most likely
    // to stay sufficient; the rest are only scored when it does not.
    const std::size_t calls_at_start = ctx.cache().classifier_calls();
    // The audited bound is w*q*iterations + w + r^2 over the whole cache,
    // with r^2 covering the occlusion map and the unperturbed image. What
    // was spent before entry comes out of the w + r^2 part.
    const std::size_t fixed = static_cast<std::size_t>(config.r) * config.r + width;
    const std::size_t carried = fixed - std::min(fixed, calls_at_start);
    std::size_t budget = 0;  // calls allowed since the start, raised per round
    bool over_budget = false;
    auto affordable = [&](std::size_t n) {
        over_budget = ctx.cache().classifier_calls() - calls_at_start + n > budget;
        return !over_budget;
    };
    auto minimal_record = [&](const PatchSet& s, double conf) -> std::optional<MseRecord> {
        over_budget = false;
        if (contains_sufficient(s)) return std::nullopt;
        MseRecord rec{s, conf, ctx.base_confidence(), true};
        if (s.size() <= 1) return rec;
        std::vector<int> order = s.indices();
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return attention.values[static_cast<std::size_t>(a)] < attention.values[static_cast<std::size_t>(b)];
        });
        std::vector<PatchSet> children;
        for (int p : order) children.push_back(s.without(p));
        if (!affordable(1)) return std::nullopt;
        const auto first = ctx.confidences(std::span(children).first(1));
        std::vector<double> conf_children = first;
        if (first[0] < ctx.threshold()) {
            if (!affordable(children.size() - 1)) return std::nullopt;
            const auto rest = ctx.confidences(std::span(children).subspan(1));
            conf_children.insert(conf_children.end(), rest.begin(), rest.end());
        }
        for (std::size_t i = 0; i < conf_children.size(); ++i) {
            if (conf_children[i] >= ctx.threshold()) {
                sufficient_seen.push_back(children[i]);
                return std::nullopt;
            }
        }
        return rec;
    };

    // Scores candidates, moves the sufficient ones into `finished` (while
    // slots remain) and returns the insufficient ones, best first.
    auto settle = [&](std::vector<PatchSet> candidates) {
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        const auto conf = ctx.confidences(candidates);
        if (stats != nullptr) stats->candidates_scored += candidates.size();

        std::vector<MseRecord> sufficient;
        std::vector<State> rest;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (conf[i] >= ctx.threshold()) {
                sufficient.push_back({candidates[i], conf[i], ctx.base_confidence(), false});
                sufficient_seen.push_back(candidates[i]);
            } else {
                rest.push_back({candidates[i], conf[i], attention_of(candidates[i])});
            }
        }
        // Best first, and only until the free slots are filled: minimality
        // of a candidate that could not be kept is never paid for.
        sort_records(sufficient);
        for (const auto& cand : sufficient) {
            if (finished.size() >= width) break;
            if (auto rec = minimal_record(cand.set, cand.confidence)) {
                finished.push_back(std::move(*rec));
            } else if (stats != nullptr) {
                (over_budget ? stats->unverified_over_budget : stats->discarded_non_minimal).push_back(cand.set);
            }
        }
        // Equal confidence falls back to the attention mass of the set, so a
        // flat classifier response still follows the attention ranking.
        std::sort(rest.begin(), rest.end(), [](const State& a, const State& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            if (a.attention != b.attention) return a.attention > b.attention;
            return a.set < b.set;
        });
        return rest;
    };

    std::vector<PatchSet> initial;
    for (int p : attention.top(config.beam_width)) initial.push_back(PatchSet(config.r).with(p));
    budget = carried;
    std::vector<State> beam = settle(std::move(initial));

    int iteration = 0;
    while (finished.size() < width && iteration < config.iteration_limit()) {
        // Every finalized MSE takes one of the w slots.
        beam.resize(std::min(beam.size(), width - finished.size()));
        if (beam.empty()) break;

        std::vector<PatchSet> candidates;
        for (const auto& st : beam) {
            int added = 0;
            for (int p : ranking) {
                if (added == config.expansions) break;
                if (st.set.contains(p)) continue;
                candidates.push_back(st.set.with(p));
                ++added;
            }
        }
        if (candidates.empty()) break;

        const std::size_t calls_before = ctx.cache().classifier_calls();
        budget = carried + width * static_cast<std::size_t>(config.expansions) * (iteration + 1);
        beam = settle(std::move(candidates));
        ++iteration;
        if (stats != nullptr)
            stats->calls_per_iteration.push_back(ctx.cache().classifier_calls() - calls_before);
    }
    if (stats != nullptr) stats->iterations = iteration;
    sort_records(finished);
    return finished;
}

}  // namespace mse
