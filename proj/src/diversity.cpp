#include "mse/diversity.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mse {

int psi(std::span<const PatchSet> sets) {
    int best = 0;
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = i + 1; j < sets.size(); ++j)
            best = std::max(best, sets[i].intersection_size(sets[j]));
    return best;
}

int psi(std::span<const MseRecord> records) {
    std::vector<PatchSet> sets;
    sets.reserve(records.size());
    for (const auto& r : records) sets.push_back(r.set);
    return psi(sets);
}

DiverseSelection select_diverse(std::span<const MseRecord> candidates, int c) {
    if (c < 1) throw std::invalid_argument("select_diverse: c must be >= 1");
    std::vector<MseRecord> pool(candidates.begin(), candidates.end());
    std::sort(pool.begin(), pool.end(), ranks_before);

    DiverseSelection out;
    if (pool.size() <= static_cast<std::size_t>(c)) {
        out.chosen = std::move(pool);
        out.psi = psi(out.chosen);
        return out;
    }

    std::vector<bool> taken(pool.size(), false);
    // worst[i]: largest intersection of pool[i] with any chosen set.
    std::vector<int> worst(pool.size(), 0);
    for (int step = 0; step < c; ++step) {
        std::size_t pick = pool.size();
        int pick_cost = std::numeric_limits<int>::max();
        // pool is best-first, so the first strict minimum wins the tie-break.
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!taken[i] && worst[i] < pick_cost) {
                pick = i;
                pick_cost = worst[i];
            }
        }
        taken[pick] = true;
        out.chosen.push_back(pool[pick]);
        for (std::size_t i = 0; i < pool.size(); ++i)
            worst[i] = std::max(worst[i], pool[i].set.intersection_size(pool[pick].set));
    }
    out.psi = psi(out.chosen);
    return out;
}

int count_diverse(std::span<const MseRecord> candidates, int overlap) {
    if (overlap < 0) throw std::invalid_argument("count_diverse: overlap must be >= 0");
    std::vector<MseRecord> pool(candidates.begin(), candidates.end());
    std::sort(pool.begin(), pool.end(), ranks_before);
    std::vector<PatchSet> kept;
    for (const auto& rec : pool) {
        const bool ok = std::all_of(kept.begin(), kept.end(), [&](const PatchSet& s) {
            return s.intersection_size(rec.set) <= overlap;
        });
        if (ok) kept.push_back(rec.set);
    }
    return static_cast<int>(kept.size());
}

}  // namespace mse
