// Diverse subsets of MSE candidates.
//
// psi(X) is the largest pairwise intersection cardinality among the sets
// in X; a diverse subset keeps psi small.

#pragma once

#include <span>
#include <vector>

#include "mse/search.hpp"

namespace mse {

struct DiverseSelection {
    std::vector<MseRecord> chosen;
    int psi = 0;
};

/// Largest pairwise intersection; 0 with fewer than two sets.
int psi(std::span<const PatchSet> sets);
int psi(std::span<const MseRecord> records);

/// Greedy dispersion: start from the highest-confidence candidate, then
/// repeatedly add the candidate whose largest intersection with the chosen
/// sets is smallest (ties: higher confidence, then lexicographic bits).
DiverseSelection select_diverse(std::span<const MseRecord> candidates, int c);

/// Size of the greedy packing that visits candidates best-first and keeps
/// one iff it shares at most `overlap` patches with every kept candidate.
int count_diverse(std::span<const MseRecord> candidates, int overlap);

}  // namespace mse
