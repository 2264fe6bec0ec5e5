// Search for minimal sufficient explanations (MSEs).
//
// A patch set N is sufficient when f_c(N) >= P_h * f_c(x), with x the
// unperturbed image, and minimal when additionally every leave-one-out
// subset falls below that threshold.

#pragma once

#include <cstddef>
#include <vector>

#include "mse/attention.hpp"
#include "mse/classifier.hpp"
#include "mse/imaging.hpp"

namespace mse {

struct SearchConfig {
    double p_high = 0.9;
    int r = 7;
    int m = 10;               // combinatorial pool size
    int k = 2;                // combinatorial subset size
    int beam_width = 3;       // w
    int expansions = 15;      // q
    int max_iterations = 0;   // 0 means r^2
    PerturbationMode mode = PerturbationMode::black();
    double p_low = 0.4;       // SAG expansion threshold
    int diverse_count = 3;    // c

    int iteration_limit() const { return max_iterations > 0 ? max_iterations : r * r; }
    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct MseRecord {
    PatchSet set;
    double confidence = 0.0;
    double base_confidence = 0.0;
    bool minimal = false;

    bool operator==(const MseRecord&) const = default;
};

/// Higher confidence first, then lexicographic bits.
bool ranks_before(const MseRecord& a, const MseRecord& b);

/// Everything a sufficiency test needs for one (image, class, mode).
class SearchContext {
public:
    /// Evaluates f_c(x) on the unperturbed image through the cache.
    SearchContext(EvalCache& cache, int class_index, double p_high, PerturbationMode mode);

    EvalCache& cache() const { return cache_; }
    int class_index() const { return class_index_; }
    PerturbationMode mode() const { return mode_; }
    double p_high() const { return p_high_; }
    double base_confidence() const { return base_confidence_; }
    double threshold() const { return p_high_ * base_confidence_; }

    double confidence(const PatchSet& set) const;
    std::vector<double> confidences(std::span<const PatchSet> sets) const;

private:
    EvalCache& cache_;
    int class_index_;
    double p_high_;
    PerturbationMode mode_;
    double base_confidence_;
};

SearchContext make_context(EvalCache& cache, int class_index, const SearchConfig& config);

bool is_sufficient(const PatchSet& set, const SearchContext& ctx);

/// Scores `set` and its leave-one-out children. minimal is true iff the set
/// is sufficient and no child is; sufficient singletons are minimal.
MseRecord check_minimal(const PatchSet& set, const SearchContext& ctx);

struct SearchStats {
    int iterations = 0;
    std::size_t candidates_scored = 0;
    /// Sufficient sets rejected because a leave-one-out child was sufficient.
    std::vector<PatchSet> discarded_non_minimal;
    /// Sufficient sets left unverified because checking their leave-one-out
    /// children would have exceeded the call budget.
    std::vector<PatchSet> unverified_over_budget;
    /// Wrapped-classifier calls made during each beam expansion round.
    std::vector<std::size_t> calls_per_iteration;
};

/// Every k-subset of the m highest-attention patches that is an MSE.
std::vector<MseRecord> combinatorial_search(const CoarseAttention& attention, const SearchContext& ctx,
                                            const SearchConfig& config, SearchStats* stats = nullptr);

/// Attention-guided beam search; at most w MSEs. States with equal
/// confidence are ranked by summed attention, then by bits. A cache that
/// held at most w + r^2 calls on entry ends with at most w*q*iterations +
/// w + r^2: a sufficient set whose minimality check would not fit is
/// dropped unverified.
std::vector<MseRecord> beam_search(const CoarseAttention& attention, const SearchContext& ctx,
                                   const SearchConfig& config, SearchStats* stats = nullptr);

}  // namespace mse
