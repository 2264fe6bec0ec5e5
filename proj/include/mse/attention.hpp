// Coarse r x r attention used to rank patches for the searches.

#pragma once

#include <filesystem>
#include <vector>

#include "mse/classifier.hpp"
#include "mse/imaging.hpp"

namespace mse {

/// One attention value per patch. Only the ranking matters; ties go to the
/// lower patch index.
struct CoarseAttention {
    int r = 0;
    std::vector<double> values;

    /// Patch indices by decreasing value.
    std::vector<int> ranking() const;
    /// First n entries of ranking().
    std::vector<int> top(int n) const;
};

/// Average pooling of a full-resolution map over each patch region.
CoarseAttention pool_attention(const ScalarField& full_map, const PatchGrid& grid);

/// Confidence of every singleton patch set (r^2 evaluations through the cache).
CoarseAttention occlusion_attention(EvalCache& cache, int class_index, PerturbationMode mode);

/// Heatmap file: CSV/whitespace separated matrix (.csv, .txt) or an 8-bit
/// grayscale image rescaled to [0,1].
ScalarField load_heatmap(const std::filesystem::path& path);

}  // namespace mse
