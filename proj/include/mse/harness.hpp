// Corpus driver: runs the searches over many images and writes the MSE
// size coverage curves, diverse-MSE statistics and timing as CSV.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mse/classifier.hpp"
#include "mse/search.hpp"

namespace mse {

struct MethodSpec {
    enum class Kind { Comb, Beam };
    Kind kind = Kind::Beam;
    int width = 3;

    /// "CombS" or "BeamS-<w>".
    std::string label() const;
    /// Accepts "comb" or "beam-<w>" (also the labels above).
    static MethodSpec parse(const std::string& text);
};

struct HarnessConfig {
    SearchConfig search;
    std::vector<MethodSpec> methods{{MethodSpec::Kind::Beam, 3}, {MethodSpec::Kind::Beam, 15}};
    std::vector<int> overlap_levels{0, 1};
    bool write_graphs = true;
    int workers = 0;  // 0: hardware concurrency
};

struct CorpusItem {
    std::string id;
    Image image;
    std::shared_ptr<const Classifier> classifier;
    std::optional<ScalarField> heatmap;   // occlusion attention when absent
    std::optional<int> class_index;       // f*(x) when absent
};

struct ImageResult {
    std::string id;
    std::string method;
    std::optional<int> min_mse_size;
    std::vector<MseRecord> mses;
    std::map<int, int> diverse_counts;  // overlap -> count
    double find_seconds = 0.0;
    double build_seconds = 0.0;
    std::size_t classifier_calls = 0;
    std::size_t distinct_keys = 0;
};

struct CorpusError {
    std::string id;
    std::string message;
};

struct CorpusReport {
    int r = 7;
    std::vector<std::string> methods;
    std::vector<ImageResult> rows;
    std::vector<CorpusError> errors;

    std::size_t image_count() const;
    /// Images whose smallest MSE has at most k patches, for k = 1..r^2.
    std::vector<int> coverage(const std::string& method) const;
};

struct DiversityStats {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // population variance
    int mode = 0;           // smallest most frequent value
};

/// Images without any MSE either count as zero or are left out.
DiversityStats diversity_stats(const CorpusReport& report, const std::string& method, int overlap,
                               bool include_zero);

/// Loads every .png/.ppm/.pgm in `dir` (sorted by name). A sidecar
/// <stem>.attention.csv or <stem>.attention.png supplies the heatmap.
/// Unreadable files land in `errors`.
using ClassifierFactory =
    std::function<std::shared_ptr<const Classifier>(const std::filesystem::path& image_path, const Image& image)>;
std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir, const ClassifierFactory& factory,
                                    std::vector<CorpusError>& errors);

/// Runs every method on every item. With a non-empty out_dir, writes
/// per_image.csv, coverage.csv, diversity.csv and errors.csv there (and
/// graphs/<id>__<method>.json when enabled).
CorpusReport run_corpus(const std::vector<CorpusItem>& items, const HarnessConfig& config,
                        const std::filesystem::path& out_dir, std::vector<CorpusError> load_errors = {});

struct PerturbationComparison {
    std::map<std::string, std::vector<int>> black;  // method -> coverage
    std::map<std::string, std::vector<int>> blur;
    std::size_t images = 0;
};

/// Runs the identical search under black and blur perturbation and writes
/// paired coverage curves to `out_csv` (if non-empty).
PerturbationComparison compare_perturbation(const std::vector<CorpusItem>& items, const HarnessConfig& config,
                                            double blur_sigma, const std::filesystem::path& out_csv);

}  // namespace mse
