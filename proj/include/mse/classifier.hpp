// Black-box classifier abstraction and memoized patch-set evaluation.

#pragma once

#include <atomic>
#include <cstddef>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mse/imaging.hpp"

namespace mse {

/// Class-conditional scores in [0,1]; not required to sum to one.
using Scores = std::vector<double>;

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual int num_classes() const = 0;

    /// One score vector per input, in input order.
    virtual std::vector<Scores> classify_batch(std::span<const Image> images) const = 0;

    /// Largest batch accepted by classify_batch.
    virtual std::size_t max_batch() const { return 1; }

    /// False if classify_batch must not be entered concurrently.
    virtual bool concurrent() const { return true; }

    /// Resolution the classifier wants to see, if it has one.
    virtual std::optional<std::pair<int, int>> input_size() const { return std::nullopt; }

    Scores classify(const Image& image) const;
};

/// Smallest index attaining the maximum score.
int argmax(const Scores& scores);

/// f*(x): the class with the highest score on the unperturbed image.
int target_class(const Classifier& classifier, const Image& image);

/// Per-patch mean of image / reference over each patch region (channels
/// averaged, pixels with a zero reference sample skipped). Against a black
/// baseline this is exactly the mean mask value of every patch.
std::vector<double> patch_presence(const Image& image, const Image& reference, const PatchGrid& grid);

/// patch_presence against a fixed reference, with the per-pixel work
/// (reciprocals, patch lookup) precomputed.
class PresenceReader {
public:
    PresenceReader(const Image& reference, const PatchGrid& grid);
    std::vector<double> operator()(const Image& image) const;

private:
    int height_;
    int width_;
    int channels_;
    int patches_;
    std::vector<float> inverse_;        // 1 / reference, 0 where reference is 0
    std::vector<float> channel_weight_; // 1 / (non-zero channels) per pixel, 0 if none
    std::vector<int> patch_of_;         // per pixel
    std::vector<double> pixel_count_;   // contributing pixels per patch
};

/// Two-class classifier whose target score is p_high when every patch of at
/// least one term is present in the input, else p_low. Presence is read back
/// from the pixels by comparing against the reference image, so the whole
/// perturbation path is exercised. Class 0 is the target, class 1 scores
/// 1 - target.
class SyntheticMonotoneDnf final : public Classifier {
public:
    struct Params {
        double p_low = 0.05;
        double p_high = 0.95;
        double presence_threshold = 0.5;
    };

    SyntheticMonotoneDnf(Image reference, int r, std::vector<PatchSet> terms);
    SyntheticMonotoneDnf(Image reference, int r, std::vector<PatchSet> terms, Params params);

    int num_classes() const override { return 2; }
    std::vector<Scores> classify_batch(std::span<const Image> images) const override;
    std::size_t max_batch() const override { return 64; }

    /// Patches whose presence exceeds the threshold.
    PatchSet present_patches(const Image& image) const;
    /// Target score for a patch set, bypassing pixels.
    double score_of(const PatchSet& present) const;

    const std::vector<PatchSet>& terms() const { return terms_; }
    const Params& params() const { return params_; }
    const Image& reference() const { return reference_; }

private:
    Image reference_;
    PatchGrid grid_;
    PresenceReader presence_;
    std::vector<PatchSet> terms_;
    Params params_;
};

/// Memoizes classifier scores of perturbed versions of one image, keyed by
/// (patch set, perturbation mode). Every key reaches the wrapped classifier
/// at most once, also under concurrent use: a key that is being evaluated
/// is awaited, not recomputed.
class EvalCache {
public:
    EvalCache(const Classifier& classifier, Image image, int r);

    EvalCache(const EvalCache&) = delete;
    EvalCache& operator=(const EvalCache&) = delete;

    const Scores& scores(const PatchSet& set, PerturbationMode mode);
    std::vector<const Scores*> scores_batch(std::span<const PatchSet> sets, PerturbationMode mode);

    const Image& image() const { return image_; }
    const PatchGrid& grid() const { return grid_; }
    int r() const { return grid_.r(); }
    const Classifier& classifier() const { return classifier_; }

    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }
    /// Images sent to the wrapped classifier.
    std::size_t classifier_calls() const { return calls_.load(); }
    std::size_t distinct_keys() const;

private:
    struct Key {
        std::uint64_t bits;
        int kind;
        double sigma;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept;
    };

    const Perturber& perturber(PerturbationMode mode);
    void evaluate(std::span<const PatchSet> sets, PerturbationMode mode,
                  std::span<std::promise<Scores>> promises);

    const Classifier& classifier_;
    Image image_;
    PatchGrid grid_;

    mutable std::mutex mutex_;
    std::unordered_map<Key, std::shared_future<Scores>, KeyHash> entries_;
    std::map<std::pair<int, double>, std::unique_ptr<Perturber>> perturbers_;
    std::mutex classify_mutex_;

    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
    std::atomic<std::size_t> calls_{0};
};

/// f_c of the image with everything outside `set` replaced per `mode`.
double set_confidence(EvalCache& cache, const PatchSet& set, int class_index, PerturbationMode mode);

}  // namespace mse
