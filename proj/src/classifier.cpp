#include "mse/classifier.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mse {

Scores Classifier::classify(const Image& image) const {
    auto out = classify_batch(std::span<const Image>(&image, 1));
    if (out.size() != 1) throw std::runtime_error("classifier returned wrong batch size");
    return std::move(out.front());
}

int argmax(const Scores& scores) {
    if (scores.empty()) throw std::invalid_argument("argmax of empty score vector");
    // max_element returns the first maximum, i.e. the smallest index on ties.
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

int target_class(const Classifier& classifier, const Image& image) {
    return argmax(classifier.classify(image));
}

PresenceReader::PresenceReader(const Image& reference, const PatchGrid& grid)
    : height_(reference.height),
      width_(reference.width),
      channels_(reference.channels),
      patches_(grid.patch_count()),
      inverse_(reference.data.size(), 0.0f),
      channel_weight_(reference.pixel_count(), 0.0f),
      patch_of_(reference.pixel_count()),
      pixel_count_(static_cast<std::size_t>(grid.patch_count()), 0.0) {
    if (grid.image_height() != reference.height || grid.image_width() != reference.width)
        throw std::invalid_argument("patch_presence: grid does not match image");
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * width_ + x;
            int used = 0;
            for (int c = 0; c < channels_; ++c) {
                const float ref = reference.data[p * channels_ + c];
                if (ref > 0.0f) {
                    inverse_[p * channels_ + c] = 1.0f / ref;
                    ++used;
                }
            }
            patch_of_[p] = grid.patch_at(y, x);
            if (used > 0) {
                channel_weight_[p] = 1.0f / static_cast<float>(used);
                pixel_count_[static_cast<std::size_t>(patch_of_[p])] += 1.0;
            }
        }
    }
}

std::vector<double> PresenceReader::operator()(const Image& image) const {
    if (image.height != height_ || image.width != width_ || image.channels != channels_)
        throw std::invalid_argument("patch_presence: image and reference differ in shape");
    std::vector<double> sum(static_cast<std::size_t>(patches_), 0.0);
    const std::size_t n = static_cast<std::size_t>(height_) * width_;
    for (std::size_t p = 0; p < n; ++p) {
        float ratio = 0.0f;
        for (int c = 0; c < channels_; ++c) ratio += image.data[p * channels_ + c] * inverse_[p * channels_ + c];
        sum[static_cast<std::size_t>(patch_of_[p])] += ratio * channel_weight_[p];
    }
    for (std::size_t i = 0; i < sum.size(); ++i)
        sum[i] = pixel_count_[i] > 0 ? sum[i] / pixel_count_[i] : 0.0;
    return sum;
}

std::vector<double> patch_presence(const Image& image, const Image& reference, const PatchGrid& grid) {
    return PresenceReader(reference, grid)(image);
}

// ---------------------------------------------------------------------------
// SyntheticMonotoneDnf
// ---------------------------------------------------------------------------

SyntheticMonotoneDnf::SyntheticMonotoneDnf(Image reference, int r, std::vector<PatchSet> terms)
    : SyntheticMonotoneDnf(std::move(reference), r, std::move(terms), Params{}) {}

SyntheticMonotoneDnf::SyntheticMonotoneDnf(Image reference, int r, std::vector<PatchSet> terms,
                                           Params params)
    : reference_(std::move(reference)),
      grid_(r, reference_.height, reference_.width),
      presence_(reference_, grid_),
      terms_(std::move(terms)),
      params_(params) {
    reference_.validate();
    if (!(params_.p_low >= 0.0 && params_.p_low < params_.p_high && params_.p_high <= 1.0))
        throw std::invalid_argument("synthetic dnf: need 0 <= p_low < p_high <= 1");
    for (const auto& t : terms_) {
        if (t.r() != r) throw std::invalid_argument("synthetic dnf: term on a different grid");
        if (t.empty()) throw std::invalid_argument("synthetic dnf: empty term");
    }
}

PatchSet SyntheticMonotoneDnf::present_patches(const Image& image) const {
    const auto presence = presence_(image);
    PatchSet present(grid_.r());
    for (int i = 0; i < grid_.patch_count(); ++i)
        if (presence[i] > params_.presence_threshold) present = present.with(i);
    return present;
}

double SyntheticMonotoneDnf::score_of(const PatchSet& present) const {
    for (const auto& t : terms_)
        if (t.is_subset_of(present)) return params_.p_high;
    return params_.p_low;
}

std::vector<Scores> SyntheticMonotoneDnf::classify_batch(std::span<const Image> images) const {
    std::vector<Scores> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        const double target = score_of(present_patches(img));
        out.push_back({target, 1.0 - target});
    }
    return out;
}

// ---------------------------------------------------------------------------
// EvalCache
// ---------------------------------------------------------------------------

std::size_t EvalCache::KeyHash::operator()(const Key& k) const noexcept {
    std::size_t h = std::hash<std::uint64_t>{}(k.bits);
    h ^= std::hash<double>{}(k.sigma) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    return h ^ static_cast<std::size_t>(k.kind);
}

EvalCache::EvalCache(const Classifier& classifier, Image image, int r)
    : classifier_(classifier),
      image_(std::move(image)),
      grid_(r, image_.height, image_.width) {
    image_.validate();
}

std::size_t EvalCache::distinct_keys() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

const Perturber& EvalCache::perturber(PerturbationMode mode) {
    std::lock_guard lock(mutex_);
    auto& slot = perturbers_[{static_cast<int>(mode.kind), mode.sigma}];
    if (!slot) slot = std::make_unique<Perturber>(image_, grid_, mode);
    return *slot;
}

const Scores& EvalCache::scores(const PatchSet& set, PerturbationMode mode) {
    return *scores_batch(std::span<const PatchSet>(&set, 1), mode).front();
}

void EvalCache::evaluate(std::span<const PatchSet> sets, PerturbationMode mode,
                         std::span<std::promise<Scores>> promises) {
    const Perturber& p = perturber(mode);
    const std::size_t chunk = std::max<std::size_t>(1, classifier_.max_batch());
    const int classes = classifier_.num_classes();
    for (std::size_t begin = 0; begin < sets.size(); begin += chunk) {
        const std::size_t end = std::min(sets.size(), begin + chunk);
        std::vector<Image> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(p.apply(sets[i]));

        std::vector<Scores> result;
        if (classifier_.concurrent()) {
            result = classifier_.classify_batch(batch);
        } else {
            std::lock_guard lock(classify_mutex_);
            result = classifier_.classify_batch(batch);
        }
        calls_ += batch.size();
        if (result.size() != batch.size())
            throw std::runtime_error("classifier returned " + std::to_string(result.size()) +
                                     " score vectors for a batch of " + std::to_string(batch.size()));
        for (std::size_t i = 0; i < result.size(); ++i) {
            if (static_cast<int>(result[i].size()) != classes)
                throw std::runtime_error("classifier returned a score vector of wrong length");
            for (double v : result[i])
                if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("classifier returned a score outside [0,1]");
            promises[begin + i].set_value(std::move(result[i]));
        }
    }
}

std::vector<const Scores*> EvalCache::scores_batch(std::span<const PatchSet> sets, PerturbationMode mode) {
    std::vector<std::shared_future<Scores>> futures;
    futures.reserve(sets.size());
    std::vector<PatchSet> todo;
    std::vector<Key> todo_keys;
    std::vector<std::promise<Scores>> promises;
    {
        std::lock_guard lock(mutex_);
        for (const auto& s : sets) {
            if (s.r() != grid_.r()) throw std::invalid_argument("eval cache: patch set on a different grid");
            const Key key{s.bits(), static_cast<int>(mode.kind), mode.sigma};
            auto it = entries_.find(key);
            if (it != entries_.end()) {
                ++hits_;
                futures.push_back(it->second);
                continue;
            }
            ++misses_;
            promises.emplace_back();
            auto fut = promises.back().get_future().share();
            entries_.emplace(key, fut);
            futures.push_back(fut);
            todo.push_back(s);
            todo_keys.push_back(key);
        }
    }
    if (!todo.empty()) {
        try {
            evaluate(todo, mode, promises);
        } catch (...) {
            // Fail every key this call owns and forget it so a later call can retry.
            std::lock_guard lock(mutex_);
            for (std::size_t i = 0; i < promises.size(); ++i) {
                try {
                    promises[i].set_exception(std::current_exception());
                } catch (const std::future_error&) {
                    continue;  // already fulfilled
                }
                entries_.erase(todo_keys[i]);
            }
            throw;
        }
    }
    std::vector<const Scores*> out;
    out.reserve(futures.size());
    for (auto& f : futures) out.push_back(&f.get());
    return out;
}

double set_confidence(EvalCache& cache, const PatchSet& set, int class_index, PerturbationMode mode) {
    const Scores& s = cache.scores(set, mode);
    if (class_index < 0 || class_index >= static_cast<int>(s.size()))
        throw std::invalid_argument("set_confidence: class index out of range");
    return s[static_cast<std::size_t>(class_index)];
}

}  // namespace mse
