// Patch grid geometry, bilinear patch masks and image perturbation.
//
// An image is tiled into an r x r grid of non-overlapping patches. A PatchSet
// selects some of them; the selection is turned into a smooth mask by
// bilinear upsampling (grid values anchored at patch centers, clamped past
// the outermost centers), and the mask blends the image with a baseline
// (black, or a heavily blurred copy of the image).

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mse {

/// RGB (or single channel) image with intensities in [0,1], row-major,
/// channels interleaved.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f);

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    /// Throws std::invalid_argument if the shape or any intensity is invalid.
    void validate() const;

    bool operator==(const Image&) const = default;
};

/// Dense scalar field (heatmaps, masks). Masks keep every value in [0,1].
struct ScalarField {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    ScalarField() = default;
    ScalarField(int h, int w, float fill = 0.0f);

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

using Mask = ScalarField;

/// Half-open pixel interval [begin, end).
struct PixelRange {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
};

/// r x r tiling of an image. Patch i covers grid row i / r, column i % r.
/// Every band is floor(extent / r) pixels wide except the last one, which
/// absorbs the remainder.
class PatchGrid {
public:
    PatchGrid(int r, int image_height, int image_width);

    int r() const { return r_; }
    int patch_count() const { return r_ * r_; }
    int image_height() const { return height_; }
    int image_width() const { return width_; }

    PixelRange row_band(int band) const { return band_range(band, height_); }
    PixelRange col_band(int band) const { return band_range(band, width_); }
    PixelRange patch_rows(int patch) const { return row_band(patch / r_); }
    PixelRange patch_cols(int patch) const { return col_band(patch % r_); }

    /// Patch index owning pixel (y, x).
    int patch_at(int y, int x) const;

    /// Continuous coordinate of a band center; pixel p spans [p, p + 1).
    double row_center(int band) const;
    double col_center(int band) const;

    bool operator==(const PatchGrid&) const = default;

private:
    PixelRange band_range(int band, int extent) const;
    int band_of(int pixel, int extent) const;

    int r_;
    int height_;
    int width_;
};

/// Largest supported grid side; a PatchSet is a 64-bit vector.
inline constexpr int kMaxGridSide = 8;

/// Subset of the r^2 patches of a grid.
class PatchSet {
public:
    PatchSet() = default;
    explicit PatchSet(int r, std::uint64_t bits = 0);

    static PatchSet empty(int r) { return PatchSet(r); }
    static PatchSet full(int r);
    static PatchSet of(int r, std::initializer_list<int> patches);
    static PatchSet of(int r, std::span<const int> patches);

    int r() const { return r_; }
    int universe() const { return r_ * r_; }
    std::uint64_t bits() const { return bits_; }

    bool contains(int patch) const;
    int size() const;
    bool empty() const { return bits_ == 0; }
    bool is_subset_of(const PatchSet& other) const;

    PatchSet with(int patch) const;
    PatchSet without(int patch) const;
    PatchSet intersect(const PatchSet& other) const;
    int intersection_size(const PatchSet& other) const;

    std::vector<int> indices() const;
    std::string to_string() const;

    bool operator==(const PatchSet&) const = default;
    /// Canonical "lexicographic" order: by the numeric value of the bit vector.
    std::strong_ordering operator<=>(const PatchSet& other) const {
        return bits_ <=> other.bits_;
    }

private:
    void check_index(int patch) const;

    int r_ = 0;
    std::uint64_t bits_ = 0;
};

struct PatchSetHash {
    std::size_t operator()(const PatchSet& s) const noexcept {
        return std::hash<std::uint64_t>{}(s.bits() * 0x9E3779B97F4A7C15ull ^ static_cast<unsigned>(s.r()));
    }
};

/// How pixels outside a patch set are replaced.
struct PerturbationMode {
    enum class Kind { Black, Blur };

    Kind kind = Kind::Black;
    double sigma = 0.0;

    static PerturbationMode black() { return {}; }
    static PerturbationMode blur(double sigma = 10.0);

    bool is_blur() const { return kind == Kind::Blur; }
    /// "black" or "blur:<sigma>".
    std::string to_string() const;
    static PerturbationMode parse(const std::string& text);

    bool operator==(const PerturbationMode&) const = default;
};

/// Bilinear upsampling of the binary patch grid of `set` to grid resolution.
Mask upsample_mask(const PatchGrid& grid, const PatchSet& set);
Mask upsample_mask(const PatchSet& set, int height, int width);

/// Bilinear upsampling of an arbitrary r x r grid of values (row-major).
ScalarField upsample_grid(const PatchGrid& grid, std::span<const double> grid_values);

/// Per-channel Gaussian blur, kernel truncated at 4 sigma, symmetric
/// reflection at the borders.
Image gaussian_blur(const Image& image, double sigma);

Image make_baseline(const Image& image, PerturbationMode mode);

/// mask * image + (1 - mask) * baseline, per channel.
Image perturb(const Image& image, const PatchSet& set, PerturbationMode mode);
Image perturb(const Image& image, const PatchGrid& grid, const PatchSet& set,
              PerturbationMode mode);

/// Bilinear interpolation of r x r grid values to the grid's image size,
/// with the per-axis weights computed once.
class GridUpsampler {
public:
    explicit GridUpsampler(const PatchGrid& grid);

    const PatchGrid& grid() const { return grid_; }
    ScalarField operator()(std::span<const float> grid_values) const;
    Mask mask(const PatchSet& set) const;

private:
    struct AxisWeight {
        int lo;
        int hi;
        float t;  // weight of `hi`
    };
    static std::vector<AxisWeight> axis_weights(int extent, int r, const std::vector<double>& centers);

    PatchGrid grid_;
    std::vector<AxisWeight> wy_;
    std::vector<AxisWeight> wx_;
};

/// Blends against a precomputed baseline. Reuse one instance per
/// (image, mode) when perturbing many patch sets of the same image.
class Perturber {
public:
    Perturber(Image image, PatchGrid grid, PerturbationMode mode);

    Image apply(const PatchSet& set) const;

    const Image& image() const { return image_; }
    const Image& baseline() const { return baseline_; }
    const PatchGrid& grid() const { return grid_; }
    PerturbationMode mode() const { return mode_; }

private:
    Image image_;
    Image baseline_;
    PatchGrid grid_;
    GridUpsampler upsampler_;
    PerturbationMode mode_;
};

/// Bilinear resize, half-pixel centers, edge clamped.
Image resize_bilinear(const Image& image, int height, int width);
ScalarField resize_bilinear(const ScalarField& field, int height, int width);

}  // namespace mse
