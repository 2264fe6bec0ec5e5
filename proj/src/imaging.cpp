#include "mse/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mse {

Image::Image(int h, int w, int c, float fill)
    : height(h), width(w), channels(c),
      data(static_cast<std::size_t>(std::max(h, 0)) * std::max(w, 0) * std::max(c, 0), fill) {}

void Image::validate() const {
    if (height <= 0 || width <= 0 || channels <= 0)
        throw std::invalid_argument("image: non-positive dimensions");
    if (data.size() != pixel_count() * channels)
        throw std::invalid_argument("image: data length does not match shape");
    for (float v : data) {
        if (!(v >= 0.0f && v <= 1.0f))
            throw std::invalid_argument("image: intensity outside [0,1]");
    }
}

ScalarField::ScalarField(int h, int w, float fill)
    : height(h), width(w),
      values(static_cast<std::size_t>(std::max(h, 0)) * std::max(w, 0), fill) {}

// ---------------------------------------------------------------------------
// PatchGrid
// ---------------------------------------------------------------------------

PatchGrid::PatchGrid(int r, int image_height, int image_width)
    : r_(r), height_(image_height), width_(image_width) {
    if (r < 1 || r > kMaxGridSide)
        throw std::invalid_argument("patch grid: r must be in [1, " +
                                    std::to_string(kMaxGridSide) + "]");
    if (image_height < r || image_width < r)
        throw std::invalid_argument("patch grid: image smaller than grid");
}

PixelRange PatchGrid::band_range(int band, int extent) const {
    if (band < 0 || band >= r_) throw std::out_of_range("patch grid: band index");
    const int step = extent / r_;
    return {band * step, band == r_ - 1 ? extent : (band + 1) * step};
}

int PatchGrid::band_of(int pixel, int extent) const {
    const int step = extent / r_;
    return std::min(pixel / step, r_ - 1);
}

int PatchGrid::patch_at(int y, int x) const {
    if (y < 0 || y >= height_ || x < 0 || x >= width_)
        throw std::out_of_range("patch grid: pixel outside image");
    return band_of(y, height_) * r_ + band_of(x, width_);
}

double PatchGrid::row_center(int band) const {
    const auto b = row_band(band);
    return 0.5 * (b.begin + b.end);
}

double PatchGrid::col_center(int band) const {
    const auto b = col_band(band);
    return 0.5 * (b.begin + b.end);
}

// ---------------------------------------------------------------------------
// PatchSet
// ---------------------------------------------------------------------------

PatchSet::PatchSet(int r, std::uint64_t bits) : r_(r), bits_(bits) {
    if (r < 1 || r > kMaxGridSide) throw std::invalid_argument("patch set: unsupported r");
    const int n = r * r;
    if (n < 64 && (bits >> n) != 0)
        throw std::invalid_argument("patch set: bit set beyond r^2");
}

PatchSet PatchSet::full(int r) {
    const int n = r * r;
    return PatchSet(r, n >= 64 ? ~0ull : ((1ull << n) - 1));
}

PatchSet PatchSet::of(int r, std::initializer_list<int> patches) {
    return of(r, std::span<const int>(patches.begin(), patches.size()));
}

PatchSet PatchSet::of(int r, std::span<const int> patches) {
    PatchSet s(r);
    for (int p : patches) s = s.with(p);
    return s;
}

void PatchSet::check_index(int patch) const {
    if (patch < 0 || patch >= universe())
        throw std::out_of_range("patch set: index " + std::to_string(patch) + " outside grid");
}

bool PatchSet::contains(int patch) const {
    check_index(patch);
    return (bits_ >> patch) & 1u;
}

int PatchSet::size() const { return std::popcount(bits_); }

bool PatchSet::is_subset_of(const PatchSet& other) const {
    return (bits_ & ~other.bits_) == 0;
}

PatchSet PatchSet::with(int patch) const {
    check_index(patch);
    return PatchSet(r_, bits_ | (1ull << patch));
}

PatchSet PatchSet::without(int patch) const {
    check_index(patch);
    return PatchSet(r_, bits_ & ~(1ull << patch));
}

PatchSet PatchSet::intersect(const PatchSet& other) const {
    return PatchSet(r_, bits_ & other.bits_);
}

int PatchSet::intersection_size(const PatchSet& other) const {
    return std::popcount(bits_ & other.bits_);
}

std::vector<int> PatchSet::indices() const {
    std::vector<int> out;
    out.reserve(size());
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
}

std::string PatchSet::to_string() const {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (int i : indices()) {
        if (!first) os << ',';
        os << i;
        first = false;
    }
    os << '}';
    return os.str();
}

// ---------------------------------------------------------------------------
// PerturbationMode
// ---------------------------------------------------------------------------

PerturbationMode PerturbationMode::blur(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("blur sigma must be positive");
    return {Kind::Blur, sigma};
}

std::string PerturbationMode::to_string() const {
    if (kind == Kind::Black) return "black";
    std::ostringstream os;
    os << "blur:" << sigma;
    return os.str();
}

PerturbationMode PerturbationMode::parse(const std::string& text) {
    if (text == "black") return black();
    if (text == "blur") return blur();
    if (text.rfind("blur:", 0) == 0) {
        std::size_t used = 0;
        const double sigma = std::stod(text.substr(5), &used);
        if (used != text.size() - 5) throw std::invalid_argument("bad blur sigma: " + text);
        return blur(sigma);
    }
    throw std::invalid_argument("unknown perturbation mode: " + text);
}

// ---------------------------------------------------------------------------
// Bilinear masks
// ---------------------------------------------------------------------------

std::vector<GridUpsampler::AxisWeight> GridUpsampler::axis_weights(int extent, int r,
                                                                  const std::vector<double>& c) {
    std::vector<AxisWeight> out(extent);
    int j = 0;
    for (int p = 0; p < extent; ++p) {
        const double pos = p + 0.5;
        if (pos <= c[0]) {
            out[p] = {0, 0, 0.0f};
        } else if (pos >= c[r - 1]) {
            out[p] = {r - 1, r - 1, 0.0f};
        } else {
            while (c[j + 1] < pos) ++j;
            out[p] = {j, j + 1, static_cast<float>((pos - c[j]) / (c[j + 1] - c[j]))};
        }
    }
    return out;
}

GridUpsampler::GridUpsampler(const PatchGrid& grid) : grid_(grid) {
    std::vector<double> rows(grid.r()), cols(grid.r());
    for (int b = 0; b < grid.r(); ++b) {
        rows[b] = grid.row_center(b);
        cols[b] = grid.col_center(b);
    }
    wy_ = axis_weights(grid.image_height(), grid.r(), rows);
    wx_ = axis_weights(grid.image_width(), grid.r(), cols);
}

ScalarField GridUpsampler::operator()(std::span<const float> g) const {
    const int r = grid_.r();
    const int h = grid_.image_height();
    const int w = grid_.image_width();
    if (g.size() != static_cast<std::size_t>(r * r))
        throw std::invalid_argument("upsample: expected r^2 grid values");

    // Interpolate along x for every grid row, then along y.
    std::vector<float> rows(static_cast<std::size_t>(r) * w);
    for (int gy = 0; gy < r; ++gy) {
        const float* src = g.data() + static_cast<std::size_t>(gy) * r;
        float* dst = rows.data() + static_cast<std::size_t>(gy) * w;
        for (int x = 0; x < w; ++x) {
            const auto& a = wx_[x];
            dst[x] = src[a.lo] + (src[a.hi] - src[a.lo]) * a.t;
        }
    }
    ScalarField out(h, w);
    for (int y = 0; y < h; ++y) {
        const auto& a = wy_[y];
        const float* lo = rows.data() + static_cast<std::size_t>(a.lo) * w;
        const float* hi = rows.data() + static_cast<std::size_t>(a.hi) * w;
        float* dst = out.values.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) dst[x] = lo[x] + (hi[x] - lo[x]) * a.t;
    }
    return out;
}

Mask GridUpsampler::mask(const PatchSet& set) const {
    if (set.r() != grid_.r()) throw std::invalid_argument("upsample_mask: set and grid differ in r");
    std::vector<float> g(grid_.patch_count(), 0.0f);
    for (int i : set.indices()) g[i] = 1.0f;
    Mask m = (*this)(g);
    for (float& v : m.values) v = std::clamp(v, 0.0f, 1.0f);
    return m;
}

Mask upsample_mask(const PatchGrid& grid, const PatchSet& set) {
    return GridUpsampler(grid).mask(set);
}

Mask upsample_mask(const PatchSet& set, int height, int width) {
    if (height < set.r() || width < set.r())
        throw std::invalid_argument("upsample_mask: requested size smaller than grid");
    return upsample_mask(PatchGrid(set.r(), height, width), set);
}

ScalarField upsample_grid(const PatchGrid& grid, std::span<const double> grid_values) {
    std::vector<float> g(grid_values.begin(), grid_values.end());
    return GridUpsampler(grid)(g);
}

// ---------------------------------------------------------------------------
// Baselines and perturbation
// ---------------------------------------------------------------------------

namespace {

// Symmetric reflection (edge sample repeated), folded for any offset.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
    image.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int h = image.height, w = image.width, ch = image.channels;
    std::vector<double> tmp(image.data.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * image.at(y, reflect(x + i, w), c);
                tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
            }
    Image out(h, w, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           tmp[(static_cast<std::size_t>(reflect(y + i, h)) * w + x) * ch + c];
                out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
    return out;
}

Image make_baseline(const Image& image, PerturbationMode mode) {
    image.validate();
    if (mode.is_blur()) return gaussian_blur(image, mode.sigma);
    return Image(image.height, image.width, image.channels, 0.0f);
}

Perturber::Perturber(Image image, PatchGrid grid, PerturbationMode mode)
    : image_(std::move(image)), grid_(grid), upsampler_(grid), mode_(mode) {
    if (grid_.image_height() != image_.height || grid_.image_width() != image_.width)
        throw std::invalid_argument("perturb: grid does not match image dimensions");
    baseline_ = make_baseline(image_, mode_);
}

Image Perturber::apply(const PatchSet& set) const {
    const Mask mask = upsampler_.mask(set);
    Image out(image_.height, image_.width, image_.channels);
    const int ch = image_.channels;
    const std::size_t n = image_.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const float m = mask.values[p];
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * ch + c;
            out.data[i] = m * image_.data[i] + (1.0f - m) * baseline_.data[i];
        }
    }
    return out;
}

Image perturb(const Image& image, const PatchGrid& grid, const PatchSet& set,
              PerturbationMode mode) {
    return Perturber(image, grid, mode).apply(set);
}

Image perturb(const Image& image, const PatchSet& set, PerturbationMode mode) {
    return perturb(image, PatchGrid(set.r(), image.height, image.width), set, mode);
}

// ---------------------------------------------------------------------------
// Resize
// ---------------------------------------------------------------------------

namespace {

struct AxisWeight {
    int lo;
    int hi;
    float t;
};

AxisWeight resize_weight(int dst, int in, int out) {
    double src = (dst + 0.5) * static_cast<double>(in) / out - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    return {lo, hi, static_cast<float>(src - lo)};
}

}  // namespace

Image resize_bilinear(const Image& image, int height, int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("resize: non-positive size");
    if (height == image.height && width == image.width) return image;
    Image out(height, width, image.channels);
    for (int y = 0; y < height; ++y) {
        const auto ay = resize_weight(y, image.height, height);
        for (int x = 0; x < width; ++x) {
            const auto ax = resize_weight(x, image.width, width);
            for (int c = 0; c < image.channels; ++c) {
                const float top = image.at(ay.lo, ax.lo, c) +
                                  (image.at(ay.lo, ax.hi, c) - image.at(ay.lo, ax.lo, c)) * ax.t;
                const float bot = image.at(ay.hi, ax.lo, c) +
                                  (image.at(ay.hi, ax.hi, c) - image.at(ay.hi, ax.lo, c)) * ax.t;
                out.at(y, x, c) = std::clamp(top + (bot - top) * ay.t, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

ScalarField resize_bilinear(const ScalarField& field, int height, int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("resize: non-positive size");
    if (height == field.height && width == field.width) return field;
    ScalarField out(height, width);
    for (int y = 0; y < height; ++y) {
        const auto ay = resize_weight(y, field.height, height);
        for (int x = 0; x < width; ++x) {
            const auto ax = resize_weight(x, field.width, width);
            const float top = field.at(ay.lo, ax.lo) + (field.at(ay.lo, ax.hi) - field.at(ay.lo, ax.lo)) * ax.t;
            const float bot = field.at(ay.hi, ax.lo) + (field.at(ay.hi, ax.hi) - field.at(ay.hi, ax.lo)) * ax.t;
            out.at(y, x) = top + (bot - top) * ay.t;
        }
    }
    return out;
}

}  // namespace mse
