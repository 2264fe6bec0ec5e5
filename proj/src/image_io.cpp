#include "mse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace mse {

namespace {

std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct Raw {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> samples;
};

Raw decode_png(const std::vector<std::uint8_t>& bytes, bool gray) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw std::runtime_error(std::string("png decode: ") + img.message);
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raw raw{static_cast<int>(img.height), static_cast<int>(img.width), gray ? 1 : 3, {}};
    raw.samples.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, raw.samples.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error(std::string("png decode: ") + img.message);
    }
    return raw;
}

// Binary P5 (gray) / P6 (rgb), maxval 255.
Raw decode_pnm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 2;
    auto next_int = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            any = true;
        }
        if (!any) throw std::runtime_error("pnm: malformed header");
        return v;
    };
    Raw raw;
    raw.channels = bytes[1] == '6' ? 3 : 1;
    raw.width = next_int();
    raw.height = next_int();
    if (next_int() != 255) throw std::runtime_error("pnm: only maxval 255 supported");
    ++pos;
    const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
    if (bytes.size() < pos + n) throw std::runtime_error("pnm: truncated data");
    raw.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    return raw;
}

Raw decode_any(const std::filesystem::path& path, bool gray) {
    const auto bytes = read_bytes(path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, gray);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return decode_pnm(bytes);
    throw std::runtime_error("unsupported image format: " + path.string());
}

std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& samples, int h, int w, bool gray) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, samples.data(), 0, nullptr))
        throw std::runtime_error(std::string("png encode: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, samples.data(), 0, nullptr))
        throw std::runtime_error(std::string("png encode: ") + img.message);
    out.resize(size);
    return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    const Raw raw = decode_any(path, false);
    if (raw.channels == 3) return from_rgb8(raw.samples, raw.height, raw.width);
    Image img(raw.height, raw.width, 3);
    for (std::size_t p = 0; p < raw.samples.size(); ++p)
        for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = raw.samples[p] / 255.0f;
    return img;
}

ScalarField read_grayscale(const std::filesystem::path& path) {
    Raw raw = decode_any(path, true);
    ScalarField f(raw.height, raw.width);
    const int ch = raw.channels;
    for (std::size_t p = 0; p < f.values.size(); ++p) {
        float acc = 0.0f;
        for (int c = 0; c < ch; ++c) acc += raw.samples[p * ch + c];
        f.values[p] = acc / (255.0f * ch);
    }
    return f;
}

std::vector<std::uint8_t> to_rgb8(const Image& image) {
    if (image.channels != 3) throw std::invalid_argument("to_rgb8: expected 3 channels");
    std::vector<std::uint8_t> out(image.data.size());
    std::transform(image.data.begin(), image.data.end(), out.begin(), quantize);
    return out;
}

Image from_rgb8(std::span<const std::uint8_t> bytes, int height, int width) {
    if (height <= 0 || width <= 0 || bytes.size() != static_cast<std::size_t>(height) * width * 3)
        throw std::invalid_argument("from_rgb8: byte count does not match shape");
    Image img(height, width, 3);
    std::transform(bytes.begin(), bytes.end(), img.data.begin(),
                   [](std::uint8_t b) { return b / 255.0f; });
    return img;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    return encode(to_rgb8(image), image.height, image.width, false);
}

std::vector<std::uint8_t> encode_png(const ScalarField& mask) {
    std::vector<std::uint8_t> samples(mask.values.size());
    std::transform(mask.values.begin(), mask.values.end(), samples.begin(), quantize);
    return encode(samples, mask.height, mask.width, true);
}

void write_png(const std::filesystem::path& path, const Image& image) {
    write_bytes(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const ScalarField& mask) {
    write_bytes(path, encode_png(mask));
}

}  // namespace mse
