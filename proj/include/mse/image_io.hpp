// 8-bit image files. Intensities map to [0,1] by value / 255 on read and by
// rounding value * 255 on write. PNG is the primary format; binary PPM/PGM
// are accepted as input as well.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mse/imaging.hpp"

namespace mse {

/// Reads a PNG/PPM/PGM file as a 3-channel image (gray is replicated).
Image read_image(const std::filesystem::path& path);

/// Reads a PNG/PGM file as a single-channel field in [0,1].
ScalarField read_grayscale(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_png(const ScalarField& mask);
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const ScalarField& mask);

/// Interleaved 8-bit samples, row-major.
std::vector<std::uint8_t> to_rgb8(const Image& image);
Image from_rgb8(std::span<const std::uint8_t> bytes, int height, int width);

}  // namespace mse
