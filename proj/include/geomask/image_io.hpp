#pragma once

#include <filesystem>

#include "geomask/raster.hpp"

namespace geomask {

enum class BitDepth { Eight = 8, Sixteen = 16 };

/// Reads an 8- or 16-bit grayscale PNG or a binary PGM (P5). Samples are
/// scaled into [0, 1] by 1/255 or 1/65535.
GrayImage read_image(const std::filesystem::path& path);

/// Bit depth stored in an image file without decoding the pixels.
BitDepth read_bit_depth(const std::filesystem::path& path);

/// Format is chosen by extension: `.pgm` writes P5, anything else PNG.
void write_image(const GrayImage& img, const std::filesystem::path& path, BitDepth depth = BitDepth::Eight);

/// Masks are stored as 8-bit images with 0 / 255.
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);

}  // namespace geomask
