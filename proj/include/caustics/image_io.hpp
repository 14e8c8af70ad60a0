#pragma once

#include <filesystem>

#include "caustics/image.hpp"

namespace caustics {

/// Reads PNG or JPEG as 8-bit RGB (3 channels) regardless of the file's
/// own channel layout.
ImageU8 read_image(const std::filesystem::path& path);
/// Reads an 8-bit single-channel raster (grayscale conversion if needed).
ImageU8 read_gray(const std::filesystem::path& path);
/// Writes an 8-bit PNG (1 or 3 channels).
void write_png(const std::filesystem::path& path, const ImageU8& img);
/// 16-bit single-channel PNG.
void write_png16(const std::filesystem::path& path, const Image<std::uint16_t>& img);
Image<std::uint16_t> read_png16(const std::filesystem::path& path);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Little-endian single-channel PFM, rows stored bottom to top.
void write_pfm(const std::filesystem::path& path, const ImageF& img);
ImageF read_pfm(const std::filesystem::path& path);

}  // namespace caustics
