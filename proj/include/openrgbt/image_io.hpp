#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "openrgbt/core.hpp"

namespace openrgbt {

/// 8-bit image exactly as stored, 1 to 4 channels.
struct DecodedImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> samples;
};

/// Decodes any PNG to 8 bits per channel. Palette images expand to RGB(A)
/// unless `palette_as_index` is set, in which case the raw indices are kept
/// as a single channel (label maps are often stored that way).
DecodedImage decode_png_any(std::span<const std::uint8_t> bytes, bool palette_as_index = false);
DecodedImage read_png_any(const std::filesystem::path& path, bool palette_as_index = false);

/// Reads a PNG as a 1- or 3-channel raster; alpha is dropped.
Raster read_png(const std::filesystem::path& path);
Raster decode_png(std::span<const std::uint8_t> bytes);

/// Single-channel label map; palette indices are preserved, colour label
/// images are rejected.
Raster read_label_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Raster& raster);
void write_png(const std::filesystem::path& path, const Raster& raster);

Raster drop_alpha(const DecodedImage& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace openrgbt
