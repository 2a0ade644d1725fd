#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace rmb {

/// Interleaved 8-bit image, channels = 1 (gray) or 3 (RGB).
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Decodes any PNG and converts it to `channels` (1 or 3) 8-bit channels.
/// Throws with the file name when the file cannot be decoded.
Image8 read_png(const std::filesystem::path& path, std::size_t channels);

std::vector<std::uint8_t> encode_png(const Image8& image);
/// Atomic write of encode_png(image).
void write_png(const std::filesystem::path& path, const Image8& image);

/// Planar [channels, out_h, out_w] values in [0, 1], resampled bilinearly
/// with pixel-centre alignment (same-size input is copied unchanged).
std::vector<double> to_planar_resized(const Image8& image, std::size_t out_height, std::size_t out_width);

}  // namespace rmb
