#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dehaze/image.hpp"

namespace dehaze::io {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lossless raster containers we accept (png, tif/tiff, pgm/ppm/pnm, bmp).
bool is_lossless_raster(const std::filesystem::path& path);

/// Reads an 8- or 16-bit raster into unit range. Alpha is dropped; color
/// images come back as RGB.
Image read_image(const std::filesystem::path& path);

/// Writes with write-then-rename. `bit_depth` is 8 or 16.
void write_image(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

/// Depth or other scalar grid: a single-channel raster, or a whitespace
/// separated text grid (one row per line) for .txt / .dat / .csv paths.
Grid read_grid(const std::filesystem::path& path);

inline constexpr double kMax16 = 65535.0;

/// The 16-bit code a value is stored as, and the value decoding yields.
unsigned quantize16(double v);
inline double dequantize16(unsigned q) { return static_cast<double>(q) / kMax16; }

/// Round-trips every value through 16-bit storage.
Image quantized16(const Image& img);
TransmissionMap quantized16(const TransmissionMap& tr);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);
void write_bytes_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace dehaze::io
