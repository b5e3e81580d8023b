#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chamber::io {

/// Binary PGM (P5), 8-bit grayscale. Heatmaps are emitted in this format.
void write_pgm(const std::string& path, const uint8_t* pixels, int width, int height);

/// Binary PPM (P6), 8-bit RGB, for frame dumps.
void write_ppm(const std::string& path, const uint8_t* rgb, int width, int height);

std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height);

} // namespace chamber::io
