#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wtacnn {

/// 8-bit RGB raster. read_ppm also accepts P5 (grayscale), expanding it to
/// three equal channels.
struct PpmImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // width*height*3, row-major
};

PpmImage read_ppm(const std::string& path);

/// Writes a binary P6 file. The file appears atomically: data goes to
/// `path.partial` first and is renamed on success.
void write_ppm(const std::string& path, const PpmImage& image);

}  // namespace wtacnn
