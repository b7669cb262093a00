#include "wtacnn/ppm.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace wtacnn {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
    for (;;) {
        const int c = in.peek();
        if (c == EOF) {
            throw std::runtime_error(path + ": truncated PPM header");
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) {
        throw std::runtime_error(path + ": malformed PPM header");
    }
    return value;
}

}  // namespace

PpmImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '6' && kind != '5')) {
        throw std::runtime_error(path + ": not a binary PPM/PGM file (P6 or P5)");
    }
    const bool gray = kind == '5';
    PpmImage img;
    img.width = next_header_int(in, path);
    img.height = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (img.width <= 0 || img.height <= 0) {
        throw std::runtime_error(path + ": non-positive PPM dimensions");
    }
    if (maxval != 255) {
        throw std::runtime_error(path + ": only maxval 255 is supported, got " +
                                 std::to_string(maxval));
    }
    in.get();  // single whitespace after maxval
    const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
    std::vector<std::uint8_t> raw(pixels * (gray ? 1 : 3));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) {
        throw std::runtime_error(path + ": truncated PPM pixel data");
    }
    img.rgb.resize(pixels * 3);
    if (gray) {
        for (std::size_t i = 0; i < pixels; ++i) {
            img.rgb[i * 3] = img.rgb[i * 3 + 1] = img.rgb[i * 3 + 2] = raw[i];
        }
    } else {
        img.rgb = std::move(raw);
    }
    return img;
}

void write_ppm(const std::string& path, const PpmImage& image) {
    if (image.rgb.size() !=
        static_cast<std::size_t>(image.width) * image.height * 3) {
        throw std::invalid_argument("write_ppm: pixel buffer does not match " +
                                    std::to_string(image.width) + "x" +
                                    std::to_string(image.height));
    }
    const std::string partial = path + ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + partial);
        }
        out << "P6\n" << image.width << " " << image.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(image.rgb.data()),
                  static_cast<std::streamsize>(image.rgb.size()));
        if (!out) {
            throw std::runtime_error("short write on " + partial);
        }
    }
    std::filesystem::rename(partial, path);
}

}  // namespace wtacnn
