#include "wtacnn/filter_export.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wtacnn {

namespace {

// Contiguous channel bins: ceil(N/3), then the remainder split evenly
// (25 -> 9/8/8). Below three channels everything lands in one bin.
void channel_bins(int channels, int bin_begin[3], int bin_end[3]) {
    if (channels < 3) {
        for (int i = 0; i < 3; ++i) {
            bin_begin[i] = 0;
            bin_end[i] = channels;
        }
        return;
    }
    const int b0 = (channels + 2) / 3;
    const int rest = channels - b0;
    const int b1 = (rest + 1) / 2;
    bin_begin[0] = 0;
    bin_end[0] = b0;
    bin_begin[1] = b0;
    bin_end[1] = b0 + b1;
    bin_begin[2] = b0 + b1;
    bin_end[2] = channels;
}

}  // namespace

PpmImage render_filter_grid(const Network& net, int layer_index) {
    if (layer_index < 0 || layer_index >= static_cast<int>(net.spec.layers.size())) {
        throw std::invalid_argument("export_filters: layer index " +
                                    std::to_string(layer_index) + " out of range");
    }
    const LayerSpec& layer = net.spec.layers[layer_index];
    if (layer.kind != LayerKind::Conv) {
        throw std::invalid_argument("export_filters: layer " + std::to_string(layer_index) +
                                    " is " + layer_kind_name(layer.kind) +
                                    ", only conv layers can be rendered");
    }
    const Tensor& w = net.params[layer_index].weights;
    const int filters = w.n(), channels = w.c(), kh = w.h(), kw = w.w();

    int bin_begin[3], bin_end[3];
    channel_bins(channels, bin_begin, bin_end);

    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(filters))));
    const int rows = (filters + cols - 1) / cols;
    PpmImage img;
    img.width = cols * kw + (cols - 1);
    img.height = rows * kh + (rows - 1);
    img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);

    std::vector<double> planes(static_cast<std::size_t>(3) * kh * kw);
    for (int f = 0; f < filters; ++f) {
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (int plane = 0; plane < 3; ++plane) {
            const int cb = bin_begin[plane], ce = bin_end[plane];
            for (int y = 0; y < kh; ++y) {
                for (int x = 0; x < kw; ++x) {
                    double sum = 0.0;
                    for (int c = cb; c < ce; ++c) {
                        sum += w.at(f, c, y, x);
                    }
                    const double v = ce > cb ? sum / (ce - cb) : 0.0;
                    planes[(static_cast<std::size_t>(plane) * kh + y) * kw + x] = v;
                    if (first) {
                        lo = hi = v;
                        first = false;
                    } else {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
            }
        }
        const int tile_y = (f / cols) * (kh + 1);
        const int tile_x = (f % cols) * (kw + 1);
        const double range = hi - lo;
        for (int y = 0; y < kh; ++y) {
            for (int x = 0; x < kw; ++x) {
                for (int plane = 0; plane < 3; ++plane) {
                    const double v =
                        planes[(static_cast<std::size_t>(plane) * kh + y) * kw + x];
                    const int byte =
                        range > 0.0
                            ? static_cast<int>(std::lround((v - lo) / range * 255.0))
                            : 128;
                    img.rgb[(static_cast<std::size_t>(tile_y + y) * img.width +
                             (tile_x + x)) *
                                3 +
                            plane] = static_cast<std::uint8_t>(std::clamp(byte, 0, 255));
                }
            }
        }
    }
    return img;
}

void export_filters(const Network& net, int layer_index, const std::string& out_path) {
    write_ppm(out_path, render_filter_grid(net, layer_index));
}

}  // namespace wtacnn
