#pragma once

#include <string>

#include "wtacnn/network.hpp"
#include "wtacnn/ppm.hpp"

namespace wtacnn {

/// Renders a conv layer's filter bank as a near-square grid of RGB tiles with
/// 1-pixel black separators. Input channels are split into three contiguous
/// bins (sizes ceil(N/3), then a balanced remainder) averaged into the R, G
/// and B planes; with fewer than three input channels all planes equal the
/// channel mean, i.e. grayscale. Each tile is min-max normalized on its own;
/// a constant tile maps to mid-gray 128.
PpmImage render_filter_grid(const Network& net, int layer_index);

void export_filters(const Network& net, int layer_index, const std::string& out_path);

}  // namespace wtacnn
