#pragma once

#include <cstddef>
#include <vector>

#include "wtacnn/tensor.hpp"

namespace wtacnn {

/// a[m x k] * b[k x n] -> [m x n]. Each output element accumulates over k in
/// ascending order, so results are reproducible regardless of internal
/// parallelism.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Extracts every receptive-field patch of `input` under `geom` as one row.
/// Rows are ordered sample-major, then output row, then output column; within
/// a row the layout is channel-major, then kernel row, then kernel column.
/// conv2d(input, w) == im2col(input) * flattened-weights by construction.
Matrix im2col(const Tensor& input, const ConvGeometry& geom);

/// Adjoint of im2col: scatter-adds patch rows back into an image tensor.
/// Used by conv_backward to turn patch gradients into an input gradient.
Tensor col2im(const Matrix& cols, int n, int in_h, int in_w, const ConvGeometry& geom);

/// 2-D cross-correlation. `weights` is [outC x inC x kh x kw]; `bias` is
/// either empty or one value per output channel. Inputs with mostly-zero
/// values (WTA codes) are detected and routed through a sparse path that
/// produces the same sums.
Tensor conv2d(const Tensor& input, const Tensor& weights,
              const std::vector<double>& bias, const ConvGeometry& geom);

struct PoolResult {
    Tensor output;
    /// Flat index into the input tensor of each output cell's maximum.
    /// Ties resolve to the first position in row-major window scan order.
    std::vector<std::size_t> argmax;
};

PoolResult maxpool(const Tensor& input, int window_h, int window_w, int stride);

}  // namespace wtacnn
