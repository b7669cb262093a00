#include "wtacnn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace wtacnn {

Tensor::Tensor(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
        throw std::invalid_argument("Tensor: negative extent in shape " + shape_str());
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
}

Tensor Tensor::filled(int n, int c, int h, int w, double value) {
    Tensor t(n, c, h, w);
    for (auto& v : t.data_) v = value;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    data_.assign(rows * cols, 0.0);
}

void ConvGeometry::validate(int in_h, int in_w) const {
    if (in_channels <= 0) {
        throw std::invalid_argument("ConvGeometry: in_channels must be positive, got " +
                                    std::to_string(in_channels));
    }
    if (out_channels <= 0) {
        throw std::invalid_argument("ConvGeometry: out_channels must be positive, got " +
                                    std::to_string(out_channels));
    }
    if (kernel_h <= 0 || kernel_w <= 0) {
        throw std::invalid_argument("ConvGeometry: kernel extent must be positive, got " +
                                    std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
    }
    if (stride <= 0) {
        throw std::invalid_argument("ConvGeometry: stride must be positive, got " +
                                    std::to_string(stride));
    }
    if (padding < 0) {
        throw std::invalid_argument("ConvGeometry: padding must be non-negative, got " +
                                    std::to_string(padding));
    }
    if (in_h + 2 * padding < kernel_h) {
        throw std::invalid_argument("ConvGeometry: kernel_h " + std::to_string(kernel_h) +
                                    " exceeds padded input height " +
                                    std::to_string(in_h + 2 * padding));
    }
    if (in_w + 2 * padding < kernel_w) {
        throw std::invalid_argument("ConvGeometry: kernel_w " + std::to_string(kernel_w) +
                                    " exceeds padded input width " +
                                    std::to_string(in_w + 2 * padding));
    }
}

}  // namespace wtacnn
