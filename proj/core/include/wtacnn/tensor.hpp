#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace wtacnn {

/// Dense rank-4 tensor of 64-bit floats in row-major NCHW order. This is the
/// universal value type of the library; operations treat tensors as immutable
/// values and return fresh ones.
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w);

    static Tensor filled(int n, int c, int h, int w, double value);

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int n, int c, int y, int x) {
        return data_[index(n, c, y, x)];
    }
    double at(int n, int c, int y, int x) const {
        return data_[index(n, c, y, x)];
    }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& other) const {
        return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
    }

    bool all_finite() const;

    std::string shape_str() const;  // e.g. "2x3x8x8"

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

/// Dense row-major matrix, the workhorse of im2col-based convolution and the
/// fully-connected layers.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Geometry of a 2-D cross-correlation: channel contract, kernel extent,
/// stride and zero-padding.
struct ConvGeometry {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;

    int out_h(int in_h) const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
    int out_w(int in_w) const { return (in_w + 2 * padding - kernel_w) / stride + 1; }

    /// Flattened filter dimension (in_channels * kernel_h * kernel_w).
    int patch_dim() const { return in_channels * kernel_h * kernel_w; }

    /// Throws std::invalid_argument naming the offending dimension when the
    /// geometry cannot produce at least one output position on (in_h, in_w).
    void validate(int in_h, int in_w) const;
};

}  // namespace wtacnn
