#include "wtacnn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

namespace wtacnn {

namespace {

// Cache blocking for matmul_into. Accumulation stays k-ascending per output
// element, so blocking never changes results.
constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockJ = 512;

void matmul_into(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t m = a.rows(), kdim = a.cols(), n = b.cols();
    std::memset(out.data(), 0, out.size() * sizeof(double));
    for (std::size_t j0 = 0; j0 < n; j0 += kBlockJ) {
        const std::size_t j1 = std::min(j0 + kBlockJ, n);
        for (std::size_t k0 = 0; k0 < kdim; k0 += kBlockK) {
            const std::size_t k1 = std::min(k0 + kBlockK, kdim);
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
                const double* arow = a.row(static_cast<std::size_t>(i));
                double* orow = out.row(static_cast<std::size_t>(i));
                for (std::size_t k = k0; k < k1; ++k) {
                    const double av = arow[k];
                    if (av == 0.0) continue;  // WTA codes make patch rows mostly zero
                    const double* brow = b.row(k);
                    for (std::size_t j = j0; j < j1; ++j) {
                        orow[j] += av * brow[j];
                    }
                }
            }
        }
    }
}

// One sample's receptive-field patches, row-major [outH*outW x D].
void im2col_sample(const Tensor& input, int n, const ConvGeometry& g, double* rows) {
    const int oh = g.out_h(input.h());
    const int ow = g.out_w(input.w());
    const int d = g.patch_dim();
    double* dst = rows;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ic = 0; ic < g.in_channels; ++ic) {
                for (int ky = 0; ky < g.kernel_h; ++ky) {
                    const int iy = oy * g.stride - g.padding + ky;
                    for (int kx = 0; kx < g.kernel_w; ++kx) {
                        const int ix = ox * g.stride - g.padding + kx;
                        const bool inside =
                            iy >= 0 && iy < input.h() && ix >= 0 && ix < input.w();
                        *dst++ = inside ? input.at(n, ic, iy, ix) : 0.0;
                    }
                }
            }
        }
    }
    (void)d;
}

void check_conv_args(const Tensor& input, const Tensor& weights,
                     const std::vector<double>& bias, const ConvGeometry& g) {
    g.validate(input.h(), input.w());
    if (input.c() != g.in_channels) {
        throw std::invalid_argument("conv2d: input channels (" + std::to_string(input.c()) +
                                    ") do not match geometry in_channels (" +
                                    std::to_string(g.in_channels) + ")");
    }
    if (weights.n() != g.out_channels || weights.c() != g.in_channels ||
        weights.h() != g.kernel_h || weights.w() != g.kernel_w) {
        throw std::invalid_argument(
            "conv2d: weight shape " + weights.shape_str() + " does not match geometry " +
            std::to_string(g.out_channels) + "x" + std::to_string(g.in_channels) + "x" +
            std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w));
    }
    if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.out_channels)) {
        throw std::invalid_argument("conv2d: bias size (" + std::to_string(bias.size()) +
                                    ") does not match out_channels (" +
                                    std::to_string(g.out_channels) + ")");
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                    std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    }
    Matrix out(a.rows(), b.cols());
    matmul_into(a, b, out);
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out.at(c, r) = row[c];
        }
    }
    return out;
}

Matrix im2col(const Tensor& input, const ConvGeometry& g) {
    g.validate(input.h(), input.w());
    if (input.c() != g.in_channels) {
        throw std::invalid_argument("im2col: input channels (" + std::to_string(input.c()) +
                                    ") do not match geometry in_channels (" +
                                    std::to_string(g.in_channels) + ")");
    }
    const std::size_t per_sample =
        static_cast<std::size_t>(g.out_h(input.h())) * g.out_w(input.w());
    Matrix m(per_sample * input.n(), static_cast<std::size_t>(g.patch_dim()));
    for (int n = 0; n < input.n(); ++n) {
        im2col_sample(input, n, g, m.row(per_sample * n));
    }
    return m;
}

Tensor col2im(const Matrix& cols, int n, int in_h, int in_w, const ConvGeometry& g) {
    const int oh = g.out_h(in_h);
    const int ow = g.out_w(in_w);
    const std::size_t per_sample = static_cast<std::size_t>(oh) * ow;
    if (cols.rows() != per_sample * n ||
        cols.cols() != static_cast<std::size_t>(g.patch_dim())) {
        throw std::invalid_argument("col2im: matrix shape does not match geometry");
    }
    Tensor out(n, g.in_channels, in_h, in_w);
    std::size_t row = 0;
    for (int b = 0; b < n; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++row) {
                const double* src = cols.row(row);
                for (int ic = 0; ic < g.in_channels; ++ic) {
                    for (int ky = 0; ky < g.kernel_h; ++ky) {
                        const int iy = oy * g.stride - g.padding + ky;
                        for (int kx = 0; kx < g.kernel_w; ++kx) {
                            const int ix = ox * g.stride - g.padding + kx;
                            const double v = *src++;
                            if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
                            out.at(b, ic, iy, ix) += v;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights,
              const std::vector<double>& bias, const ConvGeometry& g) {
    check_conv_args(input, weights, bias, g);
    const int oh = g.out_h(input.h());
    const int ow = g.out_w(input.w());
    const std::size_t positions = static_cast<std::size_t>(oh) * ow;
    const std::size_t d = static_cast<std::size_t>(g.patch_dim());

    // Weight data is already [outC x D] row-major; transpose once so the GEMM
    // streams contiguous filter responses.
    Matrix wt(d, static_cast<std::size_t>(g.out_channels));
    for (std::size_t oc = 0; oc < static_cast<std::size_t>(g.out_channels); ++oc) {
        const double* wrow = weights.data() + oc * d;
        for (std::size_t k = 0; k < d; ++k) {
            wt.at(k, oc) = wrow[k];
        }
    }

    Tensor out(input.n(), g.out_channels, oh, ow);
    Matrix patches(positions, d);
    Matrix prod(positions, static_cast<std::size_t>(g.out_channels));
    for (int n = 0; n < input.n(); ++n) {
        im2col_sample(input, n, g, patches.data());
        matmul_into(patches, wt, prod);
        for (int oc = 0; oc < g.out_channels; ++oc) {
            double* orow = out.data() + out.index(n, oc, 0, 0);
            const double b = bias.empty() ? 0.0 : bias[oc];
            for (std::size_t p = 0; p < positions; ++p) {
                orow[p] = prod.at(p, static_cast<std::size_t>(oc)) + b;
            }
        }
    }
    return out;
}

PoolResult maxpool(const Tensor& input, int window_h, int window_w, int stride) {
    if (stride < 1) {
        throw std::invalid_argument("maxpool: stride must be >= 1, got " +
                                    std::to_string(stride));
    }
    if (window_h < 1 || window_w < 1 || window_h > input.h() || window_w > input.w()) {
        throw std::invalid_argument("maxpool: window " + std::to_string(window_h) + "x" +
                                    std::to_string(window_w) + " does not fit input " +
                                    input.shape_str());
    }
    const int oh = (input.h() - window_h) / stride + 1;
    const int ow = (input.w() - window_w) / stride + 1;
    PoolResult r;
    r.output = Tensor(input.n(), input.c(), oh, ow);
    r.argmax.resize(r.output.size());
    for (int n = 0; n < input.n(); ++n) {
        for (int c = 0; c < input.c(); ++c) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (int wy = 0; wy < window_h; ++wy) {
                        const int iy = oy * stride + wy;
                        const double* in_row = input.data() + input.index(n, c, iy, 0);
                        for (int wx = 0; wx < window_w; ++wx) {
                            const int ix = ox * stride + wx;
                            if (in_row[ix] > best) {
                                best = in_row[ix];
                                best_idx = input.index(n, c, iy, ix);
                            }
                        }
                    }
                    r.output.at(n, c, oy, ox) = best;
                    r.argmax[r.output.index(n, c, oy, ox)] = best_idx;
                }
            }
        }
    }
    return r;
}

}  // namespace wtacnn
