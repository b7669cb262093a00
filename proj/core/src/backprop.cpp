#include "wtacnn/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "wtacnn/kernels.hpp"

namespace wtacnn {

std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels) {
    const int n = logits.n();
    const int k = logits.c();
    if (logits.h() != 1 || logits.w() != 1) {
        throw std::invalid_argument("softmax_cross_entropy: logits must be Nx" +
                                    std::to_string(k) + "x1x1, got " + logits.shape_str());
    }
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("softmax_cross_entropy: " +
                                    std::to_string(labels.size()) + " labels for " +
                                    std::to_string(n) + " samples");
    }
    Tensor dlogits(n, k, 1, 1);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw std::invalid_argument("softmax_cross_entropy: label " +
                                        std::to_string(labels[i]) + " out of range [0, " +
                                        std::to_string(k) + ")");
        }
        const double* row = logits.data() + logits.index(i, 0, 0, 0);
        double maxv = row[0];
        for (int c = 1; c < k; ++c) maxv = std::max(maxv, row[c]);
        double denom = 0.0;
        for (int c = 0; c < k; ++c) denom += std::exp(row[c] - maxv);
        const double log_denom = std::log(denom);
        loss += (log_denom - (row[labels[i]] - maxv));
        double* drow = dlogits.data() + dlogits.index(i, 0, 0, 0);
        for (int c = 0; c < k; ++c) {
            const double softmax = std::exp(row[c] - maxv) / denom;
            drow[c] = (softmax - (c == labels[i] ? 1.0 : 0.0)) / n;
        }
    }
    return {loss / n, std::move(dlogits)};
}

Tensor relu_backward(const Tensor& upstream, const Tensor& forward_input) {
    if (!upstream.same_shape(forward_input)) {
        throw std::invalid_argument("relu_backward: upstream " + upstream.shape_str() +
                                    " does not match cached input " +
                                    forward_input.shape_str());
    }
    Tensor out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (forward_input.data()[i] <= 0.0) out.data()[i] = 0.0;
    }
    return out;
}

Tensor maxpool_backward(const Tensor& upstream, int in_n, int in_c, int in_h, int in_w,
                        const std::vector<std::size_t>& argmax) {
    if (argmax.size() != upstream.size()) {
        throw std::invalid_argument("maxpool_backward: argmax cache size " +
                                    std::to_string(argmax.size()) +
                                    " does not match upstream " + upstream.shape_str());
    }
    Tensor dinput(in_n, in_c, in_h, in_w);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        dinput.data()[argmax[i]] += upstream.data()[i];
    }
    return dinput;
}

FcBackwardResult fc_backward(const Tensor& upstream, const Tensor& input,
                             const Tensor& weights) {
    const int n = input.n();
    const int in_w = weights.c();
    const int out_w = weights.n();
    if (upstream.n() != n || upstream.c() != out_w) {
        throw std::invalid_argument("fc_backward: upstream " + upstream.shape_str() +
                                    " does not match weights " + weights.shape_str());
    }
    FcBackwardResult r;
    // dW = g^T x, accumulated over the batch in sample order.
    Matrix g(n, out_w), x(n, in_w);
    std::memcpy(g.data(), upstream.data(), upstream.size() * sizeof(double));
    std::memcpy(x.data(), input.data(), input.size() * sizeof(double));
    Matrix dw = matmul(transpose(g), x);
    r.dweights = Tensor(out_w, in_w, 1, 1);
    std::memcpy(r.dweights.data(), dw.data(), dw.size() * sizeof(double));

    r.dbias.assign(out_w, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < out_w; ++o) {
            r.dbias[o] += g.at(i, o);
        }
    }

    Matrix w(out_w, in_w);
    std::memcpy(w.data(), weights.data(), weights.size() * sizeof(double));
    Matrix dx = matmul(g, w);
    r.dinput = Tensor(n, in_w, 1, 1);
    std::memcpy(r.dinput.data(), dx.data(), dx.size() * sizeof(double));
    return r;
}

ConvBackwardResult conv_backward(const Tensor& upstream, const Tensor& input,
                                 const Tensor& weights, const ConvGeometry& g,
                                 bool need_dinput) {
    const int oh = g.out_h(input.h());
    const int ow = g.out_w(input.w());
    if (upstream.n() != input.n() || upstream.c() != g.out_channels ||
        upstream.h() != oh || upstream.w() != ow) {
        throw std::invalid_argument("conv_backward: upstream " + upstream.shape_str() +
                                    " does not match forward output shape");
    }
    const std::size_t positions = static_cast<std::size_t>(oh) * ow;
    const std::size_t d = static_cast<std::size_t>(g.patch_dim());
    const std::size_t out_c = static_cast<std::size_t>(g.out_channels);

    Matrix wflat(out_c, d);
    std::memcpy(wflat.data(), weights.data(), weights.size() * sizeof(double));

    ConvBackwardResult r;
    r.dweights = Tensor(g.out_channels, g.in_channels, g.kernel_h, g.kernel_w);
    if (need_dinput) {
        r.dinput = Tensor(input.n(), input.c(), input.h(), input.w());
    }

    Matrix patches(positions, d);
    Matrix gmat(positions, out_c);
    Matrix dw_acc(out_c, d);
    for (int n = 0; n < input.n(); ++n) {
        // This sample's patches, positions-major.
        {
            std::size_t row = 0;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++row) {
                    double* dst = patches.row(row);
                    for (int ic = 0; ic < g.in_channels; ++ic) {
                        for (int ky = 0; ky < g.kernel_h; ++ky) {
                            const int iy = oy * g.stride - g.padding + ky;
                            for (int kx = 0; kx < g.kernel_w; ++kx) {
                                const int ix = ox * g.stride - g.padding + kx;
                                const bool inside = iy >= 0 && iy < input.h() && ix >= 0 &&
                                                    ix < input.w();
                                *dst++ = inside ? input.at(n, ic, iy, ix) : 0.0;
                            }
                        }
                    }
                }
            }
        }
        for (int oc = 0; oc < g.out_channels; ++oc) {
            const double* urow = upstream.data() + upstream.index(n, oc, 0, 0);
            for (std::size_t p = 0; p < positions; ++p) {
                gmat.at(p, static_cast<std::size_t>(oc)) = urow[p];
            }
        }
        Matrix dw = matmul(transpose(gmat), patches);
        for (std::size_t i = 0; i < dw.size(); ++i) {
            dw_acc.data()[i] += dw.data()[i];
        }
        if (need_dinput) {
            Matrix dpatches = matmul(gmat, wflat);
            // Scatter-add patch gradients back to input coordinates.
            std::size_t row = 0;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++row) {
                    const double* src = dpatches.row(row);
                    for (int ic = 0; ic < g.in_channels; ++ic) {
                        for (int ky = 0; ky < g.kernel_h; ++ky) {
                            const int iy = oy * g.stride - g.padding + ky;
                            for (int kx = 0; kx < g.kernel_w; ++kx) {
                                const int ix = ox * g.stride - g.padding + kx;
                                const double v = *src++;
                                if (iy < 0 || iy >= input.h() || ix < 0 || ix >= input.w()) {
                                    continue;
                                }
                                r.dinput.at(n, ic, iy, ix) += v;
                            }
                        }
                    }
                }
            }
        }
    }
    std::memcpy(r.dweights.data(), dw_acc.data(), dw_acc.size() * sizeof(double));
    return r;
}

namespace {

[[noreturn]] void backward_error(std::size_t layer, const std::string& what) {
    throw std::runtime_error("network_backward: layer " + std::to_string(layer) + ": " +
                             what);
}

}  // namespace

GradientSet network_backward(const Network& net, const Tensor& input,
                             const ForwardTrace& trace, const Tensor& dlogits) {
    const std::size_t n_layers = net.spec.layers.size();
    if (trace.outputs.size() != n_layers) {
        throw std::invalid_argument("network_backward: trace has " +
                                    std::to_string(trace.outputs.size()) +
                                    " cached outputs for " + std::to_string(n_layers) +
                                    " layers");
    }
    GradientSet grads;
    grads.weight_grads.resize(n_layers);
    grads.bias_grads.resize(n_layers);
    grads.branch_weight_grads.resize(n_layers);

    // Nothing below the shallowest trainable parametric layer is visited.
    int stop_layer = static_cast<int>(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (net.has_params(static_cast<int>(i)) && net.trainable[i]) {
            stop_layer = static_cast<int>(i);
            break;
        }
    }
    if (stop_layer == static_cast<int>(n_layers)) {
        return grads;  // fully frozen network
    }

    Tensor grad = dlogits;
    for (int li = static_cast<int>(n_layers) - 1; li >= stop_layer; --li) {
        const LayerSpec& layer = net.spec.layers[li];
        const Tensor& layer_input = (li == 0) ? input : trace.outputs[li - 1];
        const bool need_dinput = li > stop_layer;
        switch (layer.kind) {
            case LayerKind::FullyConnected: {
                FcBackwardResult r = fc_backward(grad, layer_input, net.params[li].weights);
                if (net.trainable[li]) {
                    grads.weight_grads[li] = std::move(r.dweights);
                    grads.bias_grads[li] = std::move(r.dbias);
                }
                grad = std::move(r.dinput);
                break;
            }
            case LayerKind::Conv: {
                ConvBackwardResult r =
                    conv_backward(grad, layer_input, net.params[li].weights, layer.conv,
                                  need_dinput);
                if (net.trainable[li]) {
                    grads.weight_grads[li] = std::move(r.dweights);
                }
                if (need_dinput) grad = std::move(r.dinput);
                break;
            }
            case LayerKind::InceptionConv: {
                Tensor dinput;
                if (need_dinput) {
                    dinput = Tensor(layer_input.n(), layer_input.c(), layer_input.h(),
                                    layer_input.w());
                }
                int c_off = 0;
                std::vector<Tensor> branch_grads;
                const std::size_t plane =
                    static_cast<std::size_t>(grad.h()) * grad.w();
                for (std::size_t b = 0; b < layer.branches.size(); ++b) {
                    const InceptionBranch& br = layer.branches[b];
                    ConvGeometry g{layer_input.c(), br.filters, br.kernel, br.kernel, 1,
                                   br.kernel / 2};
                    Tensor slice(grad.n(), br.filters, grad.h(), grad.w());
                    for (int n = 0; n < grad.n(); ++n) {
                        std::memcpy(slice.data() + slice.index(n, 0, 0, 0),
                                    grad.data() + grad.index(n, c_off, 0, 0),
                                    static_cast<std::size_t>(br.filters) * plane *
                                        sizeof(double));
                    }
                    ConvBackwardResult r =
                        conv_backward(slice, layer_input, net.params[li].branch_weights[b],
                                      g, need_dinput);
                    branch_grads.push_back(std::move(r.dweights));
                    if (need_dinput) {
                        for (std::size_t i = 0; i < dinput.size(); ++i) {
                            dinput.data()[i] += r.dinput.data()[i];
                        }
                    }
                    c_off += br.filters;
                }
                if (net.trainable[li]) {
                    grads.branch_weight_grads[li] = std::move(branch_grads);
                }
                if (need_dinput) grad = std::move(dinput);
                break;
            }
            case LayerKind::ReLU:
                grad = relu_backward(grad, layer_input);
                break;
            case LayerKind::Wta:
                backward_error(li,
                               "WTA has no usable gradient; freeze the layers below it");
            case LayerKind::MaxPool:
                grad = maxpool_backward(grad, layer_input.n(), layer_input.c(),
                                        layer_input.h(), layer_input.w(),
                                        trace.pool_argmax[li]);
                break;
            case LayerKind::Flatten: {
                Tensor reshaped(layer_input.n(), layer_input.c(), layer_input.h(),
                                layer_input.w());
                std::memcpy(reshaped.data(), grad.data(), grad.size() * sizeof(double));
                grad = std::move(reshaped);
                break;
            }
        }
    }
    return grads;
}

void sgd_apply(Network& net, const GradientSet& grads, double lr) {
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
        if (!net.trainable[li]) continue;
        if (!grads.weight_grads[li].empty()) {
            Tensor& w = net.params[li].weights;
            const Tensor& g = grads.weight_grads[li];
            if (!w.same_shape(g)) {
                throw std::invalid_argument("sgd_apply: gradient shape " + g.shape_str() +
                                            " does not match weights " + w.shape_str() +
                                            " at layer " + std::to_string(li));
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                w.data()[i] -= lr * g.data()[i];
            }
        }
        if (!grads.bias_grads[li].empty()) {
            std::vector<double>& b = net.params[li].bias;
            for (std::size_t i = 0; i < b.size(); ++i) {
                b[i] -= lr * grads.bias_grads[li][i];
            }
        }
        if (!grads.branch_weight_grads[li].empty()) {
            for (std::size_t bi = 0; bi < net.params[li].branch_weights.size(); ++bi) {
                Tensor& w = net.params[li].branch_weights[bi];
                const Tensor& g = grads.branch_weight_grads[li][bi];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    w.data()[i] -= lr * g.data()[i];
                }
            }
        }
    }
}

}  // namespace wtacnn
