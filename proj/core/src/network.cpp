#include "wtacnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "wtacnn/kernels.hpp"
#include "wtacnn/rng.hpp"
#include "wtacnn/wta.hpp"

namespace wtacnn {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::InceptionConv: return "inception";
        case LayerKind::FullyConnected: return "fc";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Wta: return "wta";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerSpec LayerSpec::make_conv(int filters, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.conv = ConvGeometry{0, filters, kernel, kernel, stride, padding};
    return s;
}

LayerSpec LayerSpec::make_inception(std::vector<InceptionBranch> branches) {
    LayerSpec s;
    s.kind = LayerKind::InceptionConv;
    s.branches = std::move(branches);
    return s;
}

LayerSpec LayerSpec::make_fc(int out_width) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.fc_out = out_width;
    return s;
}

LayerSpec LayerSpec::make_relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::make_wta(bool keep_value) {
    LayerSpec s;
    s.kind = LayerKind::Wta;
    s.wta_keep_value = keep_value;
    return s;
}

LayerSpec LayerSpec::make_maxpool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.pool_window = window;
    s.pool_stride = stride;
    return s;
}

LayerSpec LayerSpec::make_flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

int LayerSpec::output_units() const {
    switch (kind) {
        case LayerKind::Conv: return conv.out_channels;
        case LayerKind::InceptionConv: {
            int total = 0;
            for (const auto& b : branches) total += b.filters;
            return total;
        }
        case LayerKind::FullyConnected: return fc_out;
        default: return 0;
    }
}

std::string Shape3::str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

namespace {

[[noreturn]] void spec_error(int layer, LayerKind kind, const std::string& what) {
    throw std::invalid_argument("NetworkSpec: layer " + std::to_string(layer) + " (" +
                                layer_kind_name(kind) + "): " + what);
}

}  // namespace

std::vector<Shape3> NetworkSpec::validate() {
    if (input.c <= 0 || input.h <= 0 || input.w <= 0) {
        throw std::invalid_argument("NetworkSpec: input shape " + input.str() +
                                    " has a non-positive extent");
    }
    std::vector<Shape3> shapes;
    shapes.reserve(layers.size() + 1);
    shapes.push_back(input);
    Shape3 cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        LayerSpec& layer = layers[i];
        const int li = static_cast<int>(i);
        switch (layer.kind) {
            case LayerKind::Conv: {
                layer.conv.in_channels = cur.c;
                try {
                    layer.conv.validate(cur.h, cur.w);
                } catch (const std::exception& e) {
                    spec_error(li, layer.kind, e.what());
                }
                cur = Shape3{layer.conv.out_channels, layer.conv.out_h(cur.h),
                             layer.conv.out_w(cur.w)};
                break;
            }
            case LayerKind::InceptionConv: {
                if (layer.branches.empty()) {
                    spec_error(li, layer.kind, "no branches");
                }
                layer.conv.in_channels = cur.c;
                int total = 0;
                for (const auto& b : layer.branches) {
                    if (b.kernel <= 0 || b.filters <= 0) {
                        spec_error(li, layer.kind, "branch with non-positive extent");
                    }
                    if (b.kernel % 2 == 0) {
                        spec_error(li, layer.kind,
                                   "even kernel " + std::to_string(b.kernel) +
                                       " cannot be same-padded");
                    }
                    ConvGeometry g{cur.c, b.filters, b.kernel, b.kernel, 1, b.kernel / 2};
                    try {
                        g.validate(cur.h, cur.w);
                    } catch (const std::exception& e) {
                        spec_error(li, layer.kind, e.what());
                    }
                    total += b.filters;
                }
                cur = Shape3{total, cur.h, cur.w};
                break;
            }
            case LayerKind::FullyConnected: {
                if (cur.h != 1 || cur.w != 1) {
                    spec_error(li, layer.kind,
                               "input " + cur.str() + " is not flattened");
                }
                if (layer.fc_out <= 0) {
                    spec_error(li, layer.kind, "non-positive output width");
                }
                layer.fc_in = cur.c;
                cur = Shape3{layer.fc_out, 1, 1};
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Wta:
                break;
            case LayerKind::MaxPool: {
                if (layer.pool_stride < 1 || layer.pool_window < 1 ||
                    layer.pool_window > cur.h || layer.pool_window > cur.w) {
                    spec_error(li, layer.kind,
                               "window " + std::to_string(layer.pool_window) +
                                   " stride " + std::to_string(layer.pool_stride) +
                                   " does not fit input " + cur.str());
                }
                cur = Shape3{cur.c, (cur.h - layer.pool_window) / layer.pool_stride + 1,
                             (cur.w - layer.pool_window) / layer.pool_stride + 1};
                break;
            }
            case LayerKind::Flatten:
                cur = Shape3{cur.c * cur.h * cur.w, 1, 1};
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

int NetworkSpec::output_width() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        if (it->kind == LayerKind::FullyConnected) return it->fc_out;
    }
    return 0;
}

bool Network::has_params(int layer) const {
    const LayerKind k = spec.layers[layer].kind;
    return k == LayerKind::Conv || k == LayerKind::InceptionConv ||
           k == LayerKind::FullyConnected;
}

bool Network::is_competitive(int layer) const {
    const LayerKind k = spec.layers[layer].kind;
    if (k != LayerKind::Conv && k != LayerKind::InceptionConv) return false;
    const std::size_t next = static_cast<std::size_t>(layer) + 1;
    return next < spec.layers.size() && spec.layers[next].kind == LayerKind::Wta;
}

int Network::unit_count(int layer) const { return spec.layers[layer].output_units(); }

namespace {

Tensor lecun_normal(int n, int c, int h, int w, int fan_in, Rng& rng) {
    Tensor t(n, c, h, w);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t.data()[i] = rng.normal(0.0, stddev);
    }
    return t;
}

}  // namespace

Network build_network(NetworkSpec spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec = std::move(spec);
    net.params.resize(net.spec.layers.size());
    net.trainable.assign(net.spec.layers.size(), true);
    Rng rng(seed);
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerSpec& layer = net.spec.layers[i];
        switch (layer.kind) {
            case LayerKind::Conv: {
                const ConvGeometry& g = layer.conv;
                net.params[i].weights =
                    lecun_normal(g.out_channels, g.in_channels, g.kernel_h, g.kernel_w,
                                 g.patch_dim(), rng);
                break;
            }
            case LayerKind::InceptionConv: {
                for (const auto& b : layer.branches) {
                    const int fan_in = b.kernel * b.kernel * layer.conv.in_channels;
                    net.params[i].branch_weights.push_back(lecun_normal(
                        b.filters, layer.conv.in_channels, b.kernel, b.kernel, fan_in, rng));
                }
                break;
            }
            case LayerKind::FullyConnected: {
                net.params[i].weights = lecun_normal(layer.fc_out, layer.fc_in, 1, 1,
                                                     layer.fc_in, rng);
                net.params[i].bias.assign(layer.fc_out, 0.0);
                break;
            }
            default:
                break;
        }
    }
    return net;
}

namespace {

Tensor fc_forward(const Tensor& input, const LayerSpec& layer, const LayerParams& p) {
    if (input.h() != 1 || input.w() != 1 || input.c() != layer.fc_in) {
        throw std::invalid_argument("forward: fc layer expected input " +
                                    std::to_string(layer.fc_in) + "x1x1, got " +
                                    input.shape_str());
    }
    // Input data is already [N x in] row-major; weights are [out x in].
    Matrix x(input.n(), layer.fc_in);
    std::memcpy(x.data(), input.data(), input.size() * sizeof(double));
    Matrix w(layer.fc_out, layer.fc_in);
    std::memcpy(w.data(), p.weights.data(), p.weights.size() * sizeof(double));
    Matrix prod = matmul(x, transpose(w));
    Tensor out(input.n(), layer.fc_out, 1, 1);
    for (int n = 0; n < input.n(); ++n) {
        for (int o = 0; o < layer.fc_out; ++o) {
            out.at(n, o, 0, 0) = prod.at(n, o) + p.bias[o];
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    }
    return out;
}

Tensor inception_forward(const Tensor& input, const LayerSpec& layer, const LayerParams& p) {
    std::vector<Tensor> outs;
    outs.reserve(layer.branches.size());
    int total_c = 0;
    for (std::size_t b = 0; b < layer.branches.size(); ++b) {
        const InceptionBranch& br = layer.branches[b];
        ConvGeometry g{input.c(), br.filters, br.kernel, br.kernel, 1, br.kernel / 2};
        outs.push_back(conv2d(input, p.branch_weights[b], {}, g));
        total_c += br.filters;
    }
    Tensor out(input.n(), total_c, outs[0].h(), outs[0].w());
    const std::size_t plane = static_cast<std::size_t>(out.h()) * out.w();
    for (int n = 0; n < input.n(); ++n) {
        int c_off = 0;
        for (const Tensor& t : outs) {
            std::memcpy(out.data() + out.index(n, c_off, 0, 0),
                        t.data() + t.index(n, 0, 0, 0),
                        static_cast<std::size_t>(t.c()) * plane * sizeof(double));
            c_off += t.c();
        }
    }
    return out;
}

}  // namespace

ForwardTrace forward(const Network& net, const Tensor& input, RunMode mode) {
    (void)mode;  // WTA and ReLU behave identically in Train and Eval
    if (input.c() != net.spec.input.c || input.h() != net.spec.input.h ||
        input.w() != net.spec.input.w) {
        throw std::invalid_argument("forward: input shape " + input.shape_str() +
                                    " does not match network input " +
                                    net.spec.input.str());
    }
    ForwardTrace trace;
    trace.outputs.reserve(net.spec.layers.size());
    trace.pool_argmax.resize(net.spec.layers.size());
    const Tensor* cur = &input;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerSpec& layer = net.spec.layers[i];
        switch (layer.kind) {
            case LayerKind::Conv:
                trace.outputs.push_back(conv2d(*cur, net.params[i].weights, {}, layer.conv));
                break;
            case LayerKind::InceptionConv:
                trace.outputs.push_back(inception_forward(*cur, layer, net.params[i]));
                break;
            case LayerKind::FullyConnected:
                trace.outputs.push_back(fc_forward(*cur, layer, net.params[i]));
                break;
            case LayerKind::ReLU:
                trace.outputs.push_back(relu_forward(*cur));
                break;
            case LayerKind::Wta:
                trace.outputs.push_back(wta_activation(*cur, layer.wta_keep_value));
                break;
            case LayerKind::MaxPool: {
                PoolResult r = maxpool(*cur, layer.pool_window, layer.pool_window,
                                       layer.pool_stride);
                trace.outputs.push_back(std::move(r.output));
                trace.pool_argmax[i] = std::move(r.argmax);
                break;
            }
            case LayerKind::Flatten: {
                Tensor flat(cur->n(), cur->c() * cur->h() * cur->w(), 1, 1);
                std::memcpy(flat.data(), cur->data(), cur->size() * sizeof(double));
                trace.outputs.push_back(std::move(flat));
                break;
            }
        }
        cur = &trace.outputs.back();
    }
    return trace;
}

ActivationKind activation_from_string(const std::string& s) {
    if (s == "wta") return ActivationKind::Wta;
    if (s == "relu") return ActivationKind::Relu;
    throw std::invalid_argument("unknown activation '" + s + "' (valid: wta, relu)");
}

std::string to_string(ActivationKind a) {
    return a == ActivationKind::Wta ? "wta" : "relu";
}

namespace {

LayerSpec act_layer(ActivationKind kind, bool keep_value) {
    return kind == ActivationKind::Wta ? LayerSpec::make_wta(keep_value)
                                       : LayerSpec::make_relu();
}

}  // namespace

NetworkSpec preset_mnist(const PresetOptions& opt) {
    NetworkSpec spec;
    spec.name = std::string("mnist-") + to_string(opt.activation);
    spec.input = Shape3{1, 28, 28};
    spec.layers = {
        LayerSpec::make_conv(25, 5, 1, 2),
        act_layer(opt.activation, opt.wta_keep_value),
        LayerSpec::make_maxpool(2, 2),
        LayerSpec::make_conv(50, 5, 1, 2),
        act_layer(opt.activation, opt.wta_keep_value),
        LayerSpec::make_maxpool(2, 2),
        LayerSpec::make_flatten(),
        LayerSpec::make_fc(100),
        act_layer(opt.mnist_hidden, opt.wta_keep_value),
        LayerSpec::make_fc(10),
    };
    spec.validate();
    return spec;
}

NetworkSpec preset_cifar(const PresetOptions& opt) {
    NetworkSpec spec;
    spec.name = std::string("cifar-") + to_string(opt.activation);
    spec.input = Shape3{3, 32, 32};
    if (opt.activation == ActivationKind::Relu) {
        spec.layers = {
            LayerSpec::make_conv(32, 5, 1, 2),
            LayerSpec::make_relu(),
            LayerSpec::make_maxpool(2, 2),
            LayerSpec::make_conv(32, 5, 1, 2),
            LayerSpec::make_relu(),
            LayerSpec::make_maxpool(2, 2),
            LayerSpec::make_conv(64, 5, 1, 2),
            LayerSpec::make_relu(),
            LayerSpec::make_maxpool(2, 2),
            LayerSpec::make_flatten(),
            LayerSpec::make_fc(4096),
            LayerSpec::make_relu(),
            LayerSpec::make_fc(10),
        };
    } else {
        const int c1 = opt.cifar_conv1 > 0 ? opt.cifar_conv1 : 256;
        const int c2 = opt.cifar_conv2 > 0 ? opt.cifar_conv2 : 1024;
        spec.layers = {
            LayerSpec::make_conv(c1, 5, 1, 2),
            LayerSpec::make_wta(opt.wta_keep_value),
            LayerSpec::make_maxpool(2, 2),
            LayerSpec::make_conv(c2, 5, 1, 2),
            LayerSpec::make_wta(opt.wta_keep_value),
            LayerSpec::make_maxpool(2, 2),
            LayerSpec::make_flatten(),
            LayerSpec::make_fc(10),
        };
    }
    spec.validate();
    return spec;
}

NetworkSpec preset_imagenet(const PresetOptions& opt) {
    NetworkSpec spec;
    spec.name = std::string("imagenet-") + to_string(opt.activation);
    spec.input = Shape3{3, opt.imagenet_input, opt.imagenet_input};
    const int total = 1024;
    int n33 = static_cast<int>(std::lround(total * opt.inception_split));
    n33 = std::clamp(n33, 1, total - 1);
    const std::vector<InceptionBranch> block = {{3, n33}, {5, total - n33}};
    spec.layers = {
        LayerSpec::make_conv(256, 3, 1, 1),
        act_layer(opt.activation, opt.wta_keep_value),
        LayerSpec::make_maxpool(4, 2),
        LayerSpec::make_inception(block),
        act_layer(opt.activation, opt.wta_keep_value),
        LayerSpec::make_maxpool(4, 2),
        LayerSpec::make_inception(block),
        act_layer(opt.activation, opt.wta_keep_value),
        LayerSpec::make_maxpool(4, 2),
        LayerSpec::make_flatten(),
        LayerSpec::make_fc(1000),
    };
    spec.validate();
    return spec;
}

NetworkSpec preset_by_name(const std::string& name, const PresetOptions& opt) {
    if (name == "mnist") return preset_mnist(opt);
    if (name == "cifar") return preset_cifar(opt);
    if (name == "imagenet") return preset_imagenet(opt);
    throw std::invalid_argument("unknown preset '" + name +
                                "' (valid presets: mnist, cifar, imagenet)");
}

}  // namespace wtacnn
