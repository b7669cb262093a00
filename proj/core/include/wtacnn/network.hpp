#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtacnn/tensor.hpp"

namespace wtacnn {

enum class LayerKind { Conv, InceptionConv, FullyConnected, ReLU, Wta, MaxPool, Flatten };

std::string layer_kind_name(LayerKind kind);

struct InceptionBranch {
    int kernel = 0;
    int filters = 0;
};

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    ConvGeometry conv;                      // Conv; in_channels derived at validation
    std::vector<InceptionBranch> branches;  // InceptionConv (stride 1, same padding)
    int fc_out = 0;
    int fc_in = 0;                          // derived at validation
    int pool_window = 0;
    int pool_stride = 0;
    bool wta_keep_value = false;

    static LayerSpec make_conv(int filters, int kernel, int stride = 1, int padding = 0);
    static LayerSpec make_inception(std::vector<InceptionBranch> branches);
    static LayerSpec make_fc(int out_width);
    static LayerSpec make_relu();
    static LayerSpec make_wta(bool keep_value = false);
    static LayerSpec make_maxpool(int window, int stride);
    static LayerSpec make_flatten();

    /// Total output channels (Conv/InceptionConv) or output width (FC).
    int output_units() const;
};

struct Shape3 {
    int c = 0, h = 0, w = 0;
    bool operator==(const Shape3&) const = default;
    std::string str() const;
};

/// Declarative layer stack plus input shape. Validation runs symbolic shape
/// propagation and derives the per-layer input contracts.
struct NetworkSpec {
    std::string name;
    Shape3 input;
    std::vector<LayerSpec> layers;

    /// Shape after every layer; throws naming the first inconsistent layer.
    /// Fills each layer's derived fields (conv.in_channels, fc_in).
    std::vector<Shape3> validate();

    /// Width of the final layer (the label count the network was built for).
    int output_width() const;
};

struct LayerParams {
    Tensor weights;
    std::vector<double> bias;           // FC only; conv layers carry no bias
    std::vector<Tensor> branch_weights; // InceptionConv
};

struct Network {
    NetworkSpec spec;
    std::vector<LayerParams> params;
    std::vector<bool> trainable;

    bool has_params(int layer) const;
    /// Conv/InceptionConv immediately followed by a WTA activation; these are
    /// the layers competitive pre-training updates.
    bool is_competitive(int layer) const;
    int unit_count(int layer) const;
};

/// Materializes parameters with LeCun-normal weights (stddev 1/sqrt(fan_in)),
/// zero FC biases. Deterministic given the seed.
Network build_network(NetworkSpec spec, std::uint64_t seed);

enum class RunMode { Train, Eval };

struct ForwardTrace {
    std::vector<Tensor> outputs;                      // one per layer
    std::vector<std::vector<std::size_t>> pool_argmax;

    const Tensor& logits() const { return outputs.back(); }
};

/// Executes the layer stack, retaining every layer's output (pre- and
/// post-activation values are adjacent entries since activations are layers).
/// WTA and ReLU behave identically in both modes.
ForwardTrace forward(const Network& net, const Tensor& input, RunMode mode);

enum class ActivationKind { Wta, Relu };

ActivationKind activation_from_string(const std::string& s);
std::string to_string(ActivationKind a);

struct PresetOptions {
    ActivationKind activation = ActivationKind::Wta;
    /// Activation of the MNIST hidden FC(100) layer; the competitive phase
    /// never touches FC layers either way.
    ActivationKind mnist_hidden = ActivationKind::Relu;
    bool wta_keep_value = false;
    /// Competitive CIFAR variant widths; 0 keeps the defaults (256, 1024).
    int cifar_conv1 = 0;
    int cifar_conv2 = 0;
    int imagenet_input = 64;
    /// Fraction of each inception block's filters on the 3x3 branch.
    double inception_split = 0.5;
};

NetworkSpec preset_mnist(const PresetOptions& opt = {});
NetworkSpec preset_cifar(const PresetOptions& opt = {});
NetworkSpec preset_imagenet(const PresetOptions& opt = {});

/// Lookup by CLI name; throws listing valid names on a miss.
NetworkSpec preset_by_name(const std::string& name, const PresetOptions& opt = {});

}  // namespace wtacnn
