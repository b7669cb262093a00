#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "wtacnn/network.hpp"
#include "wtacnn/tensor.hpp"

namespace wtacnn {

/// Per-layer weight/bias gradients mirroring Network parameter shapes.
/// Entries stay empty for frozen and parameter-free layers.
struct GradientSet {
    double loss = 0.0;
    std::vector<Tensor> weight_grads;
    std::vector<std::vector<double>> bias_grads;
    std::vector<std::vector<Tensor>> branch_weight_grads;
};

/// Mean cross-entropy over the batch with max-subtraction stabilization.
/// Returns (loss, dloss/dlogits); the gradient already carries the 1/N factor.
std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                const std::vector<int>& labels);

/// Gates the upstream gradient by the sign of the forward input
/// (subgradient 0 at exactly 0).
Tensor relu_backward(const Tensor& upstream, const Tensor& forward_input);

/// Routes each upstream value to the input position recorded in `argmax`.
/// Overlapping windows accumulate.
Tensor maxpool_backward(const Tensor& upstream, int in_n, int in_c, int in_h, int in_w,
                        const std::vector<std::size_t>& argmax);

struct FcBackwardResult {
    Tensor dweights;              // [out x in x 1 x 1]
    std::vector<double> dbias;
    Tensor dinput;
};
FcBackwardResult fc_backward(const Tensor& upstream, const Tensor& input,
                             const Tensor& weights);

struct ConvBackwardResult {
    Tensor dweights;
    Tensor dinput;                // empty when not requested
};
ConvBackwardResult conv_backward(const Tensor& upstream, const Tensor& input,
                                 const Tensor& weights, const ConvGeometry& geom,
                                 bool need_dinput);

/// Reverse pass from dlogits down to the shallowest trainable layer. Frozen
/// layers get no gradients and nothing below the stopping layer is visited,
/// so fine-tuning a classifier head never differentiates through WTA.
GradientSet network_backward(const Network& net, const Tensor& input,
                             const ForwardTrace& trace, const Tensor& dlogits);

/// w <- w - lr * g for every layer whose trainable flag is set and whose
/// gradient entry is present; everything else stays bitwise untouched.
void sgd_apply(Network& net, const GradientSet& grads, double lr);

}  // namespace wtacnn
