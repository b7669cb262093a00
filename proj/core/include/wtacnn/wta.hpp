#pragma once

#include <cstdint>
#include <vector>

#include "wtacnn/network.hpp"
#include "wtacnn/tensor.hpp"

namespace wtacnn {

/// Winner-take-all activation: per (sample, y, x) position, 1.0 at the channel
/// with the maximal pre-activation, 0.0 elsewhere. Ties go to the lowest
/// channel index. With keep_value the winning value is retained instead of 1.0.
Tensor wta_activation(const Tensor& pre_activation, bool keep_value = false);

/// Per-layer win statistics driving the conscience bias. `win_prob` is the
/// winning probability from the previous minibatch, initialized uniform.
struct ConscienceState {
    int unit_count = 0;
    double conscience_c = 0.0;
    std::vector<std::uint64_t> win_counts;
    std::vector<double> win_prob;
    std::vector<std::uint64_t> lifetime_wins;
    std::uint64_t competitions_seen = 0;

    static ConscienceState init(int units, double conscience_c);
};

/// b_i = C * (1/N - p_i). Sums to zero whenever the p_i sum to one.
std::vector<double> conscience_bias(const ConscienceState& state);

/// Winner channel per (sample, y, x) in sample-major row-major order:
/// argmax_k(u_k + b_k), ties to the lowest index. Learning-path only; the
/// feedforward signal never sees the bias.
std::vector<int> select_winners(const Tensor& pre_activation, const ConscienceState& state);

struct CompetitiveHyper {
    double rho = 0.5e-3;
    double conscience_c = 5.0;
    double sgd_lr = 0.01;
    /// Effective pre-training step: sgd_lr * rho when set, rho alone otherwise.
    /// rho alone is the default; the scaled step is so small that filters
    /// barely leave their random initialization within the stated budgets.
    bool step_scaled_by_lr = false;
    /// Literal update w' = normalize(w - rho * z), the away-from-input reading;
    /// kept as an ablation switch.
    bool raw_update = false;

    double effective_step() const {
        if (raw_update) return -rho;
        return step_scaled_by_lr ? sgd_lr * rho : rho;
    }
};

/// One competitive update on a filter bank (rows are flattened unit-norm
/// filters): each winning filter moves by the mean of the patches it won,
/// then is renormalized to unit L2 norm; losers stay untouched. Advances the
/// conscience statistics (p <- wins/P, win counts reset).
void competitive_step(Matrix& filters, const Matrix& patches,
                      const std::vector<int>& winners, const CompetitiveHyper& hyper,
                      ConscienceState& state);

/// Network-level wrapper: applies the update to the weights of `layer_index`
/// (a Conv layer) with patch rows produced by im2col of that layer's input.
void competitive_step(Network& net, int layer_index, const Matrix& patches,
                      const std::vector<int>& winners, const CompetitiveHyper& hyper,
                      ConscienceState& state);

/// One conscience state per layer; empty (unit_count 0) for layers that do not
/// compete.
std::vector<ConscienceState> init_conscience(const Network& net, double conscience_c);

/// Renormalizes every competitive layer's filters to unit L2 norm. Call once
/// before the first pre-training step; competitive updates preserve the
/// property thereafter.
void normalize_competitive_filters(Network& net);

/// One unsupervised pass over a batch: a single forward, then a competitive
/// update of every competitive layer from that same pass's activations (all
/// layers at once, not layer-wise). Returns the trace, which is identical to
/// what forward() produced for the pre-update weights.
ForwardTrace pretrain_pass(Network& net, const Tensor& batch,
                           const CompetitiveHyper& hyper,
                           std::vector<ConscienceState>& states);

/// Shannon entropy (nats) of the win distribution p.
double win_rate_entropy(const ConscienceState& state);

}  // namespace wtacnn
