#include "wtacnn/wta.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wtacnn/kernels.hpp"

namespace wtacnn {

Tensor wta_activation(const Tensor& pre, bool keep_value) {
    Tensor out(pre.n(), pre.c(), pre.h(), pre.w());
    const std::size_t plane = static_cast<std::size_t>(pre.h()) * pre.w();
    for (int n = 0; n < pre.n(); ++n) {
        const double* in_base = pre.data() + pre.index(n, 0, 0, 0);
        double* out_base = out.data() + out.index(n, 0, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) {
            int best_c = 0;
            double best = in_base[p];
            for (int c = 1; c < pre.c(); ++c) {
                const double v = in_base[static_cast<std::size_t>(c) * plane + p];
                if (v > best) {
                    best = v;
                    best_c = c;
                }
            }
            out_base[static_cast<std::size_t>(best_c) * plane + p] = keep_value ? best : 1.0;
        }
    }
    return out;
}

ConscienceState ConscienceState::init(int units, double conscience_c) {
    if (units <= 0) {
        throw std::invalid_argument("ConscienceState: unit count must be positive, got " +
                                    std::to_string(units));
    }
    ConscienceState s;
    s.unit_count = units;
    s.conscience_c = conscience_c;
    s.win_counts.assign(units, 0);
    s.win_prob.assign(units, 1.0 / units);
    s.lifetime_wins.assign(units, 0);
    return s;
}

std::vector<double> conscience_bias(const ConscienceState& state) {
    std::vector<double> b(state.unit_count);
    const double uniform = 1.0 / state.unit_count;
    for (int i = 0; i < state.unit_count; ++i) {
        b[i] = state.conscience_c * (uniform - state.win_prob[i]);
    }
    return b;
}

std::vector<int> select_winners(const Tensor& pre, const ConscienceState& state) {
    if (pre.c() != state.unit_count) {
        throw std::invalid_argument("select_winners: tensor has " + std::to_string(pre.c()) +
                                    " channels but conscience state has " +
                                    std::to_string(state.unit_count) + " units");
    }
    const std::vector<double> bias = conscience_bias(state);
    const std::size_t plane = static_cast<std::size_t>(pre.h()) * pre.w();
    std::vector<int> winners(static_cast<std::size_t>(pre.n()) * plane);
    for (int n = 0; n < pre.n(); ++n) {
        const double* base = pre.data() + pre.index(n, 0, 0, 0);
        int* wrow = winners.data() + static_cast<std::size_t>(n) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            int best_c = 0;
            double best = base[p] + bias[0];
            for (int c = 1; c < pre.c(); ++c) {
                const double v = base[static_cast<std::size_t>(c) * plane + p] + bias[c];
                if (v > best) {
                    best = v;
                    best_c = c;
                }
            }
            wrow[p] = best_c;
        }
    }
    return winners;
}

namespace {

// Moves each winning filter by the mean of its won patches, then renormalizes
// it to unit L2 norm. Losing filters are untouched bit-for-bit.
void update_filters(Matrix& filters, const Matrix& sums,
                    const std::vector<std::uint64_t>& counts,
                    const CompetitiveHyper& hyper, const char* who) {
    const double step = hyper.effective_step();
    const std::size_t d = filters.cols();
    for (std::size_t i = 0; i < filters.rows(); ++i) {
        if (counts[i] == 0) continue;
        double* w = filters.row(i);
        const double* g = sums.row(i);
        const double scale = step / static_cast<double>(counts[i]);
        double norm_sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            w[k] += scale * g[k];
            norm_sq += w[k] * w[k];
        }
        if (!(norm_sq > 1e-24)) {
            throw std::runtime_error(std::string(who) + ": filter " + std::to_string(i) +
                                     " collapsed to zero norm during renormalization "
                                     "(update cancelled the weight vector exactly)");
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t k = 0; k < d; ++k) {
            w[k] *= inv;
        }
    }
}

// p <- wins/P for the next minibatch; win counts reset, lifetime tallies kept.
void advance_conscience(ConscienceState& state, const std::vector<std::uint64_t>& counts,
                        std::size_t competitions) {
    for (int i = 0; i < state.unit_count; ++i) {
        state.win_prob[i] =
            static_cast<double>(counts[i]) / static_cast<double>(competitions);
        state.lifetime_wins[i] += counts[i];
    }
    state.competitions_seen += competitions;
    std::fill(state.win_counts.begin(), state.win_counts.end(), 0);
}

Matrix filters_as_matrix(const Tensor& w) {
    const std::size_t d = w.size() / static_cast<std::size_t>(w.n());
    Matrix m(static_cast<std::size_t>(w.n()), d);
    std::copy(w.data(), w.data() + w.size(), m.data());
    return m;
}

}  // namespace

void competitive_step(Matrix& filters, const Matrix& patches,
                      const std::vector<int>& winners, const CompetitiveHyper& hyper,
                      ConscienceState& state) {
    if (patches.cols() != filters.cols()) {
        throw std::invalid_argument("competitive_step: patch dim " +
                                    std::to_string(patches.cols()) +
                                    " does not match filter dim " +
                                    std::to_string(filters.cols()));
    }
    if (winners.size() != patches.rows()) {
        throw std::invalid_argument("competitive_step: " + std::to_string(winners.size()) +
                                    " winners for " + std::to_string(patches.rows()) +
                                    " patches");
    }
    if (static_cast<std::size_t>(state.unit_count) != filters.rows()) {
        throw std::invalid_argument("competitive_step: conscience state has " +
                                    std::to_string(state.unit_count) + " units, filters " +
                                    std::to_string(filters.rows()));
    }
    if (patches.rows() == 0) {
        throw std::invalid_argument("competitive_step: no competitions in batch");
    }
    Matrix sums(filters.rows(), filters.cols());
    std::vector<std::uint64_t> counts(filters.rows(), 0);
    for (std::size_t p = 0; p < patches.rows(); ++p) {
        const int w = winners[p];
        if (w < 0 || static_cast<std::size_t>(w) >= filters.rows()) {
            throw std::invalid_argument("competitive_step: winner index " +
                                        std::to_string(w) + " out of range");
        }
        ++counts[w];
        double* dst = sums.row(w);
        const double* src = patches.row(p);
        for (std::size_t k = 0; k < patches.cols(); ++k) {
            dst[k] += src[k];
        }
    }
    update_filters(filters, sums, counts, hyper, "competitive_step");
    advance_conscience(state, counts, patches.rows());
}

void competitive_step(Network& net, int layer_index, const Matrix& patches,
                      const std::vector<int>& winners, const CompetitiveHyper& hyper,
                      ConscienceState& state) {
    const LayerSpec& layer = net.spec.layers[layer_index];
    if (layer.kind != LayerKind::Conv) {
        throw std::invalid_argument("competitive_step: layer " +
                                    std::to_string(layer_index) + " is " +
                                    layer_kind_name(layer.kind) + ", not conv");
    }
    Tensor& w = net.params[layer_index].weights;
    Matrix filters = filters_as_matrix(w);
    competitive_step(filters, patches, winners, hyper, state);
    std::copy(filters.data(), filters.data() + filters.size(), w.data());
}

std::vector<ConscienceState> init_conscience(const Network& net, double conscience_c) {
    std::vector<ConscienceState> states(net.spec.layers.size());
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (net.is_competitive(static_cast<int>(i))) {
            states[i] = ConscienceState::init(net.unit_count(static_cast<int>(i)),
                                              conscience_c);
        }
    }
    return states;
}

void normalize_competitive_filters(Network& net) {
    auto normalize_rows = [](Tensor& w) {
        const std::size_t d = w.size() / static_cast<std::size_t>(w.n());
        for (int f = 0; f < w.n(); ++f) {
            double* row = w.data() + static_cast<std::size_t>(f) * d;
            double norm_sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) norm_sq += row[k] * row[k];
            if (!(norm_sq > 0.0)) {
                throw std::runtime_error("normalize_competitive_filters: zero filter");
            }
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (std::size_t k = 0; k < d; ++k) row[k] *= inv;
        }
    };
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (!net.is_competitive(static_cast<int>(i))) continue;
        if (net.spec.layers[i].kind == LayerKind::Conv) {
            normalize_rows(net.params[i].weights);
        } else {
            for (Tensor& bw : net.params[i].branch_weights) normalize_rows(bw);
        }
    }
}

namespace {

// Accumulates patch sums for one conv geometry by scattering from the nonzero
// input elements instead of materializing im2col rows. For a fixed
// (filter, patch-slot) pair contributions arrive in ascending competition
// order, exactly as the matrix route adds them, so both routes agree
// bit-for-bit.
void scatter_accumulate(const Tensor& z, const ConvGeometry& g,
                        const std::vector<int>& winners, int winner_offset,
                        int unit_range, Matrix& sums,
                        std::vector<std::uint64_t>& counts) {
    const int oh = g.out_h(z.h());
    const int ow = g.out_w(z.w());
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int n = 0; n < z.n(); ++n) {
        const int* wmap = winners.data() + static_cast<std::size_t>(n) * plane;
        for (int ic = 0; ic < g.in_channels; ++ic) {
            for (int iy = 0; iy < z.h(); ++iy) {
                const double* zrow = z.data() + z.index(n, ic, iy, 0);
                for (int ix = 0; ix < z.w(); ++ix) {
                    const double v = zrow[ix];
                    if (v == 0.0) continue;
                    for (int ky = 0; ky < g.kernel_h; ++ky) {
                        const int oy_num = iy + g.padding - ky;
                        if (oy_num < 0 || oy_num % g.stride != 0) continue;
                        const int oy = oy_num / g.stride;
                        if (oy >= oh) continue;
                        const std::size_t krow =
                            (static_cast<std::size_t>(ic) * g.kernel_h + ky) * g.kernel_w;
                        for (int kx = 0; kx < g.kernel_w; ++kx) {
                            const int ox_num = ix + g.padding - kx;
                            if (ox_num < 0 || ox_num % g.stride != 0) continue;
                            const int ox = ox_num / g.stride;
                            if (ox >= ow) continue;
                            const int win =
                                wmap[static_cast<std::size_t>(oy) * ow + ox] - winner_offset;
                            if (win < 0 || win >= unit_range) continue;
                            sums.row(win)[krow + kx] += v;
                        }
                    }
                }
            }
        }
    }
    const std::size_t total = static_cast<std::size_t>(z.n()) * plane;
    for (std::size_t p = 0; p < total; ++p) {
        const int win = winners[p] - winner_offset;
        if (win >= 0 && win < unit_range) ++counts[win];
    }
}

}  // namespace

ForwardTrace pretrain_pass(Network& net, const Tensor& batch,
                           const CompetitiveHyper& hyper,
                           std::vector<ConscienceState>& states) {
    if (states.size() != net.spec.layers.size()) {
        throw std::invalid_argument("pretrain_pass: conscience state count (" +
                                    std::to_string(states.size()) +
                                    ") does not match layer count (" +
                                    std::to_string(net.spec.layers.size()) + ")");
    }
    ForwardTrace trace = forward(net, batch, RunMode::Train);
    for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
        if (!net.is_competitive(static_cast<int>(li))) continue;
        ConscienceState& state = states[li];
        if (state.unit_count != net.unit_count(static_cast<int>(li))) {
            throw std::invalid_argument("pretrain_pass: layer " + std::to_string(li) +
                                        " has no matching conscience state");
        }
        const Tensor& u = trace.outputs[li];
        const Tensor& z = (li == 0) ? batch : trace.outputs[li - 1];
        const std::vector<int> winners = select_winners(u, state);
        const std::size_t competitions = winners.size();

        const LayerSpec& layer = net.spec.layers[li];
        if (layer.kind == LayerKind::Conv) {
            Matrix filters = filters_as_matrix(net.params[li].weights);
            Matrix sums(filters.rows(), filters.cols());
            std::vector<std::uint64_t> counts(filters.rows(), 0);
            scatter_accumulate(z, layer.conv, winners, 0, layer.conv.out_channels, sums,
                               counts);
            update_filters(filters, sums, counts, hyper, "pretrain_pass");
            advance_conscience(state, counts, competitions);
            std::copy(filters.data(), filters.data() + filters.size(),
                      net.params[li].weights.data());
        } else {
            // Inception block: units compete across the concatenated channel
            // axis; each branch consumes the patch geometry of its own kernel.
            std::vector<std::uint64_t> all_counts(state.unit_count, 0);
            for (std::size_t p = 0; p < competitions; ++p) ++all_counts[winners[p]];
            int offset = 0;
            for (std::size_t b = 0; b < layer.branches.size(); ++b) {
                const InceptionBranch& br = layer.branches[b];
                ConvGeometry g{z.c(), br.filters, br.kernel, br.kernel, 1, br.kernel / 2};
                Matrix filters = filters_as_matrix(net.params[li].branch_weights[b]);
                Matrix sums(filters.rows(), filters.cols());
                std::vector<std::uint64_t> counts(filters.rows(), 0);
                scatter_accumulate(z, g, winners, offset, br.filters, sums, counts);
                update_filters(filters, sums, counts, hyper, "pretrain_pass");
                std::copy(filters.data(), filters.data() + filters.size(),
                          net.params[li].branch_weights[b].data());
                offset += br.filters;
            }
            advance_conscience(state, all_counts, competitions);
        }
    }
    return trace;
}

double win_rate_entropy(const ConscienceState& state) {
    double h = 0.0;
    for (double p : state.win_prob) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace wtacnn
