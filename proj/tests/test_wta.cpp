#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "wtacnn/kernels.hpp"
#include "wtacnn/rng.hpp"
#include "wtacnn/wta.hpp"

using namespace wtacnn;

namespace {

double row_norm(const Matrix& m, std::size_t r) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.cols(); ++k) s += m.at(r, k) * m.at(r, k);
    return std::sqrt(s);
}

Matrix unit_random_filters(std::size_t f, std::size_t d, Rng& rng) {
    Matrix m(f, d);
    for (std::size_t i = 0; i < f; ++i) {
        double norm_sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            m.at(i, k) = rng.normal();
            norm_sq += m.at(i, k) * m.at(i, k);
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t k = 0; k < d; ++k) m.at(i, k) *= inv;
    }
    return m;
}

// Winners for a bank of filters against a patch matrix, via the public
// pieces: u = filters . patch per competition, then select_winners.
std::vector<int> winners_for(const Matrix& filters, const Matrix& patches,
                             const ConscienceState& state) {
    Tensor u(1, static_cast<int>(filters.rows()), 1, static_cast<int>(patches.rows()));
    for (std::size_t f = 0; f < filters.rows(); ++f) {
        for (std::size_t p = 0; p < patches.rows(); ++p) {
            double dot = 0.0;
            for (std::size_t k = 0; k < filters.cols(); ++k) {
                dot += filters.at(f, k) * patches.at(p, k);
            }
            u.at(0, static_cast<int>(f), 0, static_cast<int>(p)) = dot;
        }
    }
    return select_winners(u, state);
}

}  // namespace

TEST_CASE("wta_activation: 5x5 single channel yields 25 winners") {
    Rng rng(1);
    Tensor pre(1, 1, 5, 5);
    for (std::size_t i = 0; i < pre.size(); ++i) pre.data()[i] = rng.normal();
    Tensor out = wta_activation(pre);
    int nonzeros = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.data()[i] != 0.0) {
            ++nonzeros;
            CHECK(out.data()[i] == 1.0);
        }
    }
    CHECK(nonzeros == 25);
}

TEST_CASE("wta_activation argmax basics") {
    Tensor pre(1, 2, 1, 1);
    pre.at(0, 0, 0, 0) = 0.2;
    pre.at(0, 1, 0, 0) = 0.7;
    Tensor out = wta_activation(pre);
    CHECK(out.at(0, 0, 0, 0) == 0.0);
    CHECK(out.at(0, 1, 0, 0) == 1.0);

    Tensor keep = wta_activation(pre, true);
    CHECK(keep.at(0, 1, 0, 0) == 0.7);
}

TEST_CASE("wta_activation is invariant to per-position shifts and positive scaling") {
    Rng rng(4);
    Tensor pre(2, 6, 3, 3);
    for (std::size_t i = 0; i < pre.size(); ++i) pre.data()[i] = rng.normal();
    Tensor base = wta_activation(pre);

    Tensor shifted = pre;
    for (int c = 0; c < 6; ++c) shifted.at(0, c, 1, 1) += 17.5;
    Tensor out_shift = wta_activation(shifted);

    Tensor scaled = pre;
    for (int c = 0; c < 6; ++c) scaled.at(1, c, 2, 0) *= 42.0;
    Tensor out_scale = wta_activation(scaled);

    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base.data()[i] == out_shift.data()[i]);
        CHECK(base.data()[i] == out_scale.data()[i]);
    }
}

TEST_CASE("wta_activation output sums to exactly one per position") {
    Rng rng(6);
    Tensor pre(3, 7, 4, 5);
    for (std::size_t i = 0; i < pre.size(); ++i) pre.data()[i] = rng.normal();
    Tensor out = wta_activation(pre);
    for (int n = 0; n < 3; ++n) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 5; ++x) {
                double sum = 0.0;
                for (int c = 0; c < 7; ++c) sum += out.at(n, c, y, x);
                CHECK(sum == 1.0);
            }
        }
    }
}

TEST_CASE("wta ties resolve to the lowest channel") {
    Tensor pre = Tensor::filled(1, 4, 1, 1, 0.0);
    Tensor out = wta_activation(pre);
    CHECK(out.at(0, 0, 0, 0) == 1.0);
    for (int c = 1; c < 4; ++c) CHECK(out.at(0, c, 0, 0) == 0.0);
}

TEST_CASE("conscience_bias direct evaluations") {
    ConscienceState s = ConscienceState::init(4, 5.0);
    s.win_prob = {1.0, 0.0, 0.0, 0.0};
    std::vector<double> b = conscience_bias(s);
    CHECK(b[0] == doctest::Approx(-3.75).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(b[3] == doctest::Approx(1.25).epsilon(1e-12));

    ConscienceState uniform = ConscienceState::init(4, 5.0);
    for (double v : conscience_bias(uniform)) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

    ConscienceState two = ConscienceState::init(2, 5.0);
    two.win_prob = {0.75, 0.25};
    std::vector<double> b2 = conscience_bias(two);
    CHECK(b2[0] == doctest::Approx(-1.25).epsilon(1e-12));
    CHECK(b2[1] == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("conscience_bias sums to zero when p sums to one") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(30));
        ConscienceState s = ConscienceState::init(n, 5.0);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            s.win_prob[i] = rng.uniform();
            total += s.win_prob[i];
        }
        for (int i = 0; i < n; ++i) s.win_prob[i] /= total;
        double sum = 0.0;
        for (double v : conscience_bias(s)) sum += v;
        CHECK(std::abs(sum) < 1e-9);
    }
}

TEST_CASE("select_winners applies the conscience bias") {
    Tensor u(1, 4, 1, 1);
    u.at(0, 0, 0, 0) = 1.0;
    u.at(0, 1, 0, 0) = 0.9;
    ConscienceState s = ConscienceState::init(4, 5.0);
    s.win_prob = {1.0, 0.0, 0.0, 0.0};  // bias [-3.75, 1.25, 1.25, 1.25]
    std::vector<int> winners = select_winners(u, s);
    REQUIRE(winners.size() == 1);
    CHECK(winners[0] == 1);  // 0.9 + 1.25 beats 1.0 - 3.75
}

TEST_CASE("select_winners with zero bias reduces to plain argmax") {
    Rng rng(10);
    Tensor u(2, 5, 3, 3);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
    ConscienceState s = ConscienceState::init(5, 0.0);  // C = 0 disables conscience
    std::vector<int> winners = select_winners(u, s);
    Tensor onehot = wta_activation(u);
    std::size_t p = 0;
    for (int n = 0; n < 2; ++n) {
        for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x, ++p) {
                CHECK(onehot.at(n, winners[p], y, x) == 1.0);
            }
        }
    }
}

TEST_CASE("select_winners tie rule and dimension check") {
    Tensor u = Tensor::filled(1, 3, 1, 1, 2.0);
    ConscienceState s = ConscienceState::init(3, 5.0);
    CHECK(select_winners(u, s)[0] == 0);

    ConscienceState wrong = ConscienceState::init(4, 5.0);
    CHECK_THROWS_AS(select_winners(u, wrong), std::invalid_argument);
}

TEST_CASE("select_winners is invariant to per-position shifts and joint positive rescaling") {
    Rng rng(12);
    Tensor u(1, 6, 2, 2);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
    ConscienceState s = ConscienceState::init(6, 5.0);
    for (int i = 0; i < 6; ++i) s.win_prob[i] = (i + 1) / 21.0;
    std::vector<int> base = select_winners(u, s);

    Tensor shifted = u;
    for (int c = 0; c < 6; ++c) shifted.at(0, c, 0, 1) += 3.25;
    CHECK(select_winners(shifted, s) == base);

    // Rescaling u and b together preserves the ordering.
    const double alpha = 2.5;
    Tensor scaled = u;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled.data()[i] *= alpha;
    ConscienceState s_scaled = s;
    s_scaled.conscience_c = s.conscience_c * alpha;
    CHECK(select_winners(scaled, s_scaled) == base);
}

TEST_CASE("competitive_step moves the winner toward the patch and renormalizes") {
    Matrix filters(1, 2);
    filters.at(0, 0) = 1.0;
    filters.at(0, 1) = 0.0;
    Matrix patches(1, 2);
    patches.at(0, 0) = 0.0;
    patches.at(0, 1) = 1.0;
    CompetitiveHyper hyper;
    hyper.rho = 0.5;                 // effective step 0.5
    hyper.step_scaled_by_lr = false;
    ConscienceState state = ConscienceState::init(1, 5.0);
    competitive_step(filters, patches, {0}, hyper, state);
    CHECK(filters.at(0, 0) == doctest::Approx(0.894427190999916).epsilon(1e-12));
    CHECK(filters.at(0, 1) == doctest::Approx(0.447213595499958).epsilon(1e-12));
    CHECK(state.win_prob[0] == 1.0);
    CHECK(state.lifetime_wins[0] == 1);
}

TEST_CASE("competitive_step leaves losers bitwise unchanged") {
    Rng rng(14);
    Matrix filters = unit_random_filters(6, 9, rng);
    Matrix before = filters;
    Matrix patches(4, 9);
    for (std::size_t i = 0; i < patches.size(); ++i) patches.data()[i] = rng.normal();
    std::vector<int> winners = {2, 2, 0, 5};
    CompetitiveHyper hyper;
    ConscienceState state = ConscienceState::init(6, 5.0);
    competitive_step(filters, patches, winners, hyper, state);
    for (std::size_t f : {1u, 3u, 4u}) {
        for (std::size_t k = 0; k < 9; ++k) {
            CHECK(filters.at(f, k) == before.at(f, k));
        }
    }
    for (std::size_t f : {0u, 2u, 5u}) {
        CHECK(row_norm(filters, f) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("repeated updates with one unit patch converge onto it") {
    Matrix filters(1, 8);
    Rng rng(16);
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
        filters.at(0, k) = rng.normal();
        norm_sq += filters.at(0, k) * filters.at(0, k);
    }
    for (std::size_t k = 0; k < 8; ++k) filters.at(0, k) /= std::sqrt(norm_sq);

    Matrix patch(1, 8);
    double patch_norm = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
        patch.at(0, k) = rng.normal();
        patch_norm += patch.at(0, k) * patch.at(0, k);
    }
    for (std::size_t k = 0; k < 8; ++k) patch.at(0, k) /= std::sqrt(patch_norm);

    CompetitiveHyper hyper;
    hyper.rho = 0.05;
    hyper.step_scaled_by_lr = false;
    ConscienceState state = ConscienceState::init(1, 5.0);
    for (int iter = 0; iter < 200; ++iter) {
        competitive_step(filters, patch, {0}, hyper, state);
    }
    double cos = 0.0;
    for (std::size_t k = 0; k < 8; ++k) cos += filters.at(0, k) * patch.at(0, k);
    CHECK(cos >= 0.999);
}

TEST_CASE("competitive_step keeps every updated filter at unit norm") {
    Rng rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t f = 2 + rng.uniform_index(10);
        const std::size_t d = 2 + rng.uniform_index(20);
        const std::size_t p = 1 + rng.uniform_index(30);
        Matrix filters = unit_random_filters(f, d, rng);
        Matrix patches(p, d);
        for (std::size_t i = 0; i < patches.size(); ++i) {
            patches.data()[i] = rng.normal();
        }
        std::vector<int> winners(p);
        for (auto& w : winners) w = static_cast<int>(rng.uniform_index(f));
        CompetitiveHyper hyper;
        hyper.step_scaled_by_lr = (trial % 2 == 0);
        ConscienceState state = ConscienceState::init(static_cast<int>(f), 5.0);
        competitive_step(filters, patches, winners, hyper, state);
        for (std::size_t i = 0; i < f; ++i) {
            CHECK(std::abs(row_norm(filters, i) - 1.0) < 1e-9);
        }
        double psum = 0.0;
        for (double v : state.win_prob) psum += v;
        CHECK(std::abs(psum - 1.0) < 1e-9);
    }
}

TEST_CASE("competitive_step raw update pushes weights away from the input") {
    Matrix filters(1, 2);
    filters.at(0, 0) = 1.0;
    Matrix patch(1, 2);
    patch.at(0, 0) = 0.0;
    patch.at(0, 1) = 1.0;
    CompetitiveHyper hyper;
    hyper.rho = 0.5;
    hyper.raw_update = true;
    ConscienceState state = ConscienceState::init(1, 5.0);
    competitive_step(filters, patch, {0}, hyper, state);
    // w - 0.5*z = [1, -0.5], normalized
    CHECK(filters.at(0, 0) == doctest::Approx(0.894427190999916).epsilon(1e-12));
    CHECK(filters.at(0, 1) == doctest::Approx(-0.447213595499958).epsilon(1e-12));
}

TEST_CASE("competitive_step reports an exact weight cancellation") {
    Matrix filters(1, 2);
    filters.at(0, 0) = 1.0;
    Matrix patch(1, 2);
    patch.at(0, 0) = -2.0;
    CompetitiveHyper hyper;
    hyper.rho = 0.5;
    hyper.step_scaled_by_lr = false;
    ConscienceState state = ConscienceState::init(1, 5.0);
    CHECK_THROWS_AS(competitive_step(filters, patch, {0}, hyper, state),
                    std::runtime_error);
}

TEST_CASE("conscience balances win rates on structured data") {
    // Patches drawn from a handful of prototypes with one dominant mode.
    // With the conscience on, the win-rate spread must come out strictly
    // smaller than with C = 0 from the same start.
    const std::size_t n_filters = 16, dim = 12, batch = 64;
    auto run = [&](double c_value) {
        Rng rng(20);  // same seed for both arms
        Matrix filters = unit_random_filters(n_filters, dim, rng);
        Matrix prototypes = unit_random_filters(8, dim, rng);
        ConscienceState state = ConscienceState::init(static_cast<int>(n_filters), c_value);
        CompetitiveHyper hyper;
        hyper.rho = 0.02;
        hyper.step_scaled_by_lr = false;
        hyper.conscience_c = c_value;
        std::vector<double> mean_prob(n_filters, 0.0);
        const int batches = 500;
        for (int b = 0; b < batches; ++b) {
            Matrix patches(batch, dim);
            for (std::size_t p = 0; p < batch; ++p) {
                // Mode 0 dominates: 50% of draws.
                const std::size_t proto =
                    (rng.uniform() < 0.5) ? 0 : 1 + rng.uniform_index(7);
                for (std::size_t k = 0; k < dim; ++k) {
                    patches.at(p, k) = prototypes.at(proto, k) + 0.05 * rng.normal();
                }
            }
            std::vector<int> winners = winners_for(filters, patches, state);
            competitive_step(filters, patches, winners, hyper, state);
            for (std::size_t i = 0; i < n_filters; ++i) {
                mean_prob[i] += state.win_prob[i] / batches;
            }
        }
        double lo = 1.0, hi = 0.0;
        for (double v : mean_prob) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return hi - lo;
    };
    const double spread_with = run(5.0);
    const double spread_without = run(0.0);
    CHECK(spread_with < spread_without);
}

TEST_CASE("pretrain_pass: purity, locality, norms, and route equivalence") {
    // Small conv net: conv(6 filters 3x3) -> WTA -> pool -> conv(8) -> WTA.
    NetworkSpec spec;
    spec.name = "pp-net";
    spec.input = Shape3{1, 10, 10};
    spec.layers = {
        LayerSpec::make_conv(6, 3, 1, 1),
        LayerSpec::make_wta(),
        LayerSpec::make_maxpool(2, 2),
        LayerSpec::make_conv(8, 3, 1, 1),
        LayerSpec::make_wta(),
    };
    Network net = build_network(spec, 70);
    normalize_competitive_filters(net);
    Rng rng(71);
    Tensor batch(3, 1, 10, 10);
    for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();

    Network before = net;
    std::vector<ConscienceState> states = init_conscience(net, 5.0);
    std::vector<ConscienceState> states_copy = states;
    CompetitiveHyper hyper;
    hyper.step_scaled_by_lr = false;

    ForwardTrace plain = forward(net, batch, RunMode::Train);
    ForwardTrace from_pass = pretrain_pass(net, batch, hyper, states);

    SUBCASE("the pass returns exactly the activations of the pre-update forward") {
        for (std::size_t li = 0; li < plain.outputs.size(); ++li) {
            REQUIRE(plain.outputs[li].size() == from_pass.outputs[li].size());
            for (std::size_t i = 0; i < plain.outputs[li].size(); ++i) {
                CHECK(plain.outputs[li].data()[i] == from_pass.outputs[li].data()[i]);
            }
        }
    }

    SUBCASE("only winner filters moved and every filter is unit-norm") {
        for (int li : {0, 3}) {
            const Tensor& w_before = before.params[li].weights;
            const Tensor& w_after = net.params[li].weights;
            const std::size_t d = w_after.size() / w_after.n();
            // Reconstruct winner sets from the pre-update trace.
            std::vector<int> winners = select_winners(plain.outputs[li], states_copy[li]);
            std::vector<bool> won(w_after.n(), false);
            for (int w : winners) won[w] = true;
            for (int f = 0; f < w_after.n(); ++f) {
                bool changed = false;
                double norm_sq = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double v = w_after.data()[f * d + k];
                    norm_sq += v * v;
                    if (v != w_before.data()[f * d + k]) changed = true;
                }
                CHECK(std::abs(std::sqrt(norm_sq) - 1.0) < 1e-9);
                if (!won[f]) CHECK(!changed);
            }
        }
    }

    SUBCASE("scatter route equals the im2col matrix route bit for bit") {
        // Replay the same update through the public matrix-based step.
        Network manual = before;
        std::vector<ConscienceState> manual_states = states_copy;
        for (int li : {0, 3}) {
            const Tensor& z = (li == 0) ? batch : plain.outputs[li - 1];
            Matrix patches = im2col(z, manual.spec.layers[li].conv);
            std::vector<int> winners = select_winners(plain.outputs[li], manual_states[li]);
            competitive_step(manual, li, patches, winners, hyper, manual_states[li]);
        }
        for (int li : {0, 3}) {
            const Tensor& a = net.params[li].weights;
            const Tensor& b = manual.params[li].weights;
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a.data()[i] == b.data()[i]);
            }
            CHECK(states[li].win_prob == manual_states[li].win_prob);
            CHECK(states[li].lifetime_wins == manual_states[li].lifetime_wins);
        }
    }
}

TEST_CASE("pretrain_pass with C=0 reduces to plain hard WTA competition") {
    NetworkSpec spec;
    spec.name = "c0-net";
    spec.input = Shape3{1, 8, 8};
    spec.layers = {LayerSpec::make_conv(5, 3, 1, 1), LayerSpec::make_wta()};
    Network net = build_network(spec, 73);
    normalize_competitive_filters(net);
    Rng rng(74);
    Tensor batch(2, 1, 8, 8);
    for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();

    std::vector<ConscienceState> states = init_conscience(net, 0.0);
    ForwardTrace trace = forward(net, batch, RunMode::Train);
    std::vector<int> winners = select_winners(trace.outputs[0], states[0]);
    // With zero conscience the winner is the plain channel argmax, i.e. the
    // WTA activation's hot channel.
    Tensor onehot = wta_activation(trace.outputs[0]);
    std::size_t p = 0;
    for (int n = 0; n < 2; ++n) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x, ++p) {
                CHECK(onehot.at(n, winners[p], y, x) == 1.0);
            }
        }
    }
}

TEST_CASE("pretrain_pass updates an inception layer per branch") {
    NetworkSpec spec;
    spec.name = "incep-net";
    spec.input = Shape3{2, 9, 9};
    spec.layers = {
        LayerSpec::make_inception({{3, 4}, {5, 4}}),
        LayerSpec::make_wta(),
    };
    Network net = build_network(spec, 75);
    normalize_competitive_filters(net);
    Rng rng(76);
    Tensor batch(2, 2, 9, 9);
    for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = rng.uniform();

    std::vector<ConscienceState> states = init_conscience(net, 5.0);
    REQUIRE(states[0].unit_count == 8);
    pretrain_pass(net, batch, CompetitiveHyper{}, states);

    double psum = 0.0;
    for (double v : states[0].win_prob) psum += v;
    CHECK(std::abs(psum - 1.0) < 1e-9);
    for (const Tensor& bw : net.params[0].branch_weights) {
        const std::size_t d = bw.size() / bw.n();
        for (int f = 0; f < bw.n(); ++f) {
            double norm_sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                norm_sq += bw.data()[f * d + k] * bw.data()[f * d + k];
            }
            CHECK(std::abs(std::sqrt(norm_sq) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("scatter route equals matrix route for strided, padded convs") {
    NetworkSpec spec;
    spec.name = "stride-net";
    spec.input = Shape3{2, 11, 9};
    spec.layers = {LayerSpec::make_conv(7, 3, 2, 1), LayerSpec::make_wta()};
    Network net = build_network(spec, 80);
    normalize_competitive_filters(net);
    Network manual = net;

    Rng rng(81);
    Tensor batch(3, 2, 11, 9);
    // Half the inputs zero: exercises the nonzero-scatter bookkeeping.
    for (std::size_t i = 0; i < batch.size(); ++i) {
        batch.data()[i] = rng.uniform() < 0.5 ? 0.0 : rng.normal();
    }
    std::vector<ConscienceState> states = init_conscience(net, 5.0);
    std::vector<ConscienceState> manual_states = states;
    CompetitiveHyper hyper;
    hyper.step_scaled_by_lr = false;

    ForwardTrace trace = forward(net, batch, RunMode::Train);
    pretrain_pass(net, batch, hyper, states);

    Matrix patches = im2col(batch, manual.spec.layers[0].conv);
    std::vector<int> winners = select_winners(trace.outputs[0], manual_states[0]);
    competitive_step(manual, 0, patches, winners, hyper, manual_states[0]);

    const Tensor& a = net.params[0].weights;
    const Tensor& b = manual.params[0].weights;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.data()[i] == b.data()[i]);
    }
    CHECK(states[0].win_prob == manual_states[0].win_prob);
}
