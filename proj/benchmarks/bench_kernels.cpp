#include <benchmark/benchmark.h>

#include "wtacnn/version.hpp"

#include "wtacnn/kernels.hpp"
#include "wtacnn/network.hpp"
#include "wtacnn/rng.hpp"
#include "wtacnn/trainer.hpp"
#include "wtacnn/wta.hpp"

using namespace wtacnn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
    return t;
}

Tensor onehot_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(n, c, h, w);
    for (int b = 0; b < n; ++b) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                t.at(b, static_cast<int>(rng.uniform_index(c)), y, x) = 1.0;
            }
        }
    }
    return t;
}

}  // namespace

static void MatmulSquare(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Matrix a(n, n), b(n, n);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform();
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform();
    for (auto _ : state) {
        Matrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(MatmulSquare)->Arg(64)->Arg(256)->Arg(512);

static void ConvDenseMnistShape(benchmark::State& state) {
    // Second conv of the MNIST stack with a dense (ReLU-like) input.
    Tensor input = random_tensor(100, 25, 14, 14, 2);
    Tensor weights = random_tensor(50, 25, 5, 5, 3);
    ConvGeometry g{25, 50, 5, 5, 1, 2};
    for (auto _ : state) {
        Tensor out = conv2d(input, weights, {}, g);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 2ull * 100 * 50 * 14 * 14 * 25 * 25);
}
BENCHMARK(ConvDenseMnistShape);

static void ConvSparseMnistShape(benchmark::State& state) {
    // Same shape with a WTA one-hot input: the zero-skipping path.
    Tensor input = onehot_tensor(100, 25, 14, 14, 4);
    Tensor weights = random_tensor(50, 25, 5, 5, 5);
    ConvGeometry g{25, 50, 5, 5, 1, 2};
    for (auto _ : state) {
        Tensor out = conv2d(input, weights, {}, g);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 2ull * 100 * 50 * 14 * 14 * 25 * 25);
}
BENCHMARK(ConvSparseMnistShape);

static void ConvSparseCifarShape(benchmark::State& state) {
    // Competitive CIFAR conv2 at the desk-scale widths.
    Tensor input = onehot_tensor(10, 128, 16, 16, 6);
    Tensor weights = random_tensor(512, 128, 5, 5, 7);
    ConvGeometry g{128, 512, 5, 5, 1, 2};
    for (auto _ : state) {
        Tensor out = conv2d(input, weights, {}, g);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 2ull * 10 * 512 * 16 * 16 * 128 * 25);
}
BENCHMARK(ConvSparseCifarShape);

static void MnistPretrainIteration(benchmark::State& state) {
    Network net = build_network(preset_mnist(), 8);
    normalize_competitive_filters(net);
    std::vector<ConscienceState> states = init_conscience(net, 5.0);
    CompetitiveHyper hyper;
    Tensor batch = random_tensor(100, 1, 28, 28, 9);
    for (auto _ : state) {
        pretrain_pass(net, batch, hyper, states);
    }
    state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(MnistPretrainIteration);

static void CifarPretrainIteration(benchmark::State& state) {
    PresetOptions opt;
    opt.cifar_conv1 = 128;
    opt.cifar_conv2 = 512;
    Network net = build_network(preset_cifar(opt), 10);
    normalize_competitive_filters(net);
    std::vector<ConscienceState> states = init_conscience(net, 5.0);
    CompetitiveHyper hyper;
    Tensor batch = random_tensor(100, 3, 32, 32, 11);
    for (auto _ : state) {
        pretrain_pass(net, batch, hyper, states);
    }
    state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(CifarPretrainIteration);

int main(int argc, char** argv) {
    wtacnn::tune_allocator();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
