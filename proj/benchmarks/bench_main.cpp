#include <benchmark/benchmark.h>

#include "sculpt/analysis.hpp"
#include "sculpt/pipelines.hpp"
#include "sculpt/prune.hpp"
#include "sculpt/rng.hpp"
#include "sculpt/train.hpp"

using namespace sculpt;

namespace {

Model mnist_mlp() {
    ModelSpec s;
    s.widths = {784, 64, 32, 10};
    return build_model(s);
}

Batch random_batch(std::size_t n, std::size_t features) {
    Rng rng(1);
    Tensor x(Shape{n, features});
    Tensor y(Shape{n});
    for (auto& v : x.data()) v = standard_normal(rng);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(i % 10);
    return {x, y};
}

void BM_ForwardLoss(benchmark::State& state) {
    const Model m = mnist_mlp();
    const ParamVector p = initial_params(m.layout, 0);
    const Batch b = random_batch(static_cast<std::size_t>(state.range(0)), 784);
    for (auto _ : state) benchmark::DoNotOptimize(forward_loss(m, p, b).loss);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardLoss)->Arg(32)->Arg(500);

void BM_LossAndGrad(benchmark::State& state) {
    const Model m = mnist_mlp();
    const ParamVector p = initial_params(m.layout, 0);
    const Batch b = random_batch(static_cast<std::size_t>(state.range(0)), 784);
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(m, p, b).loss);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(32)->Arg(128);

void BM_MagnitudePrune(benchmark::State& state) {
    const Model m = mnist_mlp();
    const ParamVector p = initial_params(m.layout, 0);
    const Mask ones = Mask::ones(m.layout);
    for (auto _ : state) benchmark::DoNotOptimize(prune_to_sparsity(ones, score_magnitude(p, ones), 0.9));
}
BENCHMARK(BM_MagnitudePrune);

void BM_Synflow(benchmark::State& state) {
    const Model m = mnist_mlp();
    const ParamVector p = initial_params(m.layout, 0);
    const Mask ones = Mask::ones(m.layout);
    for (auto _ : state) benchmark::DoNotOptimize(score_synflow(m, p, ones));
}
BENCHMARK(BM_Synflow);

void BM_TrainEpochTwoMoons(benchmark::State& state) {
    TrainTest data = split_train_test(gen_two_moons(1000, 0.1, 0), 0.2, 0);
    ModelSpec s;
    s.widths = {2, 16, 16, 2};
    const Model m = build_model(s);
    const ParamVector p = initial_params(m.layout, 0);
    TrainOptions o;
    o.max_epochs = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_cycles(m, p, Mask::ones(m.layout), default_cycle(), data, {}, 0, o).params);
    }
}
BENCHMARK(BM_TrainEpochTwoMoons)->Unit(benchmark::kMillisecond);

void BM_SignFlips(benchmark::State& state) {
    const Model m = mnist_mlp();
    const ParamVector a = initial_params(m.layout, 0);
    const ParamVector b = initial_params(m.layout, 1);
    const Mask ones = Mask::ones(m.layout);
    for (auto _ : state) benchmark::DoNotOptimize(count_sign_flips(a, b, ones));
}
BENCHMARK(BM_SignFlips);

}  // namespace

BENCHMARK_MAIN();
