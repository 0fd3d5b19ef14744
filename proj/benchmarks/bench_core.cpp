#include <benchmark/benchmark.h>

#include <vector>

#include "svgan/lstm.hpp"
#include "svgan/metrics.hpp"
#include "svgan/models.hpp"
#include "svgan/ops.hpp"
#include "svgan/rng.hpp"

namespace {

std::vector<float> random_values(svgan::Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return v;
}

void bm_conv2d_forward(benchmark::State& state) {
    const std::size_t c = static_cast<std::size_t>(state.range(0));
    const std::size_t hw = static_cast<std::size_t>(state.range(1));
    svgan::Rng rng(1);
    auto x = svgan::Tensor<float>::from({c, hw, hw}, random_values(rng, c * hw * hw));
    auto k = svgan::Tensor<float>::from({c, c, 3, 3}, random_values(rng, c * c * 9));
    auto b = svgan::Tensor<float>::from({c}, random_values(rng, c));
    for (auto _ : state) {
        auto y = svgan::conv2d(x, k, b);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(c * c * hw * hw * 9) * 2);
}

void bm_conv2d_train_step(benchmark::State& state) {
    const std::size_t c = static_cast<std::size_t>(state.range(0));
    const std::size_t hw = static_cast<std::size_t>(state.range(1));
    svgan::Rng rng(1);
    auto x = svgan::Tensor<float>::from({c, hw, hw}, random_values(rng, c * hw * hw));
    for (auto _ : state) {
        auto k = svgan::Tensor<float>::param({c, c, 3, 3}, random_values(rng, c * c * 9));
        auto b = svgan::Tensor<float>::param({c}, random_values(rng, c));
        auto loss = svgan::mean(svgan::conv2d(x, k, b));
        svgan::backward(loss);
        benchmark::DoNotOptimize(k.grad().data());
    }
}

void bm_maxpool2d(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    svgan::Rng rng(1);
    auto x = svgan::Tensor<float>::from({8, hw, hw}, random_values(rng, 8 * hw * hw));
    for (auto _ : state) {
        auto y = svgan::maxpool2d(x);
        benchmark::DoNotOptimize(y.data().data());
    }
}

void bm_bilstm(benchmark::State& state) {
    const std::size_t steps = static_cast<std::size_t>(state.range(0));
    const std::size_t feat = 64, hid = 32;
    svgan::Rng rng(1);
    svgan::BiLstmParams<float> p;
    p.fwd = {svgan::Tensor<float>::param({4 * hid, feat}, random_values(rng, 4 * hid * feat)),
             svgan::Tensor<float>::param({4 * hid, hid}, random_values(rng, 4 * hid * hid)),
             svgan::Tensor<float>::param({4 * hid}, random_values(rng, 4 * hid))};
    p.bwd = {svgan::Tensor<float>::param({4 * hid, feat}, random_values(rng, 4 * hid * feat)),
             svgan::Tensor<float>::param({4 * hid, hid}, random_values(rng, 4 * hid * hid)),
             svgan::Tensor<float>::param({4 * hid}, random_values(rng, 4 * hid))};
    std::vector<svgan::Tensor<float>> xs;
    for (std::size_t t = 0; t < steps; ++t) {
        xs.push_back(svgan::Tensor<float>::from({feat}, random_values(rng, feat)));
    }
    for (auto _ : state) {
        auto hs = svgan::bilstm_sequence(xs, p);
        benchmark::DoNotOptimize(hs.back().data().data());
    }
}

void bm_generator_forward(benchmark::State& state) {
    const std::size_t base = static_cast<std::size_t>(state.range(0));
    svgan::GeneratorConfig gc;
    gc.in_channels = 1;
    gc.base_channels = base;
    gc.height = 32;
    gc.width = 32;
    svgan::Generator<float> gen(gc, 7);
    svgan::Rng rng(2);
    std::vector<svgan::Tensor<float>> xs;
    for (std::size_t s = 0; s < 8; ++s) {
        xs.push_back(svgan::Tensor<float>::from({1, 32, 32}, random_values(rng, 32 * 32)));
    }
    for (auto _ : state) {
        auto out = gen.forward(xs, svgan::Mode::kInfer);
        benchmark::DoNotOptimize(out.disease_probs.data().data());
    }
}

void bm_hausdorff(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    svgan::Rng rng(3);
    svgan::Mask a = svgan::Mask::zeros(hw, hw);
    svgan::Mask b = svgan::Mask::zeros(hw, hw);
    for (auto& v : a.data) v = rng.uniform() < 0.3 ? 1 : 0;
    for (auto& v : b.data) v = rng.uniform() < 0.3 ? 1 : 0;
    for (auto _ : state) {
        auto d = svgan::hausdorff(a, b);
        benchmark::DoNotOptimize(d);
    }
}

} // namespace

BENCHMARK(bm_conv2d_forward)->Args({8, 32})->Args({16, 64});
BENCHMARK(bm_conv2d_train_step)->Args({8, 32});
BENCHMARK(bm_maxpool2d)->Arg(64);
BENCHMARK(bm_bilstm)->Arg(8)->Arg(16);
BENCHMARK(bm_generator_forward)->Arg(2)->Arg(4);
BENCHMARK(bm_hausdorff)->Arg(32)->Arg(64);
