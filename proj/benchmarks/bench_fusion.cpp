#include <benchmark/benchmark.h>

#include <random>

#include "eaef/fusion.hpp"
#include "eaef/network.hpp"

namespace {

eaef::Tensor random_features(int c, int hw, std::mt19937_64& rng) {
    eaef::Tensor t({1, c, hw, hw});
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (auto& v : t.v) v = d(rng);
    return t;
}

void BM_EaefForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    std::mt19937_64 rng(1);
    eaef::EaefParams p = eaef::make_eaef_params<float>(c, rng);
    eaef::Tensor f_rgb = random_features(c, hw, rng);
    eaef::Tensor f_t = random_features(c, hw, rng);
    for (auto _ : state) {
        auto s = eaef::eaef_forward(f_rgb, f_t, p);
        benchmark::DoNotOptimize(s.f_final.v.data());
    }
}
BENCHMARK(BM_EaefForward)->Args({8, 32})->Args({16, 16})->Args({32, 8})->Args({64, 4})->Args({64, 2});

void BM_EaefBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int hw = static_cast<int>(state.range(1));
    std::mt19937_64 rng(1);
    eaef::EaefParams p = eaef::make_eaef_params<float>(c, rng);
    eaef::Tensor f_rgb = random_features(c, hw, rng);
    eaef::Tensor f_t = random_features(c, hw, rng);
    auto s = eaef::eaef_forward(f_rgb, f_t, p);
    eaef::Tensor g = eaef::Tensor::full(s.f_final.dims, 1.0f);
    for (auto _ : state) {
        auto grads = eaef::eaef_backward(s, g, p);
        benchmark::DoNotOptimize(grads.f_rgb.v.data());
    }
}
BENCHMARK(BM_EaefBackward)->Args({16, 16})->Args({64, 4});

void BM_NetForward(benchmark::State& state) {
    eaef::ModelConfig cfg;
    eaef::Model model = eaef::make_model(cfg, 1);
    std::mt19937_64 rng(2);
    eaef::Tensor rgb({1, 3, 64, 64}), thermal({1, 1, 64, 64});
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (auto& v : rgb.v) v = d(rng);
    for (auto& v : thermal.v) v = d(rng);
    for (auto _ : state) {
        eaef::Tensor logits = eaef::net_forward(model, rgb, thermal);
        benchmark::DoNotOptimize(logits.v.data());
    }
}
BENCHMARK(BM_NetForward);

}  // namespace

BENCHMARK_MAIN();
