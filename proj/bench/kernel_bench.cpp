// Timing comparison of the reference kernels against the optimized ones,
// with threading off and on. Sizes mirror the convolutional stack the
// trainer actually runs (second block of the default filter plan).

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "tsab/kernels.hpp"
#include "tsab/rng.hpp"

namespace {

using tsab::kernels::set_parallel;

std::vector<double> random_vec(std::int64_t n, std::uint64_t seed) {
    tsab::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

constexpr std::int64_t kM = 256, kK = 640, kN = 64;

void bm_matmul_ref(benchmark::State& state) {
    auto a = random_vec(kM * kK, 1), b = random_vec(kK * kN, 2);
    std::vector<double> c(kM * kN);
    for (auto _ : state) {
        tsab::kernels::ref::matmul_nn(a.data(), b.data(), c.data(), kM, kK, kN);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * kM * kK * kN);
}

void bm_matmul_serial(benchmark::State& state) {
    auto a = random_vec(kM * kK, 1), b = random_vec(kK * kN, 2);
    std::vector<double> c(kM * kN);
    set_parallel(false);
    for (auto _ : state) {
        tsab::kernels::matmul_nn(a.data(), b.data(), c.data(), kM, kK, kN);
        benchmark::DoNotOptimize(c.data());
    }
    set_parallel(true);
    state.SetItemsProcessed(state.iterations() * kM * kK * kN);
}

void bm_matmul_parallel(benchmark::State& state) {
    auto a = random_vec(kM * kK, 1), b = random_vec(kK * kN, 2);
    std::vector<double> c(kM * kN);
    for (auto _ : state) {
        tsab::kernels::matmul_nn(a.data(), b.data(), c.data(), kM, kK, kN);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * kM * kK * kN);
}

constexpr std::int64_t kB = 32, kCin = 128, kCout = 256, kT = 64, kD = 5;

void bm_conv_ref(benchmark::State& state) {
    auto x = random_vec(kB * kCin * kT, 3);
    auto w = random_vec(kCout * kD * kCin, 4);
    auto bias = random_vec(kCout, 5);
    std::vector<double> y(kB * kCout * kT);
    for (auto _ : state) {
        tsab::kernels::ref::conv1d_forward(x.data(), w.data(), bias.data(), y.data(),
                                           kB, kCin, kCout, kT, kD);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * kB * kCout * kT * kD * kCin);
}

void bm_conv_serial(benchmark::State& state) {
    auto x = random_vec(kB * kCin * kT, 3);
    auto w = random_vec(kCout * kD * kCin, 4);
    auto bias = random_vec(kCout, 5);
    std::vector<double> y(kB * kCout * kT);
    set_parallel(false);
    for (auto _ : state) {
        tsab::kernels::conv1d_forward(x.data(), w.data(), bias.data(), y.data(),
                                      kB, kCin, kCout, kT, kD);
        benchmark::DoNotOptimize(y.data());
    }
    set_parallel(true);
    state.SetItemsProcessed(state.iterations() * kB * kCout * kT * kD * kCin);
}

void bm_conv_parallel(benchmark::State& state) {
    auto x = random_vec(kB * kCin * kT, 3);
    auto w = random_vec(kCout * kD * kCin, 4);
    auto bias = random_vec(kCout, 5);
    std::vector<double> y(kB * kCout * kT);
    for (auto _ : state) {
        tsab::kernels::conv1d_forward(x.data(), w.data(), bias.data(), y.data(),
                                      kB, kCin, kCout, kT, kD);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * kB * kCout * kT * kD * kCin);
}

void bm_conv_bwd_params_serial(benchmark::State& state) {
    auto x = random_vec(kB * kCin * kT, 3);
    auto dy = random_vec(kB * kCout * kT, 6);
    std::vector<double> dw(kCout * kD * kCin), db(kCout);
    set_parallel(false);
    for (auto _ : state) {
        tsab::kernels::conv1d_backward_params(x.data(), dy.data(), dw.data(), db.data(),
                                              kB, kCin, kCout, kT, kD);
        benchmark::DoNotOptimize(dw.data());
    }
    set_parallel(true);
    state.SetItemsProcessed(state.iterations() * kB * kCout * kT * kD * kCin);
}

void bm_bn_stats_serial(benchmark::State& state) {
    auto x = random_vec(kB * kCout * kT, 7);
    std::vector<double> mean(kCout), var(kCout);
    set_parallel(false);
    for (auto _ : state) {
        tsab::kernels::bn_channel_stats(x.data(), kB, kCout, kT, mean.data(), var.data());
        benchmark::DoNotOptimize(mean.data());
    }
    set_parallel(true);
    state.SetItemsProcessed(state.iterations() * kB * kCout * kT);
}

BENCHMARK(bm_matmul_ref);
BENCHMARK(bm_matmul_serial);
BENCHMARK(bm_matmul_parallel);
BENCHMARK(bm_conv_ref);
BENCHMARK(bm_conv_serial);
BENCHMARK(bm_conv_parallel);
BENCHMARK(bm_conv_bwd_params_serial);
BENCHMARK(bm_bn_stats_serial);

}  // namespace

BENCHMARK_MAIN();
