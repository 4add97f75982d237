// Serial reference path against the OpenMP batch path, plus the conv
// kernel on its own. Run with OMP_NUM_THREADS set to compare scaling.
#include <benchmark/benchmark.h>

#include "hdawf/kernels.hpp"
#include "hdawf/model.hpp"
#include "hdawf/rng.hpp"

using namespace hdawf;

namespace {

struct Setup {
    ModelParams params;
    std::vector<Signal> xs;
    std::vector<SoftLabel> ys;
};

Setup make_setup(std::size_t len, std::size_t batch) {
    Setup s;
    s.params = init_params(ModelConfig::standard(len, 20), 1);
    Rng rng = make_rng(2);
    for (std::size_t i = 0; i < batch; ++i) {
        Signal x(len);
        for (auto& v : x) v = uniform_int(rng, 0, 1) ? 1.0 : -1.0;
        s.xs.push_back(std::move(x));
        s.ys.push_back(one_hot(i % 20, 20));
    }
    return s;
}

void forward_batch(benchmark::State& state, Exec exec) {
    const auto s = make_setup(static_cast<std::size_t>(state.range(0)), 32);
    for (auto _ : state) benchmark::DoNotOptimize(forward(s.params, s.xs, exec));
    state.SetItemsProcessed(state.iterations() * 32);
}

void backward_batch(benchmark::State& state, Exec exec) {
    const auto s = make_setup(static_cast<std::size_t>(state.range(0)), 32);
    for (auto _ : state) benchmark::DoNotOptimize(backward(s.params, s.xs, s.ys, exec));
    state.SetItemsProcessed(state.iterations() * 32);
}

void conv_kernel(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const auto g = kernels::make_conv_geom(32, 64, 3, 2, 1, false, len);
    std::vector<double> x(32 * len, 0.5), w(g.weight_count(), 0.01), b(64, 0.0), y(64 * g.out_len);
    for (auto _ : state) {
        kernels::conv1d_forward(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK_CAPTURE(forward_batch, serial, Exec::serial)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(forward_batch, parallel, Exec::parallel)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward_batch, serial, Exec::serial)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(backward_batch, parallel, Exec::parallel)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_kernel)->Arg(1000)->Arg(5000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
