// Serial reference vs OpenMP kernels on probe-fitting shapes.
// Args: rows n, columns d.

#include "meco/kernels.hpp"
#include "meco/rng.hpp"

#include <benchmark/benchmark.h>

namespace k = meco::kernels;

namespace {

struct Block {
    std::vector<double> data;
    std::vector<double> mean;
    std::vector<double> v;
    std::vector<float> f32;
    k::RowMajor view;
};

Block make_block(std::size_t n, std::size_t d) {
    meco::Rng rng(n * 131 + d);
    Block b;
    b.data.resize(n * d);
    for (auto & x : b.data) x = rng.normal();
    b.f32.assign(b.data.begin(), b.data.end());
    b.view = {b.data, n, d};
    b.mean = k::serial::column_mean(b.view);
    b.v.resize(d);
    for (auto & x : b.v) x = rng.normal();
    return b;
}

template <auto Fn>
void bm_covariance(benchmark::State & state) {
    const auto b = make_block(state.range(0), state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(b.view, b.mean));
    }
}

template <auto Fn>
void bm_covariance_apply(benchmark::State & state) {
    const auto b = make_block(state.range(0), state.range(1));
    std::vector<double> y(b.v.size());
    for (auto _ : state) {
        Fn(b.view, b.mean, b.v, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <auto Fn>
void bm_project(benchmark::State & state) {
    const auto b = make_block(state.range(0), state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(b.f32, b.view.cols, b.v));
    }
}

template <auto Fn>
void bm_column_mean(benchmark::State & state) {
    const auto b = make_block(state.range(0), state.range(1));
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(b.view));
    }
}

void dense_shapes(benchmark::internal::Benchmark * b) {
    b->Args({32, 8})->Args({400, 64})->Args({2000, 64});
}

void wide_shapes(benchmark::internal::Benchmark * b) {
    b->Args({400, 128})->Args({800, 4096})->Args({4000, 4096});
}

} // namespace

BENCHMARK(bm_covariance<k::serial::covariance>)->Name("covariance/serial")->Apply(dense_shapes);
BENCHMARK(bm_covariance<k::omp::covariance>)->Name("covariance/omp")->Apply(dense_shapes);
BENCHMARK(bm_covariance_apply<k::serial::covariance_apply>)->Name("covariance_apply/serial")->Apply(wide_shapes);
BENCHMARK(bm_covariance_apply<k::omp::covariance_apply>)->Name("covariance_apply/omp")->Apply(wide_shapes);
BENCHMARK(bm_project<k::serial::project>)->Name("project/serial")->Apply(wide_shapes);
BENCHMARK(bm_project<k::omp::project>)->Name("project/omp")->Apply(wide_shapes);
BENCHMARK(bm_column_mean<k::serial::column_mean>)->Name("column_mean/serial")->Apply(wide_shapes);
BENCHMARK(bm_column_mean<k::omp::column_mean>)->Name("column_mean/omp")->Apply(wide_shapes);

BENCHMARK_MAIN();
