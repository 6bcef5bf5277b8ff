#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "kite/matrix.hpp"

using namespace kite;

namespace {

Matrix random_matrix(std::mt19937& rng, std::size_t rows, std::size_t cols) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(1);
    const Matrix a = random_matrix(rng, n, n);
    const Matrix b = random_matrix(rng, n, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_SoftmaxRows(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(2);
    Matrix scores = random_matrix(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) scores.at(i, j) = kMasked;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax_rows(scores, 0.25f));
    }
}
BENCHMARK(BM_SoftmaxRows)->Arg(128)->Arg(512);

static void BM_ApplyRope(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(3);
    const Matrix states = random_matrix(rng, rows, 64);
    std::vector<std::size_t> positions(rows);
    std::iota(positions.begin(), positions.end(), 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_rope(states, positions, 10000.0f));
    }
}
BENCHMARK(BM_ApplyRope)->Arg(128)->Arg(1024);

static void BM_LayerNorm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(4);
    const Matrix states = random_matrix(rng, rows, 64);
    const std::vector<float> gain(64, 1.0f);
    for (auto _ : state) {
        benchmark::DoNotOptimize(layer_norm(states, gain));
    }
}
BENCHMARK(BM_LayerNorm)->Arg(128)->Arg(1024);
