#include <benchmark/benchmark.h>

#include <random>

#include "kite/index.hpp"

using namespace kite;

namespace {

// Flat-scan search cost is linear in the index size; this tracks the
// per-generation-step retrieval latency as documents grow.
static void BM_IndexSearch(benchmark::State& state) {
    const auto entries = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 64;
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);

    LayerIndex idx(0, d);
    for (std::size_t i = 0; i < entries; ++i) {
        IndexEntry e;
        e.vector.resize(d);
        for (auto& x : e.vector) x = dist(rng);
        e.position = i;
        idx.append(std::move(e));
    }
    Matrix w_q(d, d), w_k(d, d);
    for (std::size_t i = 0; i < w_q.size(); ++i) {
        w_q.data()[i] = dist(rng);
        w_k.data()[i] = dist(rng);
    }
    std::vector<float> query(d);
    for (auto& x : query) x = dist(rng);

    for (auto _ : state) {
        benchmark::DoNotOptimize(idx.search(query, w_q, w_k, 4, 64));
    }
    state.SetItemsProcessed(state.iterations() * entries);
}

}  // namespace

BENCHMARK(BM_IndexSearch)->Arg(256)->Arg(1024)->Arg(4096);
