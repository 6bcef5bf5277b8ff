#include <benchmark/benchmark.h>

#include <random>

#include "kite/chunk.hpp"
#include "kite/generate.hpp"

using namespace kite;

namespace {

ModelConfig bench_config(std::vector<std::size_t> cross_layers) {
    ModelConfig c;
    c.n_layers = 4;
    c.n_heads = 4;
    c.d_model = 64;
    c.d_head = 16;
    c.d_ff = 128;
    c.vocab_size = 256;
    c.context_length = 64;
    c.cross_attn_layers = std::move(cross_layers);
    c.seed = 1;
    return c;
}

std::vector<TokenId> bench_doc(std::size_t n) {
    std::mt19937 rng(2);
    std::uniform_int_distribution<TokenId> dist(0, 255);
    std::vector<TokenId> doc(n);
    for (auto& t : doc) t = dist(rng);
    return doc;
}

}  // namespace

static void BM_ChunkEncode(benchmark::State& state) {
    const ModelConfig c = bench_config({2});
    const Weights w = init_weights(c);
    const auto doc = bench_doc(static_cast<std::size_t>(state.range(0)));
    const ChunkPlan plan =
        plan_chunks(doc.size(), c.context_length, c.context_length / 2,
                    c.context_length);
    for (auto _ : state) {
        std::map<std::size_t, LayerIndex> indices;
        indices.emplace(2, LayerIndex(2, c.d_model));
        encode_and_index(doc, w, c, indices, plan);
        benchmark::DoNotOptimize(indices);
    }
    state.SetItemsProcessed(state.iterations() * doc.size());
}
BENCHMARK(BM_ChunkEncode)->Arg(256)->Arg(1024);

static void BM_GenerateRetrieval(benchmark::State& state) {
    const ModelConfig c = bench_config({2});
    const Weights w = init_weights(c);
    const auto doc = bench_doc(512);
    GenerationConfig gen;
    gen.max_new_tokens = static_cast<std::size_t>(state.range(0));
    gen.retention = RetentionConfig::from_alphas(26, 26, c.context_length);
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate(w, c, doc, gen));
    }
    state.SetItemsProcessed(state.iterations() * gen.max_new_tokens);
}
BENCHMARK(BM_GenerateRetrieval)->Arg(4)->Arg(16);

static void BM_GenerateBaseline(benchmark::State& state) {
    const ModelConfig c = bench_config({});
    const Weights w = init_weights(c);
    const auto doc = bench_doc(512);
    GenerationConfig gen;
    gen.max_new_tokens = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate(w, c, doc, gen));
    }
    state.SetItemsProcessed(state.iterations() * gen.max_new_tokens);
}
BENCHMARK(BM_GenerateBaseline)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
