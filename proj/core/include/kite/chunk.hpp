#pragma once

#include <map>
#include <span>
#include <vector>

#include "kite/index.hpp"
#include "kite/model.hpp"

namespace kite {

// One overlapping chunk. Tokens in [start, end) are encoded; only positions
// in [store_from, end) contribute index entries (first-instance storage).
struct ChunkSpec {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    std::size_t store_from = 0;
};

struct ChunkPlan {
    std::size_t doc_len = 0;
    std::size_t chunk_len = 0;
    std::size_t stride = 0;
    std::vector<ChunkSpec> chunks;
};

// Chunk i starts at i*stride; the final chunk is clamped to end at doc_len.
// store_from of chunk i>0 is the previous chunk's end, so the stored ranges
// partition [0, doc_len) exactly.
ChunkPlan plan_chunks(std::size_t doc_len, std::size_t chunk_len,
                      std::size_t stride, std::size_t context_length);

// Pass one: encode every chunk with plain causal attention (chunk-relative
// RoPE positions), capture the layer inputs at each cross-attention layer,
// and append the first-instance rows into that layer's index with absolute
// document positions.
void encode_and_index(std::span<const TokenId> doc, const Weights& weights,
                      const ModelConfig& config,
                      std::map<std::size_t, LayerIndex>& indices,
                      const ChunkPlan& plan);

}  // namespace kite
