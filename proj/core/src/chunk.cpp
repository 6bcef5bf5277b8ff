#include "kite/chunk.hpp"

#include <algorithm>

#include "kite/errors.hpp"

namespace kite {

ChunkPlan plan_chunks(std::size_t doc_len, std::size_t chunk_len,
                      std::size_t stride, std::size_t context_length) {
    if (doc_len == 0) {
        throw PlanError("plan_chunks: empty document");
    }
    if (stride == 0 || stride > chunk_len) {
        throw ConfigError("plan_chunks: stride " + std::to_string(stride) +
                          " must be in [1, chunk_len " +
                          std::to_string(chunk_len) + "]");
    }
    if (chunk_len > context_length) {
        throw ConfigError("plan_chunks: chunk_len " + std::to_string(chunk_len) +
                          " exceeds context " + std::to_string(context_length));
    }

    ChunkPlan plan;
    plan.doc_len = doc_len;
    plan.chunk_len = chunk_len;
    plan.stride = stride;

    std::size_t covered = 0;  // everything below this is already stored
    for (std::size_t i = 0; covered < doc_len; ++i) {
        ChunkSpec spec;
        spec.start = i * stride;
        spec.end = std::min(spec.start + chunk_len, doc_len);
        spec.store_from = (i == 0) ? 0 : covered;
        covered = spec.end;
        plan.chunks.push_back(spec);
    }
    return plan;
}

void encode_and_index(std::span<const TokenId> doc, const Weights& weights,
                      const ModelConfig& config,
                      std::map<std::size_t, LayerIndex>& indices,
                      const ChunkPlan& plan) {
    if (plan.doc_len != doc.size()) {
        throw PlanError("encode_and_index: plan covers " +
                        std::to_string(plan.doc_len) + " tokens, document has " +
                        std::to_string(doc.size()));
    }
    std::set<std::size_t> capture;
    for (std::size_t l : config.cross_attn_layers) {
        if (!indices.count(l)) {
            throw PlanError("encode_and_index: no index for layer " +
                            std::to_string(l));
        }
        capture.insert(l);
    }

    for (const ChunkSpec& spec : plan.chunks) {
        const ForwardTrace trace =
            forward(weights, config, doc.subspan(spec.start, spec.end - spec.start),
                    capture);
        for (std::size_t l : config.cross_attn_layers) {
            const Matrix& states = trace.layer_inputs.at(l);
            auto& idx = indices.at(l);
            for (std::size_t pos = spec.store_from; pos < spec.end; ++pos) {
                IndexEntry entry;
                const auto row = states.row(pos - spec.start);
                entry.vector.assign(row.begin(), row.end());
                entry.position = pos;
                entry.origin = EntryOrigin::Chunk;
                idx.append(std::move(entry));
            }
        }
    }
}

}  // namespace kite
