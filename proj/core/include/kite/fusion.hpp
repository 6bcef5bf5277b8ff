#pragma once

#include <map>
#include <vector>

#include "kite/index.hpp"
#include "kite/model.hpp"

namespace kite {

// Visibility of retrieved-prefix keys to retrieved-prefix queries. They form
// a set rather than a causal sequence, so the default is full mutual
// visibility; CausalByPosition orders them by source position instead.
enum class PrefixMaskMode : std::uint8_t { Bidirectional = 0, CausalByPosition = 1 };

// Retention sizes for fusing retrieved states with the live window. The
// alpha/beta pairs are tied to the context length S by alpha + beta = S,
// which is what keeps the fused sequence length equal to S.
struct RetentionConfig {
    std::size_t alpha_q = 0;
    std::size_t beta_q = 0;
    std::size_t alpha_kv = 0;
    std::size_t beta_kv = 0;
    std::size_t k = 0;  // neighbors retrieved per step
    PrefixMaskMode prefix_mask = PrefixMaskMode::Bidirectional;

    // betas derived from alpha + beta = S; k defaults to S.
    static RetentionConfig from_alphas(std::size_t alpha_q, std::size_t alpha_kv,
                                       std::size_t context_length,
                                       std::size_t k = 0);

    void validate(std::size_t context_length) const;
};

// Retrieved states in ascending score order, each with its source position.
struct RetrievedSet {
    Matrix states;  // [n x d_model]
    std::vector<std::size_t> positions;
    std::vector<double> scores;
};

// The fused query/key-value block consumed by cross-attention. h_q rows
// 0..q_retrieved-1 (and h_kv rows 0..kv_retrieved-1) hold the retained
// retrieved states in ascending source-position order; the remaining rows
// are the retained live-window rows. Slot positions run 0..rows-1 and are
// the RoPE positions of the fused sequence. The mask is additive 0 / -inf.
struct FusedBlock {
    Matrix h_q;
    Matrix h_kv;
    std::vector<std::size_t> q_slot_positions;
    std::vector<std::size_t> kv_slot_positions;
    Matrix mask;
    std::size_t q_retrieved = 0;
    std::size_t kv_retrieved = 0;
    std::vector<std::size_t> q_source_positions;   // per q row
    std::vector<std::size_t> kv_source_positions;  // per kv row
};

// Queries the layer index with the last row of h_CA and returns up to k
// entries in ascending score order, each carrying its source position.
RetrievedSet retrieve_neighbors(const Matrix& h_ca, const LayerIndex& idx,
                                const Matrix& w_q, const Matrix& w_k,
                                std::size_t n_heads, std::size_t k);

// Fusion of retrieved and live states:
//   h_q  = [retained retrieved rows (re-sorted by source position); h_CA[beta_q:]]
//   h_kv = [retained retrieved rows (re-sorted by source position); h_CA[beta_kv:]]
// With |h_CA| = S the retained retrieved count is exactly beta = S - alpha.
// Shorter live windows (length T < S) scale the retained count to
// floor(T * beta / S) so the fused length always equals the window length.
// When the retrieved list is shorter than required it is padded by recycling
// the highest-scoring entries, placed so they are sliced away first.
FusedBlock fuse(const RetrievedSet& retrieved, const Matrix& h_ca,
                const RetentionConfig& retention, std::size_t context_length);

// Eq-4-style attention over the fused block: per head, Q/K/V are projected
// from the layer-normalized h_q / h_kv, RoPE is applied at slot positions,
// scores are masked and softmaxed at 1/sqrt(d_head). Returns the attention
// output; the caller rebases the residual stream onto h_q by adding it.
Matrix cross_attention_forward(const FusedBlock& block, const LayerWeights& lw,
                               const ModelConfig& config);

// Convenience: the full override body for one cross-attention layer. If
// staleness_sink is non-null it receives a copy of the layer input's last
// row (the h_CA^(-1) that staleness updates append to the index).
Matrix retrieval_layer_forward(const Matrix& layer_input, const LayerIndex& idx,
                               const LayerWeights& lw, const ModelConfig& config,
                               const RetentionConfig& retention,
                               std::vector<float>* staleness_sink = nullptr);

// Builds the override map that plugs retrieval fusion into forward() at every
// cross-attention layer. staleness_rows, when non-null, collects the last-row
// layer inputs per layer for the subsequent staleness update.
AttentionOverrideMap make_retrieval_overrides(
    const Weights& weights, const ModelConfig& config,
    const std::map<std::size_t, LayerIndex>& indices,
    const RetentionConfig& retention,
    std::map<std::size_t, std::vector<float>>* staleness_rows = nullptr);

}  // namespace kite
