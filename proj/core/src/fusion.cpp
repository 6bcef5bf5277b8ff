#include "kite/fusion.hpp"

#include <algorithm>
#include <numeric>

#include "kite/errors.hpp"

namespace kite {

RetentionConfig RetentionConfig::from_alphas(std::size_t alpha_q,
                                             std::size_t alpha_kv,
                                             std::size_t context_length,
                                             std::size_t k) {
    RetentionConfig r;
    r.alpha_q = alpha_q;
    r.beta_q = context_length - alpha_q;
    r.alpha_kv = alpha_kv;
    r.beta_kv = context_length - alpha_kv;
    r.k = (k == 0) ? context_length : k;
    r.validate(context_length);
    return r;
}

void RetentionConfig::validate(std::size_t context_length) const {
    const std::size_t s = context_length;
    if (alpha_q > s || beta_q > s || alpha_kv > s || beta_kv > s) {
        throw ConfigError("retention: sizes must be within [0, S]");
    }
    if (alpha_q + beta_q != s || alpha_kv + beta_kv != s) {
        throw ConfigError("retention: alpha_q + beta_q and alpha_kv + beta_kv "
                          "must equal S = " + std::to_string(s) + " (got " +
                          std::to_string(alpha_q) + "+" + std::to_string(beta_q) +
                          ", " + std::to_string(alpha_kv) + "+" +
                          std::to_string(beta_kv) + ")");
    }
    if (k < std::max(beta_q, beta_kv)) {
        throw ConfigError("retention: k = " + std::to_string(k) +
                          " cannot satisfy slices needing " +
                          std::to_string(std::max(beta_q, beta_kv)) +
                          " retrieved rows");
    }
}

RetrievedSet retrieve_neighbors(const Matrix& h_ca, const LayerIndex& idx,
                                const Matrix& w_q, const Matrix& w_k,
                                std::size_t n_heads, std::size_t k) {
    if (h_ca.rows() == 0) {
        throw ShapeError("retrieve_neighbors: h_CA has no rows");
    }
    const auto hits = idx.search(h_ca.row(h_ca.rows() - 1), w_q, w_k, n_heads, k);
    RetrievedSet out;
    out.states = Matrix(hits.size(), idx.d_model());
    out.positions.reserve(hits.size());
    out.scores.reserve(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const IndexEntry& e = idx.entry(hits[i].entry_id);
        out.states.set_row(i, e.vector);
        out.positions.push_back(e.position);
        out.scores.push_back(hits[i].score);
    }
    return out;
}

namespace {

// Retained retrieved rows: the top `keep` of the ascending retrieved list,
// re-sorted ascending by source position. Short lists are padded by
// recycling the highest-scoring rows; pads sit at the low end so distinct
// entries survive slicing preferentially.
struct RetainedRows {
    Matrix states;
    std::vector<std::size_t> positions;
};

RetainedRows retain_retrieved(const RetrievedSet& retrieved, std::size_t keep) {
    const std::size_t n = retrieved.states.rows();
    RetainedRows out;
    out.states = Matrix(keep, retrieved.states.cols());
    out.positions.resize(keep);
    if (keep == 0) return out;
    if (n == 0) {
        throw ShapeError("fuse: no retrieved rows to retain");
    }

    // Row indices into the padded ascending list, top `keep` slice.
    // Padded list = [pads (recycled top rows)...; original ascending rows].
    std::vector<std::size_t> rows(keep);
    if (keep <= n) {
        std::iota(rows.begin(), rows.end(), n - keep);
    } else {
        const std::size_t pads = keep - n;
        for (std::size_t i = 0; i < pads; ++i) {
            rows[i] = n - 1 - (i % n);  // recycle from the highest score down
        }
        std::iota(rows.begin() + pads, rows.end(), 0);
    }

    // Ascending source position, stable so recycled duplicates keep order.
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) {
                         return retrieved.positions[a] < retrieved.positions[b];
                     });
    for (std::size_t i = 0; i < keep; ++i) {
        out.states.set_row(i, retrieved.states.row(rows[i]));
        out.positions[i] = retrieved.positions[rows[i]];
    }
    return out;
}

std::size_t scaled_keep(std::size_t beta, std::size_t window,
                        std::size_t context_length) {
    return window * beta / context_length;  // = beta when window == S
}

}  // namespace

FusedBlock fuse(const RetrievedSet& retrieved, const Matrix& h_ca,
                const RetentionConfig& retention, std::size_t context_length) {
    retention.validate(context_length);
    const std::size_t window = h_ca.rows();
    if (window == 0 || window > context_length) {
        throw ShapeError("fuse: live window of " + std::to_string(window) +
                         " rows for context " + std::to_string(context_length));
    }

    const std::size_t rq = scaled_keep(retention.beta_q, window, context_length);
    const std::size_t rkv = scaled_keep(retention.beta_kv, window, context_length);

    const RetainedRows keep_q = retain_retrieved(retrieved, rq);
    const RetainedRows keep_kv = retain_retrieved(retrieved, rkv);

    FusedBlock block;
    block.q_retrieved = rq;
    block.kv_retrieved = rkv;
    block.h_q = concat_rows(keep_q.states, h_ca.slice_rows(rq, window));
    block.h_kv = concat_rows(keep_kv.states, h_ca.slice_rows(rkv, window));

    block.q_slot_positions.resize(window);
    block.kv_slot_positions.resize(window);
    std::iota(block.q_slot_positions.begin(), block.q_slot_positions.end(), 0);
    std::iota(block.kv_slot_positions.begin(), block.kv_slot_positions.end(), 0);

    // Source positions: retrieved rows carry index positions; live rows are
    // identified by their window offsets (used only by CausalByPosition).
    block.q_source_positions = keep_q.positions;
    for (std::size_t i = rq; i < window; ++i) {
        block.q_source_positions.push_back(i);
    }
    block.kv_source_positions = keep_kv.positions;
    for (std::size_t i = rkv; i < window; ++i) {
        block.kv_source_positions.push_back(i);
    }

    // Mask: the retrieved prefix is visible to every query row; live keys are
    // causal by slot index; retrieved-slot queries normally see only the
    // prefix. When the prefix is empty (alpha_kv = S with alpha_q < S) they
    // fall back to causal slot visibility so no row is fully masked.
    block.mask = Matrix(window, window, kMasked);
    for (std::size_t i = 0; i < window; ++i) {
        const bool live_query = i >= rq;
        for (std::size_t j = 0; j < rkv; ++j) {
            if (live_query || retention.prefix_mask == PrefixMaskMode::Bidirectional ||
                block.kv_source_positions[j] <= block.q_source_positions[i]) {
                block.mask.at(i, j) = 0.0f;
            }
        }
        if (live_query || rkv == 0) {
            for (std::size_t j = rkv; j <= i && j < window; ++j) {
                block.mask.at(i, j) = 0.0f;
            }
        }
        // CausalByPosition can mask a retrieved query below every prefix key;
        // re-open the full prefix for that row rather than leave it empty.
        bool any = false;
        for (std::size_t j = 0; j < window; ++j) {
            if (block.mask.at(i, j) != kMasked) {
                any = true;
                break;
            }
        }
        if (!any) {
            for (std::size_t j = 0; j < rkv; ++j) block.mask.at(i, j) = 0.0f;
        }
    }
    return block;
}

Matrix cross_attention_forward(const FusedBlock& block, const LayerWeights& lw,
                               const ModelConfig& config) {
    const Matrix q_normed = layer_norm(block.h_q, lw.ln1_gain);
    const Matrix kv_normed = layer_norm(block.h_kv, lw.ln1_gain);
    return masked_attention(q_normed, kv_normed, block.q_slot_positions,
                            block.kv_slot_positions, block.mask, lw, config);
}

Matrix retrieval_layer_forward(const Matrix& layer_input, const LayerIndex& idx,
                               const LayerWeights& lw, const ModelConfig& config,
                               const RetentionConfig& retention,
                               std::vector<float>* staleness_sink) {
    if (staleness_sink) {
        const auto last = layer_input.row(layer_input.rows() - 1);
        staleness_sink->assign(last.begin(), last.end());
    }
    const RetrievedSet retrieved = retrieve_neighbors(
        layer_input, idx, lw.w_q, lw.w_k, config.n_heads, retention.k);
    const FusedBlock block =
        fuse(retrieved, layer_input, retention, config.context_length);
    return add(block.h_q, cross_attention_forward(block, lw, config));
}

AttentionOverrideMap make_retrieval_overrides(
    const Weights& weights, const ModelConfig& config,
    const std::map<std::size_t, LayerIndex>& indices,
    const RetentionConfig& retention,
    std::map<std::size_t, std::vector<float>>* staleness_rows) {
    AttentionOverrideMap overrides;
    for (std::size_t l : config.cross_attn_layers) {
        const LayerIndex& idx = indices.at(l);
        overrides[l] = [&weights, &config, &idx, retention, staleness_rows](
                           std::size_t layer, const Matrix& layer_input) {
            std::vector<float>* sink =
                staleness_rows ? &(*staleness_rows)[layer] : nullptr;
            return retrieval_layer_forward(layer_input, idx,
                                           weights.layers[layer], config,
                                           retention, sink);
        };
    }
    return overrides;
}

}  // namespace kite
