#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kite/matrix.hpp"

namespace kite {

using TokenId = std::uint32_t;

// Hyperparameters of the decoder-only model. cross_attn_layers is the set of
// layers whose self-attention is replaced by retrieval fusion during
// generation; it travels with the weights file.
struct ModelConfig {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::size_t d_model = 0;
    std::size_t d_head = 0;
    std::size_t d_ff = 0;
    std::size_t vocab_size = 0;
    std::size_t context_length = 0;  // S
    float rope_base = 10000.0f;
    std::vector<std::size_t> cross_attn_layers;  // sorted, at most 3
    std::uint64_t seed = 0;

    // Throws ConfigError when any invariant is broken.
    void validate() const;
};

// One pre-norm block: gain-only layer norms, packed per-head projection
// matrices (head h owns columns [h*d_head, (h+1)*d_head)), GELU feed-forward.
struct LayerWeights {
    Matrix w_q;  // [d_model x d_model]
    Matrix w_k;  // [d_model x d_model]
    Matrix w_v;  // [d_model x d_model]
    Matrix w_o;  // [d_model x d_model]
    Matrix w_ff1;  // [d_model x d_ff]
    Matrix w_ff2;  // [d_ff x d_model]
    std::vector<float> ln1_gain;  // [d_model]
    std::vector<float> ln2_gain;  // [d_model]

    bool operator==(const LayerWeights& other) const = default;
};

struct Weights {
    Matrix token_embedding;  // [vocab_size x d_model]
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm_gain;  // [d_model]
    Matrix unembedding;  // [d_model x vocab_size]

    bool operator==(const Weights& other) const = default;
};

// Per-layer inputs captured during a forward pass, plus the final logits.
// layer_inputs[l] is the residual stream entering layer l (pre-norm).
struct ForwardTrace {
    std::map<std::size_t, Matrix> layer_inputs;
    Matrix logits;  // [seq x vocab_size]
};

// Replaces the attention sub-block of one layer: receives the layer input
// (pre-norm residual stream) and returns the residual stream after the
// attention sub-block, i.e. what `input + attention(ln1(input))` would have
// been. The returned matrix becomes the base for the feed-forward residual,
// which is how retrieval fusion rebases the stream onto h_q.
using AttentionOverride =
    std::function<Matrix(std::size_t layer, const Matrix& layer_input)>;
using AttentionOverrideMap = std::map<std::size_t, AttentionOverride>;

// Deterministic function of config.seed: Gaussian entries with standard
// deviation 1/sqrt(d_model), norm gains at 1. Identical bits for identical
// seeds.
Weights init_weights(const ModelConfig& config);

// Binary little-endian weight file: magic "KITE", version, config fields,
// then each tensor row-major f32 in declared order (embedding, per layer
// w_q w_k w_v w_o w_ff1 w_ff2 ln1 ln2, final norm gain, unembedding).
void save_weights(const Weights& weights, const ModelConfig& config,
                  const std::string& path);
std::pair<Weights, ModelConfig> load_weights(const std::string& path);

// Full forward pass with causal self-attention, RoPE positions 0..len-1.
// Layers listed in capture get their input recorded; layers present in
// overrides delegate the attention sub-block to the override.
ForwardTrace forward(const Weights& weights, const ModelConfig& config,
                     std::span<const TokenId> tokens,
                     const std::set<std::size_t>& capture = {},
                     const AttentionOverrideMap& overrides = {});

// One block applied to an explicit residual stream (no embedding, no final
// norm). Matches exactly what forward() does at that layer with no override.
Matrix layer_forward(const Matrix& layer_input, const LayerWeights& lw,
                     const ModelConfig& config);

// Shared attention kernel. Inputs are already layer-normalized; mask is an
// additive 0 / -inf matrix of shape [x_q.rows() x x_kv.rows()]. RoPE is
// applied per head to Q at q_positions and K at kv_positions. Returns the
// output projection, shape [x_q.rows() x d_model]. Raises NumericError
// naming head and row if a non-finite value appears.
Matrix masked_attention(const Matrix& x_q, const Matrix& x_kv,
                        std::span<const std::size_t> q_positions,
                        std::span<const std::size_t> kv_positions,
                        const Matrix& mask, const LayerWeights& lw,
                        const ModelConfig& config);

// Additive causal mask: row i sees columns j <= i.
Matrix causal_mask(std::size_t n);

}  // namespace kite
