#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kite/matrix.hpp"

namespace kite {

enum class EntryOrigin : std::uint8_t { Chunk = 0, Generated = 1 };

// One stored layer-input hidden state with its absolute source position.
struct IndexEntry {
    std::vector<float> vector;
    std::size_t position = 0;
    EntryOrigin origin = EntryOrigin::Chunk;
};

// (entry id, score) pair returned by search.
struct SearchHit {
    std::size_t entry_id = 0;
    double score = 0.0;
};

struct LayerWeights;
struct ModelConfig;

// Append-only exact kNN index over the hidden states stored for one
// cross-attention layer. Scoring is the projected dot product
//   score(e) = sum over heads h of (query W_q^(h)) . (e.vector W_k^(h)),
// evaluated against every entry (flat scan); no approximation.
class LayerIndex {
public:
    LayerIndex(std::size_t layer_id, std::size_t d_model);

    std::size_t layer_id() const { return layer_id_; }
    std::size_t d_model() const { return d_model_; }
    std::size_t size() const { return entries_.size(); }
    const IndexEntry& entry(std::size_t i) const { return entries_[i]; }

    // Appends one entry; existing entries are never touched.
    void append(IndexEntry entry);

    // Top-k by projected dot product, summed across heads. Selection ranks by
    // (score desc, position asc); the result is reversed to ascending score so
    // that downstream [alpha:] slicing drops the weakest entries first.
    std::vector<SearchHit> search(std::span<const float> query,
                                  const Matrix& w_q, const Matrix& w_k,
                                  std::size_t n_heads, std::size_t k) const;

    // Debug dump: header (layer_id, d_model, count), then per entry the
    // position (u64 LE), origin byte, and d_model f32 LE values.
    void save(const std::string& path) const;
    static LayerIndex load(const std::string& path);

private:
    std::size_t layer_id_;
    std::size_t d_model_;
    std::vector<IndexEntry> entries_;
};

}  // namespace kite
