#include "kite/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kite/errors.hpp"

namespace kite {

LayerIndex::LayerIndex(std::size_t layer_id, std::size_t d_model)
    : layer_id_(layer_id), d_model_(d_model) {
    if (d_model == 0) {
        throw ConfigError("layer index: d_model must be positive");
    }
}

void LayerIndex::append(IndexEntry entry) {
    if (entry.vector.size() != d_model_) {
        throw ShapeError("index append: vector length " +
                         std::to_string(entry.vector.size()) + " for d_model " +
                         std::to_string(d_model_));
    }
    entries_.push_back(std::move(entry));
}

std::vector<SearchHit> LayerIndex::search(std::span<const float> query,
                                          const Matrix& w_q, const Matrix& w_k,
                                          std::size_t n_heads,
                                          std::size_t k) const {
    if (entries_.empty()) {
        throw EmptyIndexError("search: layer " + std::to_string(layer_id_) +
                              " index is empty");
    }
    if (query.size() != d_model_) {
        throw ShapeError("search: query length " + std::to_string(query.size()) +
                         " for d_model " + std::to_string(d_model_));
    }
    if (k == 0) {
        throw ConfigError("search: k must be >= 1");
    }
    const std::size_t dh = d_model_ / n_heads;

    // Projected query, all heads at once: q_proj = query . W_q  (1 x d_model).
    std::vector<double> q_proj(d_model_, 0.0);
    for (std::size_t j = 0; j < d_model_; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d_model_; ++c) {
            acc += static_cast<double>(query[c]) *
                   static_cast<double>(w_q.at(c, j));
        }
        q_proj[j] = acc;
    }

    std::vector<SearchHit> hits(entries_.size());
    for (std::size_t e = 0; e < entries_.size(); ++e) {
        const auto& vec = entries_[e].vector;
        double score = 0.0;
        for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t c = 0; c < dh; ++c) {
                const std::size_t j = h * dh + c;
                // k_proj[j] = vec . W_k[:, j]
                double kp = 0.0;
                for (std::size_t d = 0; d < d_model_; ++d) {
                    kp += static_cast<double>(vec[d]) *
                          static_cast<double>(w_k.at(d, j));
                }
                score += q_proj[j] * kp;
            }
        }
        hits[e] = {e, score};
    }

    // Rank (score desc, position asc), keep top-k, then flip to ascending.
    const std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + keep, hits.end(),
                      [this](const SearchHit& a, const SearchHit& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return entries_[a.entry_id].position <
                                 entries_[b.entry_id].position;
                      });
    hits.resize(keep);
    std::reverse(hits.begin(), hits.end());
    return hits;
}

// ---------------------------------------------------------------------------
//  Debug dump
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 8);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw LengthError("index file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    if (!f) throw LengthError("index file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void LayerIndex::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    put_u32(f, static_cast<std::uint32_t>(layer_id_));
    put_u32(f, static_cast<std::uint32_t>(d_model_));
    put_u64(f, entries_.size());
    for (const auto& e : entries_) {
        put_u64(f, e.position);
        f.put(static_cast<char>(e.origin));
        for (float x : e.vector) {
            std::uint32_t bits;
            std::memcpy(&bits, &x, 4);
            put_u32(f, bits);
        }
    }
}

LayerIndex LayerIndex::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    const std::uint32_t layer_id = get_u32(f);
    const std::uint32_t d_model = get_u32(f);
    const std::uint64_t count = get_u64(f);
    LayerIndex idx(layer_id, d_model);
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.position = get_u64(f);
        const int origin = f.get();
        if (origin == EOF) throw LengthError("index file truncated");
        e.origin = static_cast<EntryOrigin>(origin);
        e.vector.resize(d_model);
        for (std::uint32_t c = 0; c < d_model; ++c) {
            const std::uint32_t bits = get_u32(f);
            std::memcpy(&e.vector[c], &bits, 4);
        }
        idx.append(std::move(e));
    }
    return idx;
}

}  // namespace kite
