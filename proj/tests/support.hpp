#pragma once

// Shared helpers for the unit and acceptance suites: seeded random inputs,
// independent reference implementations (oracles), scratch directories, and
// the hand-constructed copy-task model used for the needle-retrieval checks.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "kite/dataset.hpp"
#include "kite/matrix.hpp"
#include "kite/model.hpp"

namespace kite::test {

inline Matrix random_matrix(std::mt19937& rng, std::size_t rows,
                            std::size_t cols, float lo = -1.0f,
                            float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

inline std::vector<TokenId> random_tokens(std::mt19937& rng, std::size_t n,
                                          std::size_t vocab) {
    std::uniform_int_distribution<TokenId> dist(0,
                                                static_cast<TokenId>(vocab - 1));
    std::vector<TokenId> out(n);
    for (auto& t : out) t = dist(rng);
    return out;
}

// Unique scratch directory; removed when the object goes out of scope.
class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<int> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        path_ = base / ("kite_test_" + std::to_string(::getpid()) + "_" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const {
        return (path_ / name).string();
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
//  Independent oracles (double precision, plain loops)
// ---------------------------------------------------------------------------

// Naive float triple loop, deliberately separate from kite::matmul.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            float acc = 0.0f;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            out.at(i, j) = acc;
        }
    }
    return out;
}

// Reference RoPE (long double) used by the dense-attention oracle.
inline void oracle_rope_row(std::vector<long double>& row, std::size_t pos,
                            double base) {
    for (std::size_t i = 0; 2 * i + 1 < row.size(); ++i) {
        const long double angle =
            static_cast<long double>(pos) *
            std::pow(static_cast<long double>(base),
                     -2.0L * static_cast<long double>(i) /
                         static_cast<long double>(row.size()));
        const long double c = std::cos(angle);
        const long double s = std::sin(angle);
        const long double x = row[2 * i];
        const long double y = row[2 * i + 1];
        row[2 * i] = x * c - y * s;
        row[2 * i + 1] = x * s + y * c;
    }
}

// Dense multi-head attention oracle over already-normalized inputs with an
// arbitrary visibility mask (true = visible). Mirrors the model contract but
// shares no code with the implementation.
inline Matrix oracle_attention(const Matrix& x_q, const Matrix& x_kv,
                               const std::vector<std::size_t>& q_pos,
                               const std::vector<std::size_t>& kv_pos,
                               const std::vector<std::vector<bool>>& visible,
                               const LayerWeights& lw,
                               const ModelConfig& config) {
    const std::size_t dh = config.d_head;
    Matrix out(x_q.rows(), config.d_model);
    std::vector<std::vector<long double>> context(
        x_q.rows(), std::vector<long double>(config.d_model, 0.0L));
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        // project and rotate
        std::vector<std::vector<long double>> q(x_q.rows()), k(x_kv.rows()),
            v(x_kv.rows());
        for (std::size_t i = 0; i < x_q.rows(); ++i) {
            q[i].assign(dh, 0.0L);
            for (std::size_t c = 0; c < dh; ++c) {
                for (std::size_t d = 0; d < config.d_model; ++d) {
                    q[i][c] += static_cast<long double>(x_q.at(i, d)) *
                               static_cast<long double>(lw.w_q.at(d, h * dh + c));
                }
            }
            oracle_rope_row(q[i], q_pos[i], config.rope_base);
        }
        for (std::size_t j = 0; j < x_kv.rows(); ++j) {
            k[j].assign(dh, 0.0L);
            v[j].assign(dh, 0.0L);
            for (std::size_t c = 0; c < dh; ++c) {
                for (std::size_t d = 0; d < config.d_model; ++d) {
                    k[j][c] += static_cast<long double>(x_kv.at(j, d)) *
                               static_cast<long double>(lw.w_k.at(d, h * dh + c));
                    v[j][c] += static_cast<long double>(x_kv.at(j, d)) *
                               static_cast<long double>(lw.w_v.at(d, h * dh + c));
                }
            }
            oracle_rope_row(k[j], kv_pos[j], config.rope_base);
        }
        const long double scale =
            1.0L / std::sqrt(static_cast<long double>(dh));
        for (std::size_t i = 0; i < x_q.rows(); ++i) {
            std::vector<long double> scores(x_kv.rows(),
                                            -std::numeric_limits<long double>::infinity());
            long double max_score = -std::numeric_limits<long double>::infinity();
            for (std::size_t j = 0; j < x_kv.rows(); ++j) {
                if (!visible[i][j]) continue;
                long double s = 0.0L;
                for (std::size_t c = 0; c < dh; ++c) s += q[i][c] * k[j][c];
                scores[j] = s * scale;
                max_score = std::max(max_score, scores[j]);
            }
            long double denom = 0.0L;
            for (std::size_t j = 0; j < x_kv.rows(); ++j) {
                if (visible[i][j]) denom += std::exp(scores[j] - max_score);
            }
            for (std::size_t j = 0; j < x_kv.rows(); ++j) {
                if (!visible[i][j]) continue;
                const long double w = std::exp(scores[j] - max_score) / denom;
                for (std::size_t c = 0; c < dh; ++c) {
                    context[i][h * dh + c] += w * v[j][c];
                }
            }
        }
    }
    // output projection
    for (std::size_t i = 0; i < x_q.rows(); ++i) {
        for (std::size_t j = 0; j < config.d_model; ++j) {
            long double acc = 0.0L;
            for (std::size_t d = 0; d < config.d_model; ++d) {
                acc += context[i][d] * static_cast<long double>(lw.w_o.at(d, j));
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

// Layer norm matching the model contract (gain only), long double.
inline Matrix oracle_layer_norm(const Matrix& x, const std::vector<float>& gain,
                                float eps = 1e-5f) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        long double mean = 0.0L;
        for (std::size_t c = 0; c < x.cols(); ++c) mean += x.at(r, c);
        mean /= static_cast<long double>(x.cols());
        long double var = 0.0L;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const long double d = x.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<long double>(x.cols());
        const long double inv = 1.0L / std::sqrt(var + static_cast<long double>(eps));
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out.at(r, c) = static_cast<float>((x.at(r, c) - mean) * inv *
                                              static_cast<long double>(gain[c]));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
//  Hand-constructed copy-task model (needle retrieval)
// ---------------------------------------------------------------------------
//
// Single-layer model whose attention copies the value subspace of whichever
// key matches the query direction. Token bytes:
//   ' '        filler, zero embedding
//   'Q'        cue, embedding q_scale at the query dim (dim 2)
//   'A'..'P'   needle candidates: a match signature at the key dim (dim 4)
//              plus an identity component at a dedicated value dim v_N
// The match is asymmetric: W_q reads only the query dim and W_k only the key
// dim, landing on the same coordinate of every head, so the cue token scores
// highly against needle states but not against itself or its own stored
// copy, and every head concentrates its weights on the matching key. W_v/W_o
// pass the value dims through, and the unembedding reads each v_N back into
// its letter's logit: attending to a needle state makes that needle's letter
// the argmax. RoPE pair 0 of every head rotates at full rate, so all content
// lives in pairs >= 1 and rope_base is large enough that those rotations
// stay near-identity.

struct NeedleModel {
    ModelConfig config;
    Weights weights;
    std::vector<char> letters;  // candidate needle tokens
};

inline std::size_t needle_dim(std::size_t i) {
    const std::size_t head = 1 + i / 6;
    const std::size_t offset = 2 + i % 6;
    return 8 * head + offset;
}

inline NeedleModel build_needle_model(std::size_t context_length = 32) {
    NeedleModel m;
    ModelConfig& c = m.config;
    c.n_layers = 1;
    c.n_heads = 4;
    c.d_model = 32;
    c.d_head = 8;
    c.d_ff = 4;
    c.vocab_size = 256;
    c.context_length = context_length;
    c.rope_base = 1e9f;  // pairs >= 1 rotate ~1e-2 rad over a 32-slot window
    c.cross_attn_layers = {0};
    c.seed = 0;
    c.validate();

    constexpr float kQScale = 8.0f;
    constexpr float kNeedleKey = 4.0f;
    constexpr float kNeedleV = 4.0f;
    constexpr std::size_t kQueryDim = 2;  // head 0, pair 1 (slow)
    constexpr std::size_t kKeyDim = 4;    // head 0, pair 2 (slow)

    for (char l = 'A'; l <= 'P'; ++l) m.letters.push_back(l);

    Weights& w = m.weights;
    w.token_embedding = Matrix(c.vocab_size, c.d_model, 0.0f);
    w.token_embedding.at('Q', kQueryDim) = kQScale;
    for (std::size_t i = 0; i < m.letters.size(); ++i) {
        const auto token = static_cast<std::size_t>(m.letters[i]);
        w.token_embedding.at(token, kKeyDim) = kNeedleKey;
        w.token_embedding.at(token, needle_dim(i)) = kNeedleV;
    }

    LayerWeights lw;
    lw.w_q = Matrix(c.d_model, c.d_model, 0.0f);
    lw.w_k = Matrix(c.d_model, c.d_model, 0.0f);
    lw.w_v = Matrix(c.d_model, c.d_model, 0.0f);
    lw.w_o = Matrix(c.d_model, c.d_model, 0.0f);
    // Queries read the cue dim and keys the signature dim, both landing on
    // coordinate 2 (a slow pair) of every head so each head's weights favor
    // the matching key; V extracts only the value dims, O passes them on.
    for (std::size_t head = 0; head < c.n_heads; ++head) {
        lw.w_q.at(kQueryDim, 8 * head + 2) = 1.0f;
        lw.w_k.at(kKeyDim, 8 * head + 2) = 1.0f;
    }
    for (std::size_t i = 0; i < m.letters.size(); ++i) {
        const std::size_t d = needle_dim(i);
        lw.w_v.at(d, d) = 1.0f;
        lw.w_o.at(d, d) = 1.0f;
    }
    lw.w_ff1 = Matrix(c.d_model, c.d_ff, 0.0f);
    lw.w_ff2 = Matrix(c.d_ff, c.d_model, 0.0f);
    lw.ln1_gain.assign(c.d_model, 2.0f);
    lw.ln2_gain.assign(c.d_model, 1.0f);
    w.layers.push_back(std::move(lw));

    w.final_norm_gain.assign(c.d_model, 1.0f);
    w.unembedding = Matrix(c.d_model, c.vocab_size, 0.0f);
    for (std::size_t i = 0; i < m.letters.size(); ++i) {
        w.unembedding.at(needle_dim(i),
                         static_cast<std::size_t>(m.letters[i])) = 1.0f;
    }
    return m;
}

// Documents of 2S bytes: cue 'Q' at position S-1 (last prompt token), the
// needle letter at a position in [S, 2S), fillers elsewhere. The answer is
// recoverable only through the index.
inline std::vector<Sample> build_needle_corpus(const NeedleModel& model,
                                               std::size_t count,
                                               std::uint32_t seed) {
    const std::size_t s = model.config.context_length;
    std::mt19937 rng(seed);
    std::uniform_int_distribution<std::size_t> pos_dist(s, 2 * s - 1);
    std::uniform_int_distribution<std::size_t> letter_dist(
        0, model.letters.size() - 1);
    std::vector<Sample> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const char letter = model.letters[letter_dist(rng)];
        std::string doc(2 * s, ' ');
        doc[s - 1] = 'Q';
        doc[pos_dist(rng)] = letter;
        Sample sample;
        sample.id = "needle-" + std::to_string(i);
        sample.document = doc;
        sample.references = {std::string(1, letter)};
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace kite::test
