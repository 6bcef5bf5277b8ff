#include "kite/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "kite/errors.hpp"

namespace kite {

void ModelConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0 ||
        vocab_size == 0) {
        throw ConfigError("model config: zero-sized dimension");
    }
    if (d_model != n_heads * d_head) {
        throw ConfigError("model config: d_model " + std::to_string(d_model) +
                          " != n_heads " + std::to_string(n_heads) + " * d_head " +
                          std::to_string(d_head));
    }
    if (d_head % 2 != 0) {
        throw ConfigError("model config: d_head must be even for RoPE");
    }
    if (context_length < 2) {
        throw ConfigError("model config: context_length must be >= 2");
    }
    if (cross_attn_layers.size() > 3) {
        throw ConfigError("model config: at most 3 cross-attention layers, got " +
                          std::to_string(cross_attn_layers.size()));
    }
    for (std::size_t l : cross_attn_layers) {
        if (l >= n_layers) {
            throw ConfigError("model config: cross-attention layer " +
                              std::to_string(l) + " out of range (n_layers " +
                              std::to_string(n_layers) + ")");
        }
    }
    if (rope_base <= 0.0f) {
        throw ConfigError("model config: rope_base must be positive");
    }
}

// ---------------------------------------------------------------------------
//  Initialization
// ---------------------------------------------------------------------------

namespace {

// mt19937_64 is fully specified by the standard; the Box-Muller transform is
// spelled out here so the draw sequence does not depend on the standard
// library's normal_distribution implementation.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

    float next(float stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return static_cast<float>(spare_ * stddev);
        }
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return static_cast<float>(r * std::cos(theta) * stddev);
    }

private:
    double uniform_open() {
        // (0, 1): never zero, so log(u1) is finite.
        return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

void fill_gaussian(Matrix& m, GaussianStream& g, float stddev) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = g.next(stddev);
    }
}

}  // namespace

Weights init_weights(const ModelConfig& config) {
    config.validate();
    GaussianStream g(config.seed);
    const float stddev = 1.0f / std::sqrt(static_cast<float>(config.d_model));

    Weights w;
    w.token_embedding = Matrix(config.vocab_size, config.d_model);
    fill_gaussian(w.token_embedding, g, stddev);
    w.layers.resize(config.n_layers);
    for (auto& lw : w.layers) {
        lw.w_q = Matrix(config.d_model, config.d_model);
        lw.w_k = Matrix(config.d_model, config.d_model);
        lw.w_v = Matrix(config.d_model, config.d_model);
        lw.w_o = Matrix(config.d_model, config.d_model);
        lw.w_ff1 = Matrix(config.d_model, config.d_ff);
        lw.w_ff2 = Matrix(config.d_ff, config.d_model);
        fill_gaussian(lw.w_q, g, stddev);
        fill_gaussian(lw.w_k, g, stddev);
        fill_gaussian(lw.w_v, g, stddev);
        fill_gaussian(lw.w_o, g, stddev);
        fill_gaussian(lw.w_ff1, g, stddev);
        fill_gaussian(lw.w_ff2, g, stddev);
        lw.ln1_gain.assign(config.d_model, 1.0f);
        lw.ln2_gain.assign(config.d_model, 1.0f);
    }
    w.final_norm_gain.assign(config.d_model, 1.0f);
    w.unembedding = Matrix(config.d_model, config.vocab_size);
    fill_gaussian(w.unembedding, g, stddev);
    return w;
}

// ---------------------------------------------------------------------------
//  Weight file format
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'K', 'I', 'T', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& path)
        : bytes_(bytes), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(
                     static_cast<unsigned char>(bytes_[pos_ + i]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(
                     static_cast<unsigned char>(bytes_[pos_ + i]))
                 << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void floats(float* dst, std::size_t count) {
        need(count * 4);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(
                            static_cast<unsigned char>(bytes_[pos_ + 4 * i + b]))
                        << (8 * b);
            }
            std::memcpy(dst + i, &bits, 4);
        }
        pos_ += count * 4;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw LengthError("weight file " + path_ + " truncated: need " +
                              std::to_string(pos_ + n) + " bytes, have " +
                              std::to_string(bytes_.size()));
        }
    }

    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

void append_tensor(std::string& out, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) put_f32(out, m.data()[i]);
}

void append_tensor(std::string& out, const std::vector<float>& v) {
    for (float x : v) put_f32(out, x);
}

std::size_t tensor_bytes(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    std::size_t floats = c.vocab_size * d;                       // embedding
    floats += c.n_layers * (4 * d * d + 2 * d * c.d_ff + 2 * d); // blocks
    floats += d;                                                 // final norm
    floats += d * c.vocab_size;                                  // unembedding
    return floats * 4;
}

}  // namespace

void save_weights(const Weights& weights, const ModelConfig& config,
                  const std::string& path) {
    config.validate();
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(config.n_layers));
    put_u32(out, static_cast<std::uint32_t>(config.n_heads));
    put_u32(out, static_cast<std::uint32_t>(config.d_model));
    put_u32(out, static_cast<std::uint32_t>(config.d_head));
    put_u32(out, static_cast<std::uint32_t>(config.d_ff));
    put_u32(out, static_cast<std::uint32_t>(config.vocab_size));
    put_u32(out, static_cast<std::uint32_t>(config.context_length));
    put_f32(out, config.rope_base);
    put_u32(out, static_cast<std::uint32_t>(config.cross_attn_layers.size()));
    for (std::size_t l : config.cross_attn_layers) {
        put_u32(out, static_cast<std::uint32_t>(l));
    }
    put_u64(out, config.seed);

    append_tensor(out, weights.token_embedding);
    for (const auto& lw : weights.layers) {
        append_tensor(out, lw.w_q);
        append_tensor(out, lw.w_k);
        append_tensor(out, lw.w_v);
        append_tensor(out, lw.w_o);
        append_tensor(out, lw.w_ff1);
        append_tensor(out, lw.w_ff2);
        append_tensor(out, lw.ln1_gain);
        append_tensor(out, lw.ln2_gain);
    }
    append_tensor(out, weights.final_norm_gain);
    append_tensor(out, weights.unembedding);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("short write to " + path);
}

std::pair<Weights, ModelConfig> load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    Reader r(bytes, path);

    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("weight file " + path + ": bad magic");
    }
    r.u32();  // magic, already checked
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError("weight file " + path + ": unsupported version " +
                          std::to_string(version));
    }

    ModelConfig c;
    c.n_layers = r.u32();
    c.n_heads = r.u32();
    c.d_model = r.u32();
    c.d_head = r.u32();
    c.d_ff = r.u32();
    c.vocab_size = r.u32();
    c.context_length = r.u32();
    c.rope_base = r.f32();
    const std::uint32_t n_cross = r.u32();
    for (std::uint32_t i = 0; i < n_cross; ++i) {
        c.cross_attn_layers.push_back(r.u32());
    }
    c.seed = r.u64();
    c.validate();

    const std::size_t expected = tensor_bytes(c);
    if (r.remaining() < expected) {
        throw LengthError("weight file " + path + " truncated: expected " +
                          std::to_string(expected) + " tensor bytes, have " +
                          std::to_string(r.remaining()));
    }

    Weights w;
    w.token_embedding = Matrix(c.vocab_size, c.d_model);
    r.floats(w.token_embedding.data(), w.token_embedding.size());
    w.layers.resize(c.n_layers);
    for (auto& lw : w.layers) {
        lw.w_q = Matrix(c.d_model, c.d_model);
        lw.w_k = Matrix(c.d_model, c.d_model);
        lw.w_v = Matrix(c.d_model, c.d_model);
        lw.w_o = Matrix(c.d_model, c.d_model);
        lw.w_ff1 = Matrix(c.d_model, c.d_ff);
        lw.w_ff2 = Matrix(c.d_ff, c.d_model);
        r.floats(lw.w_q.data(), lw.w_q.size());
        r.floats(lw.w_k.data(), lw.w_k.size());
        r.floats(lw.w_v.data(), lw.w_v.size());
        r.floats(lw.w_o.data(), lw.w_o.size());
        r.floats(lw.w_ff1.data(), lw.w_ff1.size());
        r.floats(lw.w_ff2.data(), lw.w_ff2.size());
        lw.ln1_gain.resize(c.d_model);
        lw.ln2_gain.resize(c.d_model);
        r.floats(lw.ln1_gain.data(), c.d_model);
        r.floats(lw.ln2_gain.data(), c.d_model);
    }
    w.final_norm_gain.resize(c.d_model);
    r.floats(w.final_norm_gain.data(), c.d_model);
    w.unembedding = Matrix(c.d_model, c.vocab_size);
    r.floats(w.unembedding.data(), w.unembedding.size());
    return {std::move(w), std::move(c)};
}

// ---------------------------------------------------------------------------
//  Forward pass
// ---------------------------------------------------------------------------

Matrix causal_mask(std::size_t n) {
    Matrix m(n, n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            m.at(i, j) = kMasked;
        }
    }
    return m;
}

Matrix masked_attention(const Matrix& x_q, const Matrix& x_kv,
                        std::span<const std::size_t> q_positions,
                        std::span<const std::size_t> kv_positions,
                        const Matrix& mask, const LayerWeights& lw,
                        const ModelConfig& config) {
    if (mask.rows() != x_q.rows() || mask.cols() != x_kv.rows()) {
        throw ShapeError("masked_attention: mask " + std::to_string(mask.rows()) +
                         "x" + std::to_string(mask.cols()) + " for q rows " +
                         std::to_string(x_q.rows()) + ", kv rows " +
                         std::to_string(x_kv.rows()));
    }
    const std::size_t dh = config.d_head;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Matrix context(x_q.rows(), config.d_model);

    for (std::size_t h = 0; h < config.n_heads; ++h) {
        Matrix q = apply_rope(matmul_cols(x_q, lw.w_q, h * dh, dh), q_positions,
                              config.rope_base);
        Matrix k = apply_rope(matmul_cols(x_kv, lw.w_k, h * dh, dh), kv_positions,
                              config.rope_base);
        Matrix v = matmul_cols(x_kv, lw.w_v, h * dh, dh);

        // scores = q k^T with the additive mask folded in
        Matrix scores(q.rows(), k.rows());
        for (std::size_t i = 0; i < q.rows(); ++i) {
            for (std::size_t j = 0; j < k.rows(); ++j) {
                if (mask.at(i, j) == kMasked) {
                    scores.at(i, j) = kMasked;
                    continue;
                }
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                    acc += static_cast<double>(q.at(i, c)) *
                           static_cast<double>(k.at(j, c));
                }
                scores.at(i, j) = static_cast<float>(acc);
                if (!std::isfinite(scores.at(i, j))) {
                    throw NumericError("attention: non-finite score at head " +
                                       std::to_string(h) + ", row " +
                                       std::to_string(i));
                }
            }
        }
        Matrix probs = softmax_rows(scores, scale);
        Matrix ctx = matmul(probs, v);
        for (std::size_t i = 0; i < ctx.rows(); ++i) {
            for (std::size_t c = 0; c < dh; ++c) {
                const float val = ctx.at(i, c);
                if (!std::isfinite(val)) {
                    throw NumericError("attention: non-finite context at head " +
                                       std::to_string(h) + ", row " +
                                       std::to_string(i));
                }
                context.at(i, h * dh + c) = val;
            }
        }
    }
    return matmul(context, lw.w_o);
}

namespace {

Matrix feed_forward(const Matrix& x, const LayerWeights& lw) {
    return matmul(gelu(matmul(x, lw.w_ff1)), lw.w_ff2);
}

std::vector<std::size_t> iota_positions(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

}  // namespace

Matrix layer_forward(const Matrix& layer_input, const LayerWeights& lw,
                     const ModelConfig& config) {
    const auto positions = iota_positions(layer_input.rows());
    const Matrix normed = layer_norm(layer_input, lw.ln1_gain);
    Matrix h = add(layer_input,
                   masked_attention(normed, normed, positions, positions,
                                    causal_mask(layer_input.rows()), lw, config));
    return add(h, feed_forward(layer_norm(h, lw.ln2_gain), lw));
}

ForwardTrace forward(const Weights& weights, const ModelConfig& config,
                     std::span<const TokenId> tokens,
                     const std::set<std::size_t>& capture,
                     const AttentionOverrideMap& overrides) {
    if (tokens.empty()) {
        throw ShapeError("forward: empty token sequence");
    }
    if (tokens.size() > config.context_length) {
        throw ContextOverflowError("forward: sequence length " +
                                   std::to_string(tokens.size()) +
                                   " exceeds context " +
                                   std::to_string(config.context_length));
    }
    Matrix h(tokens.size(), config.d_model);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= config.vocab_size) {
            throw VocabError("forward: token id " + std::to_string(tokens[i]) +
                             " outside vocabulary of " +
                             std::to_string(config.vocab_size));
        }
        h.set_row(i, weights.token_embedding.row(tokens[i]));
    }

    ForwardTrace trace;
    const auto positions = iota_positions(tokens.size());
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const LayerWeights& lw = weights.layers[l];
        if (capture.count(l)) {
            trace.layer_inputs.emplace(l, h);
        }
        if (auto it = overrides.find(l); it != overrides.end()) {
            h = it->second(l, h);
        } else {
            const Matrix normed = layer_norm(h, lw.ln1_gain);
            h = add(h, masked_attention(normed, normed, positions, positions,
                                        causal_mask(h.rows()), lw, config));
        }
        h = add(h, feed_forward(layer_norm(h, lw.ln2_gain), lw));
    }
    trace.logits = matmul(layer_norm(h, weights.final_norm_gain),
                          weights.unembedding);
    return trace;
}

}  // namespace kite
