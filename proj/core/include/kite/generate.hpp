#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kite/chunk.hpp"
#include "kite/fusion.hpp"
#include "kite/model.hpp"

namespace kite {

enum class DecodeMode : std::uint8_t { Greedy = 0 };

// Token-level three-part prompt layout. All segments may be empty, in which
// case a question is simply appended to the truncated article.
struct PromptTemplate {
    std::vector<TokenId> article_prefix;
    std::vector<TokenId> question_prefix;
    std::vector<TokenId> answer_prefix;

    std::size_t overhead() const {
        return article_prefix.size() + question_prefix.size() +
               answer_prefix.size();
    }
};

struct GenerationConfig {
    std::size_t max_new_tokens = 1;
    std::optional<TokenId> stop_token;
    DecodeMode decode_mode = DecodeMode::Greedy;
    RetentionConfig retention;
    std::size_t chunk_len = 0;  // 0 -> S
    std::size_t stride = 0;     // 0 -> S/2
    bool staleness_updates = true;
    bool record_step_logits = false;
    PromptTemplate prompt_template;
};

struct GenerationState {
    std::vector<TokenId> live_tokens;  // at most S ids, oldest evicted first
    std::size_t step = 0;              // tokens generated so far
    std::map<std::size_t, LayerIndex> indices;
};

struct GenerationResult {
    std::vector<TokenId> tokens;
    std::vector<std::vector<float>> step_logits;  // final-slot logits per step
    GenerationState state;
};

// Live context: the document head truncated to S, or the three-part
// article/question/answer prompt with the article head-truncated so the
// question and template always fit. Throws PromptOverflowError when the
// fixed parts alone exceed S.
std::vector<TokenId> prepare_context(std::span<const TokenId> document,
                                     const std::optional<std::vector<TokenId>>& question,
                                     std::size_t context_length,
                                     const PromptTemplate& tmpl = {});

// Appends one generated-origin entry per cross-attention layer, holding that
// layer's last-position input, at position document_len + completed step.
void staleness_update(GenerationState& state,
                      const std::map<std::size_t, std::vector<float>>& last_inputs,
                      std::size_t document_len);

// Two-pass generation: pass one chunks the full document and fills one index
// per cross-attention layer; pass two greedily decodes from the live window,
// with retrieval fusion overriding attention at each such layer and a
// staleness append per step. With no cross-attention layers configured this
// is plain greedy decoding over the prepared context.
GenerationResult generate(const Weights& weights, const ModelConfig& config,
                          std::span<const TokenId> document,
                          const GenerationConfig& gen,
                          const std::optional<std::vector<TokenId>>& question =
                              std::nullopt);

}  // namespace kite
