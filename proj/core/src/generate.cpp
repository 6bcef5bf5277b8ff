#include "kite/generate.hpp"

#include <algorithm>

#include "kite/errors.hpp"

namespace kite {

std::vector<TokenId> prepare_context(std::span<const TokenId> document,
                                     const std::optional<std::vector<TokenId>>& question,
                                     std::size_t context_length,
                                     const PromptTemplate& tmpl) {
    if (document.empty()) {
        throw PipelineError("prepare_context: empty document");
    }
    if (!question.has_value()) {
        const std::size_t keep = std::min(document.size(), context_length);
        return {document.begin(), document.begin() + keep};
    }
    const std::size_t fixed = tmpl.overhead() + question->size();
    if (fixed > context_length) {
        throw PromptOverflowError("prepare_context: question and template (" +
                                  std::to_string(fixed) +
                                  " tokens) exceed context " +
                                  std::to_string(context_length));
    }
    const std::size_t article_keep =
        std::min(document.size(), context_length - fixed);

    std::vector<TokenId> out;
    out.reserve(fixed + article_keep);
    out.insert(out.end(), tmpl.article_prefix.begin(), tmpl.article_prefix.end());
    out.insert(out.end(), document.begin(), document.begin() + article_keep);
    out.insert(out.end(), tmpl.question_prefix.begin(), tmpl.question_prefix.end());
    out.insert(out.end(), question->begin(), question->end());
    out.insert(out.end(), tmpl.answer_prefix.begin(), tmpl.answer_prefix.end());
    return out;
}

void staleness_update(GenerationState& state,
                      const std::map<std::size_t, std::vector<float>>& last_inputs,
                      std::size_t document_len) {
    for (auto& [layer, idx] : state.indices) {
        const auto it = last_inputs.find(layer);
        if (it == last_inputs.end()) {
            throw ShapeError("staleness_update: no captured input for layer " +
                             std::to_string(layer));
        }
        IndexEntry entry;
        entry.vector = it->second;
        entry.position = document_len + state.step;
        entry.origin = EntryOrigin::Generated;
        idx.append(std::move(entry));
    }
}

namespace {

TokenId argmax_row(std::span<const float> logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

}  // namespace

GenerationResult generate(const Weights& weights, const ModelConfig& config,
                          std::span<const TokenId> document,
                          const GenerationConfig& gen,
                          const std::optional<std::vector<TokenId>>& question) {
    config.validate();
    if (document.empty()) {
        throw PipelineError("generate: empty document");
    }
    if (gen.max_new_tokens == 0) {
        throw ConfigError("generate: max_new_tokens must be >= 1");
    }
    const std::size_t s = config.context_length;
    const bool retrieval = !config.cross_attn_layers.empty();
    if (retrieval) {
        gen.retention.validate(s);
    }

    GenerationResult result;
    GenerationState& state = result.state;

    // Pass one: build per-layer indices over the whole document.
    if (retrieval) {
        const std::size_t chunk_len = (gen.chunk_len == 0) ? s : gen.chunk_len;
        const std::size_t stride =
            (gen.stride == 0) ? std::max<std::size_t>(1, s / 2) : gen.stride;
        const ChunkPlan plan =
            plan_chunks(document.size(), chunk_len, stride, s);
        for (std::size_t l : config.cross_attn_layers) {
            state.indices.emplace(l, LayerIndex(l, config.d_model));
        }
        encode_and_index(document, weights, config, state.indices, plan);
    }

    // Pass two: greedy decoding over the sliding live window.
    state.live_tokens = prepare_context(document, question, s, gen.prompt_template);
    std::map<std::size_t, std::vector<float>> staleness_rows;
    const AttentionOverrideMap overrides =
        retrieval ? make_retrieval_overrides(weights, config, state.indices,
                                             gen.retention, &staleness_rows)
                  : AttentionOverrideMap{};

    while (state.step < gen.max_new_tokens) {
        const ForwardTrace trace =
            forward(weights, config, state.live_tokens, {}, overrides);
        const auto logits = trace.logits.row(trace.logits.rows() - 1);
        const TokenId next = argmax_row(logits);
        if (gen.stop_token.has_value() && next == *gen.stop_token) {
            break;
        }
        if (gen.record_step_logits) {
            result.step_logits.emplace_back(logits.begin(), logits.end());
        }
        result.tokens.push_back(next);
        state.live_tokens.push_back(next);
        if (state.live_tokens.size() > s) {
            state.live_tokens.erase(state.live_tokens.begin());
        }
        if (retrieval && gen.staleness_updates) {
            staleness_update(state, staleness_rows, document.size());
        }
        ++state.step;
    }
    return result;
}

}  // namespace kite
