#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "kite/model.hpp"

namespace kite {

// Toy byte-level tokenizer: token id = byte value, vocabulary 256. Lossless
// round-trip for any text; ids >= 256 decode to '?'.
class ByteTokenizer {
public:
    static constexpr std::size_t kVocabSize = 256;

    std::vector<TokenId> encode(std::string_view text) const {
        std::vector<TokenId> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) {
            ids.push_back(static_cast<TokenId>(c));
        }
        return ids;
    }

    std::string decode(std::span<const TokenId> ids) const {
        std::string text;
        text.reserve(ids.size());
        for (TokenId id : ids) {
            text.push_back(id < kVocabSize ? static_cast<char>(id) : '?');
        }
        return text;
    }
};

}  // namespace kite
