#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kite {

// Shared normalization for token F1 and ROUGE: lowercase, strip punctuation,
// collapse whitespace; tokens are the remaining whitespace-separated words.
// No stemming, no stopword or article removal.
std::vector<std::string> normalize_tokens(std::string_view text);

// Bag-of-tokens F1 against each reference, max over references. Both sides
// empty (after normalization) scores 1.0; exactly one empty scores 0.0.
double token_f1(std::string_view prediction,
                const std::vector<std::string>& references);

// Clipped n-gram overlap F1, n in {1, 2}.
double rouge_n(std::string_view prediction, std::string_view reference,
               std::size_t n);

// Longest-common-subsequence F1 over tokens.
double rouge_l(std::string_view prediction, std::string_view reference);

// Max over references.
double rouge_n_multi(std::string_view prediction,
                     const std::vector<std::string>& references, std::size_t n);
double rouge_l_multi(std::string_view prediction,
                     const std::vector<std::string>& references);

}  // namespace kite
