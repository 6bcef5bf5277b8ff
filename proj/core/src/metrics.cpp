#include "kite/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace kite {

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && cleaned[i] == ' ') ++i;
        std::size_t j = i;
        while (j < cleaned.size() && cleaned[j] != ' ') ++j;
        if (j > i) tokens.emplace_back(cleaned.substr(i, j - i));
        i = j;
    }
    return tokens;
}

namespace {

double f1(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::map<std::string, std::size_t> bag(const std::vector<std::string>& tokens) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : tokens) ++counts[t];
    return counts;
}

double bag_overlap_f1(const std::vector<std::string>& pred,
                      const std::vector<std::string>& ref) {
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    const auto pred_bag = bag(pred);
    const auto ref_bag = bag(ref);
    std::size_t common = 0;
    for (const auto& [token, count] : pred_bag) {
        const auto it = ref_bag.find(token);
        if (it != ref_bag.end()) common += std::min(count, it->second);
    }
    return f1(static_cast<double>(common) / static_cast<double>(pred.size()),
              static_cast<double>(common) / static_cast<double>(ref.size()));
}

std::vector<std::string> ngrams(const std::vector<std::string>& tokens,
                                std::size_t n) {
    std::vector<std::string> grams;
    if (tokens.size() < n) return grams;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string g = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            g.push_back(' ');
            g.append(tokens[i + j]);
        }
        grams.push_back(std::move(g));
    }
    return grams;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double token_f1(std::string_view prediction,
                const std::vector<std::string>& references) {
    const auto pred = normalize_tokens(prediction);
    double best = 0.0;
    bool first = true;
    for (const auto& r : references) {
        const double score = bag_overlap_f1(pred, normalize_tokens(r));
        if (first || score > best) {
            best = score;
            first = false;
        }
    }
    return best;
}

double rouge_n(std::string_view prediction, std::string_view reference,
               std::size_t n) {
    const auto pred = ngrams(normalize_tokens(prediction), n);
    const auto ref = ngrams(normalize_tokens(reference), n);
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    const auto pred_bag = bag(pred);
    const auto ref_bag = bag(ref);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : pred_bag) {
        const auto it = ref_bag.find(gram);
        if (it != ref_bag.end()) clipped += std::min(count, it->second);
    }
    return f1(static_cast<double>(clipped) / static_cast<double>(pred.size()),
              static_cast<double>(clipped) / static_cast<double>(ref.size()));
}

double rouge_l(std::string_view prediction, std::string_view reference) {
    const auto pred = normalize_tokens(prediction);
    const auto ref = normalize_tokens(reference);
    if (pred.empty() && ref.empty()) return 1.0;
    if (pred.empty() || ref.empty()) return 0.0;
    const std::size_t lcs = lcs_length(pred, ref);
    return f1(static_cast<double>(lcs) / static_cast<double>(pred.size()),
              static_cast<double>(lcs) / static_cast<double>(ref.size()));
}

double rouge_n_multi(std::string_view prediction,
                     const std::vector<std::string>& references, std::size_t n) {
    double best = 0.0;
    bool first = true;
    for (const auto& r : references) {
        const double score = rouge_n(prediction, r, n);
        if (first || score > best) {
            best = score;
            first = false;
        }
    }
    return best;
}

double rouge_l_multi(std::string_view prediction,
                     const std::vector<std::string>& references) {
    double best = 0.0;
    bool first = true;
    for (const auto& r : references) {
        const double score = rouge_l(prediction, r);
        if (first || score > best) {
            best = score;
            first = false;
        }
    }
    return best;
}

}  // namespace kite
