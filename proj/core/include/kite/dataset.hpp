#pragma once

#include <optional>
#include <string>
#include <vector>

namespace kite {

// One JSONL evaluation record. evidence_positions are token offsets of the
// answer's supporting evidence within the document, when the dataset
// provides them.
struct Sample {
    std::string id;
    std::string document;
    std::optional<std::string> question;
    std::vector<std::string> references;
    std::optional<std::vector<std::size_t>> evidence_positions;
};

// One JSON object per line with fields id, document, references, optional
// question and evidence_positions. Malformed lines raise SchemaError naming
// the line number.
std::vector<Sample> load_jsonl(const std::string& path);

void write_jsonl(const std::vector<Sample>& samples, const std::string& path);

}  // namespace kite
