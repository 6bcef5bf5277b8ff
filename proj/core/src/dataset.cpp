#include "kite/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "kite/errors.hpp"

namespace kite {

namespace {

using nlohmann::json;

Sample parse_sample(const json& obj, std::size_t line_no) {
    const auto fail = [line_no](const std::string& what) -> SchemaError {
        return SchemaError("line " + std::to_string(line_no) + ": " + what);
    };
    if (!obj.is_object()) throw fail("record is not a JSON object");
    Sample s;
    if (!obj.contains("id") || !obj["id"].is_string()) {
        throw fail("missing string field 'id'");
    }
    s.id = obj["id"].get<std::string>();
    if (!obj.contains("document") || !obj["document"].is_string()) {
        throw fail("missing string field 'document'");
    }
    s.document = obj["document"].get<std::string>();
    if (!obj.contains("references") || !obj["references"].is_array() ||
        obj["references"].empty()) {
        throw fail("missing non-empty array field 'references'");
    }
    for (const auto& r : obj["references"]) {
        if (!r.is_string()) throw fail("'references' entries must be strings");
        s.references.push_back(r.get<std::string>());
    }
    if (obj.contains("question")) {
        if (!obj["question"].is_string()) throw fail("'question' must be a string");
        s.question = obj["question"].get<std::string>();
    }
    if (obj.contains("evidence_positions")) {
        if (!obj["evidence_positions"].is_array()) {
            throw fail("'evidence_positions' must be an array");
        }
        std::vector<std::size_t> positions;
        for (const auto& p : obj["evidence_positions"]) {
            if (!p.is_number_unsigned()) {
                throw fail("'evidence_positions' entries must be non-negative");
            }
            positions.push_back(p.get<std::size_t>());
        }
        s.evidence_positions = std::move(positions);
    }
    return s;
}

}  // namespace

std::vector<Sample> load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError("line " + std::to_string(line_no) +
                              ": invalid JSON (" + e.what() + ")");
        }
        samples.push_back(parse_sample(obj, line_no));
    }
    return samples;
}

void write_jsonl(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    for (const auto& s : samples) {
        json obj;
        obj["id"] = s.id;
        obj["document"] = s.document;
        obj["references"] = s.references;
        if (s.question) obj["question"] = *s.question;
        if (s.evidence_positions) obj["evidence_positions"] = *s.evidence_positions;
        f << obj.dump() << '\n';
    }
}

}  // namespace kite
