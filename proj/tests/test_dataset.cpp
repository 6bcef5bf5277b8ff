#include <doctest.h>

#include <fstream>

#include "kite/dataset.hpp"
#include "kite/errors.hpp"
#include "support.hpp"

using namespace kite;

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream f(path, std::ios::trunc);
    for (const auto& l : lines) f << l << '\n';
}

}  // namespace

TEST_CASE("three well-formed lines load as three samples") {
    test::ScratchDir dir;
    const std::string path = dir.file("data.jsonl");
    write_lines(path, {
        R"({"id":"a","document":"doc one","references":["r1"]})",
        R"({"id":"b","document":"doc two","references":["r2","r3"],"question":"why?"})",
        R"({"id":"c","document":"doc three","references":["r4"],"evidence_positions":[5,9]})",
    });
    const auto samples = load_jsonl(path);
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].id == "a");
    CHECK_FALSE(samples[0].question.has_value());
    CHECK(samples[1].references.size() == 2);
    CHECK(samples[1].question == "why?");
    REQUIRE(samples[2].evidence_positions.has_value());
    CHECK(samples[2].evidence_positions->size() == 2);
}

TEST_CASE("a line missing references is a schema error naming the line") {
    test::ScratchDir dir;
    const std::string path = dir.file("data.jsonl");
    write_lines(path, {
        R"({"id":"a","document":"doc","references":["r"]})",
        R"({"id":"b","document":"doc"})",
    });
    try {
        load_jsonl(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("invalid JSON is a schema error naming the line") {
    test::ScratchDir dir;
    const std::string path = dir.file("data.jsonl");
    write_lines(path, {
        R"({"id":"a","document":"doc","references":["r"]})",
        R"({"id":"b", not json)",
    });
    try {
        load_jsonl(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("write-then-load is the identity") {
    std::vector<Sample> samples(2);
    samples[0].id = "s0";
    samples[0].document = "first document";
    samples[0].references = {"one", "two"};
    samples[1].id = "s1";
    samples[1].document = "second document";
    samples[1].question = "what?";
    samples[1].references = {"three"};
    samples[1].evidence_positions = std::vector<std::size_t>{1, 2, 3};

    test::ScratchDir dir;
    const std::string path = dir.file("roundtrip.jsonl");
    write_jsonl(samples, path);
    const auto loaded = load_jsonl(path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].id == samples[i].id);
        CHECK(loaded[i].document == samples[i].document);
        CHECK(loaded[i].question == samples[i].question);
        CHECK(loaded[i].references == samples[i].references);
        CHECK(loaded[i].evidence_positions == samples[i].evidence_positions);
    }
}

TEST_CASE("missing file is an error") {
    CHECK_THROWS_AS(load_jsonl("/nonexistent/data.jsonl"), Error);
}
