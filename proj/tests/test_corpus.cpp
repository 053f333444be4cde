// Corpus ingest, token estimation, budgeted prefix packing, and the dataset
// manifest loader.

#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "templar/corpus.hpp"

using namespace templar;
using testutil::TempDir;

namespace {

Document doc(const std::string& id, const std::string& title, const std::string& body) {
    Document d;
    d.doc_id = id;
    d.title = title;
    d.body = body;
    return d;
}

}  // namespace

TEST_CASE("estimate_tokens is ceil of bytes over four") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("a") == 1);
    CHECK(estimate_tokens("abcd") == 1);
    CHECK(estimate_tokens("abcde") == 2);
    CHECK(estimate_tokens(std::string(4095, 'x')) == 1024);
    CHECK(estimate_tokens(std::string(4096, 'x')) == 1024);
    CHECK(estimate_tokens(std::string(4097, 'x')) == 1025);
}

TEST_CASE("document layout round trips through the header parser") {
    const Document d = doc("359", "Crucifixion (Titian)", "The painting is in Ancona.");
    const std::string formatted = format_document(d);
    CHECK(formatted == "TITLE: Crucifixion (Titian) | ID: 359\nThe painting is in Ancona.");

    const auto header = parse_document_header(formatted);
    REQUIRE(header.has_value());
    CHECK(header->first == "Crucifixion (Titian)");
    CHECK(header->second == "359");

    CHECK_FALSE(parse_document_header("no header here").has_value());
}

TEST_CASE("ingest reads JSONL and enforces the layout invariants") {
    TempDir dir;
    const std::string path = dir.file("corpus.jsonl");

    SUBCASE("well-formed corpus") {
        testutil::write_file(path,
                             R"({"doc_id": "1", "title": "Alpha", "body": "alpha text"})"
                             "\n\n"
                             R"({"doc_id": "2", "title": "Beta", "body": "beta text", "source": "wiki"})"
                             "\n");
        const std::vector<Document> docs = ingest(path);
        REQUIRE(docs.size() == 2);  // blank lines skipped
        CHECK(docs[0].doc_id == "1");
        CHECK_FALSE(docs[0].source.has_value());
        CHECK(docs[1].source == "wiki");
    }

    SUBCASE("duplicate ids rejected") {
        testutil::write_file(path,
                             R"({"doc_id": "1", "title": "A", "body": "x"})"
                             "\n"
                             R"({"doc_id": "1", "title": "B", "body": "y"})"
                             "\n");
        CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("duplicate"), ParseError);
    }

    SUBCASE("pipe in a title breaks the header format and is rejected") {
        testutil::write_file(path, R"({"doc_id": "1", "title": "A | B", "body": "x"})" "\n");
        CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("|"), ParseError);
    }

    SUBCASE("missing field is named") {
        testutil::write_file(path, R"({"doc_id": "1", "title": "A"})" "\n");
        CHECK_THROWS_WITH_AS(ingest(path), doctest::Contains("body"), ParseError);
    }
}

TEST_CASE("pack keeps the longest prefix that fits the budget") {
    const std::vector<Document> docs = {doc("a", "T", "0123456789"), doc("b", "T", "0123456789"),
                                        doc("c", "T", "0123456789")};
    const long per_doc = estimate_tokens(format_document(docs[0]));

    SUBCASE("everything fits") {
        const PackedContext ctx = pack(docs, per_doc * 3);
        CHECK(ctx.documents.size() == 3);
        CHECK(ctx.estimated_tokens == per_doc * 3);
    }

    SUBCASE("overflow cuts at the first document that does not fit") {
        const PackedContext ctx = pack(docs, per_doc * 2 + 1);
        CHECK(ctx.documents.size() == 2);
        CHECK(ctx.documents[0].doc_id == "a");
        CHECK(ctx.documents[1].doc_id == "b");
    }

    SUBCASE("first document over budget is a hard error") {
        CHECK_THROWS_AS(pack(docs, per_doc - 1), std::runtime_error);
        CHECK_THROWS_AS(pack(docs, 0), std::invalid_argument);
    }

    SUBCASE("empty corpus packs to nothing") {
        const PackedContext ctx = pack({}, 100);
        CHECK(ctx.documents.empty());
        CHECK(ctx.estimated_tokens == 0);
    }
}

// Property: over random document lists, packing never exceeds the budget and
// the packed prefix is maximal (the next document would overflow).
TEST_CASE("pack is budget-safe and prefix-maximal on random inputs") {
    std::mt19937 rng(20240817);
    std::uniform_int_distribution<int> doc_count(0, 30);
    std::uniform_int_distribution<int> body_len(1, 400);
    std::uniform_int_distribution<long> budget_dist(40, 2000);

    for (int round = 0; round < 300; ++round) {
        std::vector<Document> docs;
        const int n = doc_count(rng);
        for (int i = 0; i < n; ++i) {
            docs.push_back(doc("d" + std::to_string(i), "T",
                               std::string(static_cast<size_t>(body_len(rng)), 'x')));
        }
        const long budget = budget_dist(rng);
        if (!docs.empty() && estimate_tokens(format_document(docs[0])) > budget) continue;

        const PackedContext ctx = pack(docs, budget);
        REQUIRE(ctx.estimated_tokens <= budget);
        // In-order prefix.
        for (size_t i = 0; i < ctx.documents.size(); ++i) {
            CHECK(ctx.documents[i].doc_id == docs[i].doc_id);
        }
        // Maximality: the first excluded document would not have fit.
        if (ctx.documents.size() < docs.size()) {
            const long next = estimate_tokens(format_document(docs[ctx.documents.size()]));
            CHECK(ctx.estimated_tokens + next > budget);
        }
    }
}

TEST_CASE("manifest loader validates queries and metric names") {
    TempDir dir;
    const std::string path = dir.file("manifest.json");

    SUBCASE("well-formed manifest") {
        testutil::write_file(path, R"({
            "corpus_path": "corpus.jsonl",
            "metric": "f1",
            "queries": [
                {"query_id": "q1", "question": "Who?", "gold_answers": ["x"],
                 "doc_allowlist": ["1", "2"]},
                {"query_id": "q2", "question": "What?", "gold_answers": ["y", "z"]}
            ]})");
        const DatasetManifest m = load_manifest(path);
        CHECK(m.metric == Metric::F1);
        REQUIRE(m.queries.size() == 2);
        CHECK(m.queries[0].doc_allowlist == std::vector<std::string>{"1", "2"});
        CHECK_FALSE(m.queries[1].doc_allowlist.has_value());
    }

    SUBCASE("unknown metric") {
        testutil::write_file(path,
                             R"({"corpus_path": "c", "metric": "bleu", "queries": []})");
        CHECK_THROWS_AS(load_manifest(path), std::invalid_argument);
    }

    SUBCASE("duplicate query ids") {
        testutil::write_file(path, R"({"corpus_path": "c", "metric": "em", "queries": [
            {"query_id": "q", "question": "a", "gold_answers": ["x"]},
            {"query_id": "q", "question": "b", "gold_answers": ["y"]}]})");
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("duplicate"), ParseError);
    }

    SUBCASE("empty gold answers rejected") {
        testutil::write_file(path, R"({"corpus_path": "c", "metric": "em", "queries": [
            {"query_id": "q", "question": "a", "gold_answers": []}]})");
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("gold_answers"), ParseError);
    }
}

TEST_CASE("metric names round trip") {
    for (const Metric m : {Metric::F1, Metric::ExactMatch, Metric::Accuracy}) {
        CHECK(metric_from_name(metric_name(m)) == m);
    }
}
