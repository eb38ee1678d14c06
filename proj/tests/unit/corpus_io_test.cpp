#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "fixtures.hpp"
#include "synthpipe/corpus_io.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"

using namespace synthpipe;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

// Independent count: split on the six ASCII whitespace bytes.
std::int64_t oracle_count(const std::string& s) {
    std::int64_t n = 0;
    bool in = false;
    for (char c : s) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
        if (!ws && !in) ++n;
        in = !ws;
    }
    return n;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const PipelineError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no PipelineError thrown";
    return ErrorCode::InvalidArgument;
}

void write(const fs::path& p, const std::string& s) { write_file_atomic(p, s); }

}  // namespace

TEST(Tokenizer, Examples) {
    EXPECT_EQ(count_tokens(""), 0);
    EXPECT_EQ(count_tokens("Summarize the following text."), 4);
    EXPECT_EQ(count_tokens("a  b\tc"), 3);
    EXPECT_EQ(count_tokens("  \n\t "), 0);
    EXPECT_EQ(reference_tokenizer().name(), "whitespace");
}

TEST(Tokenizer, MatchesOracleOnRandomStrings) {
    std::mt19937_64 rng(11);
    const std::string alphabet = "ab c\t\n\r.,\v\f-";
    for (int t = 0; t < 2000; ++t) {
        std::string s;
        const int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
        EXPECT_EQ(count_tokens(s), oracle_count(s)) << '"' << s << '"';
    }
}

TEST(Tokenizer, AdditiveOverSpaceJoin) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 500; ++t) {
        const std::string a = fixtures::random_text(rng, 1 + static_cast<int>(rng() % 3), 1, 6);
        const std::string b = fixtures::random_text(rng, 1 + static_cast<int>(rng() % 3), 1, 6);
        EXPECT_EQ(count_tokens(a + " " + b), count_tokens(a) + count_tokens(b));
    }
}

TEST(ContentId, StableAndSourceSensitive) {
    EXPECT_EQ(content_id("hello", "rpj"), content_id("hello", "rpj"));
    EXPECT_NE(content_id("hello", "rpj"), content_id("hello", "c4"));
    EXPECT_EQ(content_id("hello", "rpj").size(), 32u);
}

TEST(Ingest, ThreeValidLines) {
    TempDir dir;
    write(dir / "a.jsonl", "{\"text\":\"a b\"}\n{\"text\":\"c\"}\n{\"text\":\"d e f\",\"id\":\"x\"}\n");
    auto c = ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer());
    EXPECT_EQ(c.doc_count, 3);
    EXPECT_EQ(c.total_tokens, 6);
    EXPECT_EQ(c.skipped_lines, 0);
    EXPECT_EQ(c.documents()[2].id, "x");
    EXPECT_EQ(c.documents()[0].id, content_id("a b", "corpus"));
}

TEST(Ingest, TotalTokensFromWhitespaceOracle) {
    TempDir dir;
    write(dir / "a.jsonl", "{\"text\":\"a b\"}\n{\"text\":\"c\"}\n");
    EXPECT_EQ(ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer()).total_tokens, 3);
}

TEST(Ingest, LenientSkipsMalformed) {
    TempDir dir;
    write(dir / "a.jsonl", "{\"text\":\"a b\"}\nnot json\n{\"text\":\"c\"}\n\n");
    auto c = ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer());
    EXPECT_EQ(c.doc_count, 2);
    EXPECT_EQ(c.skipped_lines, 1);
}

TEST(Ingest, SchemaViolationsAreSkippedOrFatal) {
    TempDir dir;
    const std::vector<std::string> bad = {
        "{\"id\":\"n\"}",                               // no text
        "{\"text\":5}",                                 // non-string text
        "{\"text\":\"   \"}",                           // blank text
        "{\"text\":\"a\",\"quality_tier\":\"mid\"}",    // unknown tier
        "{\"text\":\"a\",\"style_labels\":\"FAQ\"}",    // labels not an array
        "{\"text\":\"a\",\"meta\":{\"k\":1}}",          // non-string meta
        "[1,2]",                                        // not an object
    };
    for (const auto& line : bad) {
        write(dir / "b.jsonl", "{\"text\":\"ok\"}\n" + line + "\n");
        auto c = ingest_jsonl({dir / "b.jsonl"}, reference_tokenizer());
        EXPECT_EQ(c.skipped_lines, 1) << line;
        IngestOptions strict;
        strict.strict = true;
        EXPECT_EQ(code_of([&] { ingest_jsonl({dir / "b.jsonl"}, reference_tokenizer(), strict); }),
                  ErrorCode::SchemaViolation)
            << line;
    }
}

TEST(Ingest, DuplicateIdsSkipped) {
    TempDir dir;
    write(dir / "a.jsonl", "{\"text\":\"a\",\"id\":\"1\"}\n{\"text\":\"b\",\"id\":\"1\"}\n");
    auto c = ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer());
    EXPECT_EQ(c.doc_count, 1);
    EXPECT_EQ(c.skipped_lines, 1);
}

TEST(Ingest, Errors) {
    TempDir dir;
    EXPECT_EQ(code_of([&] { ingest_jsonl({dir / "missing.jsonl"}, reference_tokenizer()); }),
              ErrorCode::UnreadableFile);
    write(dir / "empty.jsonl", "\n\nbroken\n");
    EXPECT_EQ(code_of([&] { ingest_jsonl({dir / "empty.jsonl"}, reference_tokenizer()); }), ErrorCode::EmptyCorpus);
    EXPECT_EQ(code_of([&] { ingest_jsonl({}, reference_tokenizer()); }), ErrorCode::EmptyCorpus);
}

TEST(Ingest, TierAndSourceDefaults) {
    TempDir dir;
    write(dir / "a.jsonl",
          "{\"text\":\"a\"}\n{\"text\":\"b\",\"quality_tier\":\"lq\",\"source\":\"c4\",\"style_labels\":[\"FAQ\"],"
          "\"meta\":{\"url\":\"u\"}}\n");
    IngestOptions o;
    o.name = "web";
    o.quality_tier = QualityTier::hq;
    auto c = ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer(), o);
    EXPECT_EQ(c.name, "web");
    EXPECT_EQ(c.documents()[0].quality_tier, QualityTier::hq);
    EXPECT_EQ(c.documents()[0].source, "web");
    EXPECT_EQ(c.documents()[1].quality_tier, QualityTier::lq);
    EXPECT_EQ(c.documents()[1].source, "c4");
    EXPECT_EQ(c.documents()[1].style_labels, std::vector<std::string>{"FAQ"});
    EXPECT_EQ(c.documents()[1].meta.at("url"), "u");
    o.default_source = "rpj";
    EXPECT_EQ(ingest_jsonl({dir / "a.jsonl"}, reference_tokenizer(), o).documents()[0].source, "rpj");
}

TEST(Ingest, MultipleShardsKeepOrderAndAreDeterministic) {
    TempDir dir;
    auto docs = fixtures::toy_documents(3, {.docs = 60, .min_sentences = 1, .max_sentences = 3});
    std::vector<fs::path> paths;
    for (int s = 0; s < 6; ++s) {
        std::vector<Document> part(docs.begin() + s * 10, docs.begin() + (s + 1) * 10);
        paths.push_back(dir / ("s" + std::to_string(s) + ".jsonl"));
        write(paths.back(), fixtures::to_jsonl(part) + (s == 2 ? "garbage\n" : ""));
    }
    IngestOptions o;
    o.jobs = 4;
    auto a = ingest_jsonl(paths, reference_tokenizer(), o);
    o.jobs = 1;
    auto b = ingest_jsonl(paths, reference_tokenizer(), o);
    ASSERT_EQ(a.doc_count, 60);
    EXPECT_EQ(a.skipped_lines, 1);
    EXPECT_EQ(a.documents(), b.documents());
    EXPECT_EQ(a.skipped_lines, b.skipped_lines);
    for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_EQ(a.documents()[i].id, docs[i].id);
}

TEST(Ingest, GzipInput) {
    TempDir dir;
    write(dir / "a.jsonl.gz", "{\"text\":\"one two\"}\n{\"text\":\"three\"}\n");
    EXPECT_NE(fixtures::slurp(dir / "a.jsonl.gz").substr(0, 2), "{\"");
    auto c = ingest_jsonl({dir / "a.jsonl.gz"}, reference_tokenizer());
    EXPECT_EQ(c.doc_count, 2);
    EXPECT_EQ(c.total_tokens, 3);
}

TEST(WriteShards, GreedyExamples) {
    TempDir dir;
    auto docs = fixtures::sized_documents({10, 10, 10}, "d");
    auto m = write_shards(docs, dir / "out", 20);
    ASSERT_EQ(m.shards.size(), 2u);
    EXPECT_EQ(m.shards[0].docs, 2);
    EXPECT_EQ(m.shards[1].docs, 1);
    EXPECT_EQ(m.total_tokens, 30);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / m.shards[1].path));

    auto one = write_shards(fixtures::sized_documents({7}, "e"), dir / "one", 1000);
    EXPECT_EQ(one.shards.size(), 1u);

    auto exact = write_shards(fixtures::sized_documents({20, 20}, "f"), dir / "exact", 20);
    EXPECT_EQ(exact.shards.size(), 2u);

    EXPECT_EQ(code_of([&] { write_shards(fixtures::sized_documents({30}, "g"), dir / "big", 20); }),
              ErrorCode::OversizedDocument);
}

TEST(WriteShards, MatchesGreedyOracle) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 40; ++t) {
        TempDir dir;
        std::vector<std::int64_t> sizes(1 + rng() % 30);
        for (auto& s : sizes) s = 1 + static_cast<std::int64_t>(rng() % 25);
        const std::int64_t max = 25 + static_cast<std::int64_t>(rng() % 40);
        // Oracle: fill each shard until the next document would overflow it.
        std::vector<std::pair<std::int64_t, std::int64_t>> expect;
        for (auto s : sizes) {
            if (expect.empty() || expect.back().second + s > max) expect.push_back({0, 0});
            expect.back().first += 1;
            expect.back().second += s;
        }
        auto m = write_shards(fixtures::sized_documents(sizes, "d"), dir.path(), max);
        ASSERT_EQ(m.shards.size(), expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            EXPECT_EQ(m.shards[i].docs, expect[i].first);
            EXPECT_EQ(m.shards[i].tokens, expect[i].second);
            EXPECT_LE(m.shards[i].tokens, max);
        }
    }
}

TEST(WriteShards, RoundTripThroughIngest) {
    for (bool gz : {false, true}) {
        TempDir dir;
        auto docs = fixtures::toy_documents(8, {.docs = 80, .min_sentences = 1, .max_sentences = 4});
        docs[3].style_labels = {"FAQ", "Q&A Forum"};
        docs[4].meta = {{"k", "v"}};
        docs[5].quality_tier = QualityTier::lq;
        ShardWriteOptions o;
        o.name = "toy";
        o.gzip = gz;
        auto m = write_shards(docs, dir.path(), 200, o);
        EXPECT_GT(m.shards.size(), 1u);
        auto c = open_corpus(dir.path(), reference_tokenizer());
        EXPECT_EQ(c.name, "toy");
        EXPECT_EQ(c.documents(), docs);
        EXPECT_EQ(c.total_tokens, m.total_tokens);
        auto via_file = open_corpus(dir / "manifest.json", reference_tokenizer());
        EXPECT_EQ(via_file.documents(), docs);
    }
}

TEST(ShardManifest, JsonRoundTrip) {
    ShardManifest m{"x", {{"shard-00000.jsonl", 2, 10}, {"shard-00001.jsonl", 1, 3}}, 13};
    EXPECT_EQ(shard_manifest_from_json(to_json(m)), m);
    EXPECT_EQ(code_of([] { shard_manifest_from_json(nlohmann::json::object()); }), ErrorCode::SchemaViolation);
}

TEST(FsUtil, AtomicWriteLeavesNoTemp) {
    TempDir dir;
    write_file_atomic(dir / "sub" / "f.txt", "hello");
    EXPECT_EQ(read_file(dir / "sub" / "f.txt"), "hello");
    EXPECT_FALSE(fs::exists(dir / "sub" / "f.txt.tmp"));
    EXPECT_EQ(split_lines("a\r\nb\n").size(), 2u);
    EXPECT_EQ(split_lines("a\nb").size(), 2u);
}

TEST(FsUtil, GzipIsReproducible) {
    TempDir dir;
    write_file_atomic(dir / "a.gz", "same content");
    write_file_atomic(dir / "b.gz", "same content");
    EXPECT_EQ(fixtures::slurp(dir / "a.gz"), fixtures::slurp(dir / "b.gz"));
}
