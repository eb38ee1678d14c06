#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace synthpipe {

enum class QualityTier { hq, lq, unknown };

std::string_view to_string(QualityTier tier);
/// Accepts "hq", "lq", "unknown"; anything else is nullopt.
std::optional<QualityTier> parse_quality_tier(std::string_view s);

struct Document {
    std::string id;
    std::string text;
    std::string source;
    QualityTier quality_tier = QualityTier::unknown;
    std::vector<std::string> style_labels;
    std::int64_t token_count = 0;
    std::map<std::string, std::string> meta;

    bool operator==(const Document&) const = default;
};

/// One JSONL line (no trailing newline). Keys are emitted in sorted order.
std::string to_jsonl_line(const Document& doc);
nlohmann::json to_json(const Document& doc);

/// Content-derived id used when an input line carries none.
std::string content_id(std::string_view text, std::string_view source);

// ---- tokenization ----------------------------------------------------------

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string_view name() const = 0;
    virtual std::int64_t count(std::string_view text) const = 0;
};

/// Counts maximal runs of non-whitespace bytes.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::string_view name() const override { return "whitespace"; }
    std::int64_t count(std::string_view text) const override;
};

const Tokenizer& reference_tokenizer();

inline std::int64_t count_tokens(std::string_view text,
                                 const Tokenizer& tokenizer = reference_tokenizer()) {
    return tokenizer.count(text);
}

bool is_space(char c);
std::string_view trim(std::string_view s);

// ---- corpora ---------------------------------------------------------------

/// Immutable after construction; copies share the document store.
struct CorpusHandle {
    std::string name;
    std::vector<std::filesystem::path> shard_paths;
    std::int64_t total_tokens = 0;
    std::int64_t doc_count = 0;
    std::int64_t skipped_lines = 0;
    std::shared_ptr<const std::vector<Document>> docs;

    const std::vector<Document>& documents() const;
    std::int64_t max_doc_tokens() const;
};

/// Builds a handle over in-memory documents, recomputing the totals.
CorpusHandle make_corpus(std::string name, std::vector<Document> docs,
                         std::vector<std::filesystem::path> shard_paths = {});

struct IngestOptions {
    std::string name = "corpus";
    /// Applied to lines that do not declare their own tier.
    std::optional<QualityTier> quality_tier;
    /// Applied to lines without a "source" field; defaults to `name`.
    std::optional<std::string> default_source;
    /// Fail with SchemaViolation on the first bad line instead of skipping it.
    bool strict = false;
    /// Upper bound on shard-parallel readers; 0 means hardware concurrency.
    unsigned jobs = 0;
};

/// Reads JSONL shards (".gz" is gunzipped). Malformed lines are skipped and
/// counted unless options.strict. Throws UnreadableFile, SchemaViolation, EmptyCorpus.
CorpusHandle ingest_jsonl(const std::vector<std::filesystem::path>& paths,
                          const Tokenizer& tokenizer, const IngestOptions& options = {});

struct ShardInfo {
    std::string path;  // relative to the manifest's directory
    std::int64_t docs = 0;
    std::int64_t tokens = 0;
    bool operator==(const ShardInfo&) const = default;
};

struct ShardManifest {
    std::string name;
    std::vector<ShardInfo> shards;
    std::int64_t total_tokens = 0;
    bool operator==(const ShardManifest&) const = default;
};

nlohmann::json to_json(const ShardManifest& manifest);
ShardManifest shard_manifest_from_json(const nlohmann::json& j);

struct ShardWriteOptions {
    std::string name = "corpus";
    bool gzip = false;
    std::string prefix = "shard";
};

/// Greedy packing in document order; a shard closes when the next document
/// would push it past max_tokens_per_shard. Writes <out_dir>/manifest.json.
/// Throws OversizedDocument, IoFailure.
ShardManifest write_shards(const std::vector<Document>& documents,
                           const std::filesystem::path& out_dir,
                           std::int64_t max_tokens_per_shard,
                           const ShardWriteOptions& options = {});

/// Opens a corpus from a manifest file, a directory holding manifest.json, or
/// a single JSONL file.
CorpusHandle open_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer,
                         IngestOptions options = {});

}  // namespace synthpipe
