#include "synthpipe/corpus_io.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <thread>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/hashing.hpp"

namespace synthpipe {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(QualityTier tier) {
    switch (tier) {
        case QualityTier::hq: return "hq";
        case QualityTier::lq: return "lq";
        case QualityTier::unknown: return "unknown";
    }
    return "unknown";
}

std::optional<QualityTier> parse_quality_tier(std::string_view s) {
    if (s == "hq") return QualityTier::hq;
    if (s == "lq") return QualityTier::lq;
    if (s == "unknown") return QualityTier::unknown;
    return std::nullopt;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::int64_t WhitespaceTokenizer::count(std::string_view text) const {
    std::int64_t n = 0;
    bool in_token = false;
    for (char c : text) {
        const bool space = is_space(c);
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

const Tokenizer& reference_tokenizer() {
    static const WhitespaceTokenizer tok;
    return tok;
}

std::string content_id(std::string_view text, std::string_view source) {
    std::string key;
    key.reserve(text.size() + source.size() + 1);
    key.append(text);
    key.push_back('\x1f');
    key.append(source);
    return digest128_hex(key);
}

json to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    j["source"] = doc.source;
    j["quality_tier"] = std::string(to_string(doc.quality_tier));
    j["style_labels"] = doc.style_labels;
    j["token_count"] = doc.token_count;
    j["meta"] = doc.meta;
    return j;
}

std::string to_jsonl_line(const Document& doc) {
    return to_json(doc).dump(-1, ' ', false, json::error_handler_t::replace);
}

const std::vector<Document>& CorpusHandle::documents() const {
    static const std::vector<Document> empty;
    return docs ? *docs : empty;
}

std::int64_t CorpusHandle::max_doc_tokens() const {
    std::int64_t m = 0;
    for (const auto& d : documents()) m = std::max(m, d.token_count);
    return m;
}

CorpusHandle make_corpus(std::string name, std::vector<Document> docs,
                         std::vector<fs::path> shard_paths) {
    CorpusHandle h;
    h.name = std::move(name);
    h.shard_paths = std::move(shard_paths);
    h.doc_count = static_cast<std::int64_t>(docs.size());
    for (const auto& d : docs) h.total_tokens += d.token_count;
    h.docs = std::make_shared<const std::vector<Document>>(std::move(docs));
    return h;
}

namespace {

struct ShardParse {
    std::vector<Document> docs;
    std::int64_t skipped = 0;
};

// Returns nullopt with `why` set when the line violates the schema.
std::optional<Document> parse_line(std::string_view line, const Tokenizer& tokenizer,
                                   const IngestOptions& options, std::string& why) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        why = "not a JSON object";
        return std::nullopt;
    }
    auto text_it = j.find("text");
    if (text_it == j.end() || !text_it->is_string()) {
        why = "missing string field \"text\"";
        return std::nullopt;
    }
    Document doc;
    doc.text = text_it->get<std::string>();
    if (trim(doc.text).empty()) {
        why = "empty text";
        return std::nullopt;
    }
    if (auto it = j.find("source"); it != j.end()) {
        if (!it->is_string()) {
            why = "\"source\" is not a string";
            return std::nullopt;
        }
        doc.source = it->get<std::string>();
    } else {
        doc.source = options.default_source.value_or(options.name);
    }
    doc.quality_tier = options.quality_tier.value_or(QualityTier::unknown);
    if (auto it = j.find("quality_tier"); it != j.end()) {
        auto tier = it->is_string() ? parse_quality_tier(it->get<std::string>()) : std::nullopt;
        if (!tier) {
            why = "bad \"quality_tier\"";
            return std::nullopt;
        }
        doc.quality_tier = *tier;
    }
    if (auto it = j.find("style_labels"); it != j.end()) {
        if (!it->is_array()) {
            why = "\"style_labels\" is not an array";
            return std::nullopt;
        }
        for (const auto& label : *it) {
            if (!label.is_string()) {
                why = "non-string style label";
                return std::nullopt;
            }
            doc.style_labels.push_back(label.get<std::string>());
        }
    }
    if (auto it = j.find("meta"); it != j.end()) {
        if (!it->is_object()) {
            why = "\"meta\" is not an object";
            return std::nullopt;
        }
        for (const auto& [k, v] : it->items()) {
            if (!v.is_string()) {
                why = "non-string meta value for \"" + k + "\"";
                return std::nullopt;
            }
            doc.meta[k] = v.get<std::string>();
        }
    }
    if (auto it = j.find("id"); it != j.end() && !it->is_null()) {
        if (!it->is_string() || it->get<std::string>().empty()) {
            why = "\"id\" is not a non-empty string";
            return std::nullopt;
        }
        doc.id = it->get<std::string>();
    } else {
        doc.id = content_id(doc.text, doc.source);
    }
    doc.token_count = tokenizer.count(doc.text);
    return doc;
}

ShardParse parse_shard(const fs::path& path, const Tokenizer& tokenizer,
                       const IngestOptions& options) {
    const std::string content = read_file(path);
    ShardParse out;
    std::size_t line_no = 0;
    for (std::string_view line : split_lines(content)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string why;
        auto doc = parse_line(line, tokenizer, options, why);
        if (!doc) {
            if (options.strict) {
                fail(ErrorCode::SchemaViolation,
                     path.string() + ":" + std::to_string(line_no) + ": " + why);
            }
            ++out.skipped;
            continue;
        }
        out.docs.push_back(std::move(*doc));
    }
    return out;
}

}  // namespace

CorpusHandle ingest_jsonl(const std::vector<fs::path>& paths, const Tokenizer& tokenizer,
                          const IngestOptions& options) {
    if (paths.empty()) fail(ErrorCode::EmptyCorpus, "no input shards for " + options.name);

    // Shards are parsed concurrently and merged in the given order.
    std::vector<ShardParse> parsed(paths.size());
    unsigned jobs = options.jobs != 0 ? options.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(paths.size()));
    for (std::size_t base = 0; base < paths.size(); base += jobs) {
        std::vector<std::future<ShardParse>> batch;
        const std::size_t end = std::min(paths.size(), base + jobs);
        for (std::size_t i = base; i < end; ++i) {
            batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                       [&, i] { return parse_shard(paths[i], tokenizer, options); }));
        }
        for (std::size_t i = base; i < end; ++i) parsed[i] = batch[i - base].get();
    }

    std::vector<Document> docs;
    std::int64_t skipped = 0;
    std::set<std::string> seen;
    for (auto& shard : parsed) {
        skipped += shard.skipped;
        for (auto& doc : shard.docs) {
            if (!seen.insert(doc.id).second) {
                if (options.strict) fail(ErrorCode::SchemaViolation, "duplicate id " + doc.id);
                ++skipped;
                continue;
            }
            docs.push_back(std::move(doc));
        }
    }
    if (docs.empty()) fail(ErrorCode::EmptyCorpus, "corpus " + options.name + " has no valid documents");

    CorpusHandle h = make_corpus(options.name, std::move(docs), paths);
    h.skipped_lines = skipped;
    return h;
}

json to_json(const ShardManifest& m) {
    json shards = json::array();
    for (const auto& s : m.shards) shards.push_back({{"path", s.path}, {"docs", s.docs}, {"tokens", s.tokens}});
    return {{"name", m.name}, {"shards", shards}, {"total_tokens", m.total_tokens}};
}

ShardManifest shard_manifest_from_json(const json& j) {
    try {
        ShardManifest m;
        m.name = j.at("name").get<std::string>();
        for (const auto& s : j.at("shards")) {
            m.shards.push_back({s.at("path").get<std::string>(), s.at("docs").get<std::int64_t>(),
                                s.at("tokens").get<std::int64_t>()});
        }
        m.total_tokens = j.at("total_tokens").get<std::int64_t>();
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("bad shard manifest: ") + e.what());
    }
}

ShardManifest write_shards(const std::vector<Document>& documents, const fs::path& out_dir,
                           std::int64_t max_tokens_per_shard, const ShardWriteOptions& options) {
    if (max_tokens_per_shard <= 0) fail(ErrorCode::InvalidArgument, "max_tokens_per_shard must be > 0");
    for (const auto& d : documents) {
        if (d.token_count > max_tokens_per_shard) {
            fail(ErrorCode::OversizedDocument,
                 "document " + d.id + " has " + std::to_string(d.token_count) +
                     " tokens, shard limit is " + std::to_string(max_tokens_per_shard));
        }
    }

    ShardManifest manifest;
    manifest.name = options.name;
    std::string body;
    ShardInfo current;
    auto flush = [&] {
        if (current.docs == 0) return;
        char file[64];
        std::snprintf(file, sizeof(file), "%s-%05zu.jsonl%s", options.prefix.c_str(),
                      manifest.shards.size(), options.gzip ? ".gz" : "");
        current.path = file;
        write_file_atomic(out_dir / file, body);
        manifest.total_tokens += current.tokens;
        manifest.shards.push_back(current);
        current = {};
        body.clear();
    };
    for (const auto& d : documents) {
        if (current.docs > 0 && current.tokens + d.token_count > max_tokens_per_shard) flush();
        body += to_jsonl_line(d);
        body += '\n';
        ++current.docs;
        current.tokens += d.token_count;
    }
    flush();
    write_file_atomic(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
    return manifest;
}

CorpusHandle open_corpus(const fs::path& path, const Tokenizer& tokenizer, IngestOptions options) {
    fs::path manifest_path;
    if (fs::is_directory(path)) {
        manifest_path = path / "manifest.json";
    } else if (path.filename() == "manifest.json" ||
               (path.extension() == ".json" && !has_gz_suffix(path))) {
        manifest_path = path;
    }
    if (manifest_path.empty()) {
        if (options.name == "corpus") options.name = path.stem().string();
        return ingest_jsonl({path}, tokenizer, options);
    }
    json j = json::parse(read_file(manifest_path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaViolation, "manifest is not JSON: " + manifest_path.string());
    const ShardManifest m = shard_manifest_from_json(j);
    std::vector<fs::path> shards;
    for (const auto& s : m.shards) shards.push_back(manifest_path.parent_path() / s.path);
    if (options.name == "corpus") options.name = m.name;
    return ingest_jsonl(shards, tokenizer, options);
}

}  // namespace synthpipe
