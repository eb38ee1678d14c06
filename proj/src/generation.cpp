#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "synthpipe/generation.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/hashing.hpp"
#include "synthpipe/random.hpp"
#include "synthpipe/style.hpp"

namespace synthpipe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

json to_json(const BackendConfig& c) {
    return {{"backend_id", c.backend_id},
            {"kind", c.kind},
            {"endpoint", c.endpoint},
            {"model_name", c.model_name},
            {"api_key_env", c.api_key_env},
            {"max_in_flight", c.max_in_flight},
            {"request_timeout_ms", c.request_timeout.count()},
            {"max_retries", c.max_retries},
            {"seed", c.seed},
            {"backoff_base_ms", c.backoff_base.count()},
            {"backoff_cap_ms", c.backoff_cap.count()}};
}

BackendConfig backend_config_from_json(const json& j) {
    try {
        BackendConfig c;
        c.backend_id = j.value("backend_id", c.backend_id);
        c.kind = j.value("kind", c.kind);
        c.endpoint = j.value("endpoint", c.endpoint);
        c.model_name = j.value("model_name", c.model_name);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
        c.max_retries = j.value("max_retries", c.max_retries);
        c.seed = j.value("seed", c.seed);
        c.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", c.backoff_base.count()));
        c.backoff_cap = std::chrono::milliseconds(j.value("backoff_cap_ms", c.backoff_cap.count()));
        return c;
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("bad backend config: ") + e.what());
    }
}

BackendConfig load_backend_config(const fs::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCode::ConfigError, path.string() + " is not a JSON object");
    return backend_config_from_json(j);
}

void validate(const BackendConfig& c) {
    if (c.backend_id.empty()) fail(ErrorCode::ConfigError, "backend_id is empty");
    if (c.max_in_flight < 1) fail(ErrorCode::ConfigError, "max_in_flight must be >= 1");
    if (c.max_retries < 0) fail(ErrorCode::ConfigError, "max_retries must be >= 0");
    if (c.request_timeout.count() <= 0) fail(ErrorCode::ConfigError, "request_timeout must be > 0");
    if (c.backoff_base.count() < 0 || c.backoff_cap.count() < 0) fail(ErrorCode::ConfigError, "negative backoff");
    if (c.kind != "mock" && c.kind != "http") fail(ErrorCode::ConfigError, "unknown backend kind \"" + c.kind + "\"");
}

// ---- mock ------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 16> kSyllables = {"ba", "ko", "ri", "mu", "te", "sa", "lo", "ne",
                                                         "vi", "du", "pa", "zo", "ke", "fi", "ga", "ru"};

std::string mock_word(std::uint8_t b) {
    return std::string(kSyllables[b >> 4]) + std::string(kSyllables[b & 0xF]) + "x";
}

std::vector<std::string_view> split_words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

// Joins words into sentences of up to 12 words, capitalising each start.
std::string as_sentences(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string w = words[i];
        const bool starts = i % 12 == 0;
        const bool ends = i % 12 == 11 || i + 1 == words.size();
        if (starts && !w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (ends) {
            while (!w.empty() && (w.back() == '.' || w.back() == '!' || w.back() == '?')) w.pop_back();
            if (w.empty()) w = "x";
            w += '.';
        }
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

// The leading words spell out the 64-bit hash, so distinct hashes give distinct texts.
std::vector<std::string> hash_words(std::uint64_t h, std::size_t limit) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < 8 && i < limit; ++i) out.push_back(mock_word(static_cast<std::uint8_t>(h >> (8 * i))));
    return out;
}

}  // namespace

std::string mock_generate(std::string_view prompt, std::uint64_t seed) {
    if (prompt.substr(0, kConversationalPrompt.size()) == kConversationalPrompt) {
        std::string_view text = prompt.substr(kConversationalPrompt.size());
        return heuristic_conversational(text) ? "1" : "0";
    }
    const std::uint64_t h = keyed_hash64(seed, prompt);
    std::mt19937_64 rng(h);

    std::string_view instruction = prompt;
    std::string_view source = prompt;
    if (auto pos = prompt.find("\n\n"); pos != std::string_view::npos) {
        instruction = prompt.substr(0, pos);
        source = prompt.substr(pos + 2);
    }
    const auto src_words = split_words(source);
    const std::size_t n = std::max<std::size_t>(1, src_words.size());

    if (instruction.rfind("Summarize", 0) == 0) {
        const std::size_t len = n >= 2 ? n / 2 : 1;
        auto words = hash_words(h, len);
        while (words.size() < len) {
            words.emplace_back(src_words.empty() ? mock_word(static_cast<std::uint8_t>(rng()))
                                                 : std::string(src_words[uniform_index(rng, src_words.size())]));
        }
        return as_sentences(words);
    }
    if (instruction.rfind("Continue", 0) == 0) {
        auto words = hash_words(h, n);
        while (words.size() < n) words.push_back(mock_word(static_cast<std::uint8_t>(rng())));
        return as_sentences(words);
    }
    // Question/answer style rephrasings.
    const std::size_t len = std::max<std::size_t>(n, 12);
    auto words = hash_words(h, len);
    while (words.size() < len) {
        words.emplace_back(src_words.empty() ? mock_word(static_cast<std::uint8_t>(rng()))
                                             : std::string(src_words[uniform_index(rng, src_words.size())]));
    }
    const std::size_t half = len / 2;
    std::vector<std::string> q(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<std::string> a(words.begin() + static_cast<std::ptrdiff_t>(half), words.end());
    std::string qs = as_sentences(q);
    qs.back() = '?';
    return "Question: " + qs + "\nAnswer: " + as_sentences(a);
}

CompletionResponse MockBackend::complete(const CompletionRequest& request) {
    CompletionResponse r;
    r.text = mock_generate(request.prompt, seed_);
    r.ok = !r.text.empty();
    if (!r.ok) r.error = "empty mock output";
    return r;
}

// ---- http ------------------------------------------------------------------

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    const std::string& ep = config_.endpoint;
    const auto scheme_end = ep.find("://");
    if (scheme_end == std::string::npos || (ep.rfind("http://", 0) != 0 && ep.rfind("https://", 0) != 0))
        fail(ErrorCode::ConfigError, "endpoint must start with http:// or https://, got \"" + ep + "\"");
    const auto path_start = ep.find('/', scheme_end + 3);
    scheme_host_port_ = ep.substr(0, path_start);
    if (scheme_host_port_.size() <= scheme_end + 3) fail(ErrorCode::ConfigError, "endpoint has no host: " + ep);
    path_prefix_ = path_start == std::string::npos ? "" : ep.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (config_.model_name.empty()) fail(ErrorCode::ConfigError, "model_name is required for http backends");
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            fail(ErrorCode::ConfigError, "environment variable " + config_.api_key_env + " is not set");
        bearer_ = key;
    }
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
    CompletionResponse r;
    httplib::Client client(scheme_host_port_);
    const auto timeout = config_.request_timeout;
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);

    const json body = {{"model", config_.model_name},
                       {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                       {"temperature", request.sampling.temperature},
                       {"top_p", request.sampling.top_p},
                       {"max_tokens", request.sampling.max_new_tokens}};
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        r.error = "transport error: " + httplib::to_string(res.error());
        return r;
    }
    if (res->status < 200 || res->status >= 300) {
        r.error = "HTTP " + std::to_string(res->status);
        return r;
    }
    json reply = json::parse(res->body, nullptr, false);
    try {
        const json& choice = reply.at("choices").at(0);
        r.text = choice.at("message").at("content").get<std::string>();
        if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string())
            r.hit_length_limit = fr->get<std::string>() == "length";
        r.ok = true;
    } catch (const json::exception&) {
        r.error = "malformed completion response";
    }
    return r;
}

// ---- engine ----------------------------------------------------------------

std::string_view to_string(GenerationStatus s) {
    switch (s) {
        case GenerationStatus::ok: return "ok";
        case GenerationStatus::failed: return "failed";
        case GenerationStatus::truncated: return "truncated";
    }
    return "failed";
}

json to_json(const GenerationRecord& r) {
    json j = {{"source_doc_id", r.source_doc_id},
              {"strategy", r.strategy_name},
              {"backend_id", r.backend_id},
              {"prompt_hash", r.prompt_hash},
              {"output_text", r.output_text},
              {"output_token_count", r.output_token_count},
              {"status", std::string(to_string(r.status))},
              {"attempts", r.attempts}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

namespace {

std::shared_ptr<Backend> make_backend(const BackendConfig& c) {
    validate(c);
    if (c.kind == "http") return std::make_shared<HttpBackend>(c);
    return std::make_shared<MockBackend>(c.seed);
}

}  // namespace

GenerationEngine::GenerationEngine(BackendConfig config, const Tokenizer& tokenizer)
    : config_(std::move(config)), backend_(make_backend(config_)), tokenizer_(tokenizer) {}

GenerationEngine::GenerationEngine(BackendConfig config, std::shared_ptr<Backend> backend,
                                   const Tokenizer& tokenizer)
    : config_(std::move(config)), backend_(std::move(backend)), tokenizer_(tokenizer) {
    validate(config_);
    if (!backend_) fail(ErrorCode::ConfigError, "null backend");
}

GenerationRecord GenerationEngine::run_one(const PromptJob& job, std::size_t index) {
    GenerationRecord rec;
    rec.source_doc_id = job.source_doc_id;
    rec.strategy_name = job.strategy_name;
    rec.backend_id = config_.backend_id;
    rec.prompt_hash = digest128_hex(job.prompt);

    const auto started = std::chrono::steady_clock::now();
    const CompletionRequest request{index, job.prompt, job.sampling};
    for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
        rec.attempts = attempt;
        CompletionResponse resp;
        try {
            resp = backend_->complete(request);
        } catch (const std::exception& e) {
            resp.ok = false;
            resp.error = e.what();
        }
        if (resp.ok && trim(resp.text).empty()) {
            resp.ok = false;
            resp.error = "empty completion";
        }
        if (resp.ok) {
            rec.output_text = std::move(resp.text);
            rec.output_token_count = tokenizer_.count(rec.output_text);
            rec.status = resp.hit_length_limit || rec.output_token_count > job.sampling.max_new_tokens
                             ? GenerationStatus::truncated
                             : GenerationStatus::ok;
            rec.error.clear();
            break;
        }
        rec.status = GenerationStatus::failed;
        rec.error = resp.error;
        if (attempt <= config_.max_retries) {
            // Exponential backoff with jitter in [0.5, 1) of the capped delay.
            const double base = static_cast<double>(config_.backoff_base.count());
            const double capped = std::min(static_cast<double>(config_.backoff_cap.count()),
                                           base * std::ldexp(1.0, attempt - 1));
            const double jitter =
                0.5 + 0.5 * unit_interval(keyed_hash64(index, "backoff:" + std::to_string(attempt)));
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(capped * jitter));
        }
    }
    rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    return rec;
}

std::vector<GenerationRecord> GenerationEngine::run(const std::vector<PromptJob>& jobs) {
    std::vector<GenerationRecord> records(jobs.size());
    if (jobs.empty()) return records;
    int workers = config_.max_in_flight;
    if (worker_cap_ > 0) workers = std::min(workers, worker_cap_);
    workers = std::min<int>(workers, static_cast<int>(jobs.size()));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            records[i] = run_one(jobs[i], i);
        }
    };
    if (workers <= 1) {
        worker();
        return records;
    }
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();  // joins
    return records;
}

std::vector<GenerationRecord> GenerationEngine::generate_batch(const std::vector<GenerationRequest>& requests) {
    if (requests.empty()) fail(ErrorCode::InvalidArgument, "empty generation batch");
    std::vector<PromptJob> jobs;
    jobs.reserve(requests.size());
    for (const auto& r : requests) {
        jobs.push_back({r.doc.id, r.strategy.name, render_prompt(r.strategy, r.doc, tokenizer_), r.strategy.sampling});
    }
    return run(jobs);
}

// ---- corpus synthesis -------------------------------------------------------

json to_json(const SynthesisReport& r) {
    return {{"source_docs", r.source_docs},   {"source_tokens", r.source_tokens},
            {"ok", r.ok},                     {"failed", r.failed},
            {"truncated", r.truncated},       {"output_docs", r.output_docs},
            {"output_tokens", r.output_tokens}, {"per_strategy", r.per_strategy},
            {"shards_total", r.shards_total}, {"complete", r.complete}};
}

namespace {

std::string shard_name(const char* prefix, std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s-%05zu.jsonl", prefix, i);
    return buf;
}

std::string run_fingerprint(const CorpusHandle& corpus, const StrategyRegistry& registry,
                            const StrategyEnsemble& ensemble, const BackendConfig& backend,
                            std::size_t docs_per_shard) {
    std::string key = corpus.name + '\n' + to_json(ensemble).dump() + '\n' + backend.backend_id + '\n' +
                      backend.kind + '\n' + backend.model_name + '\n' + std::to_string(backend.seed) + '\n' +
                      std::to_string(docs_per_shard) + '\n';
    for (const auto& [name, w] : ensemble.members) key += to_json(registry.get(name)).dump() + '\n';
    for (const auto& d : corpus.documents()) key += d.id + '\x1f' + digest128_hex(d.text) + '\n';
    return digest128_hex(key);
}

Document synthetic_document(const Document& src, const GenerationRecord& rec, const Tokenizer& tokenizer) {
    Document d;
    d.id = src.id + "|" + rec.strategy_name;
    d.text = rec.output_text;
    d.source = "synthetic";
    d.quality_tier = src.quality_tier;
    d.token_count = tokenizer.count(d.text);
    d.meta = {{"source_doc_id", src.id}, {"strategy", rec.strategy_name}, {"backend_id", rec.backend_id}};
    if (rec.status == GenerationStatus::truncated) d.meta["truncated"] = "true";
    return d;
}

}  // namespace

SynthesisResult synthesize_corpus(const CorpusHandle& corpus, const StrategyRegistry& registry,
                                  const StrategyEnsemble& ensemble, GenerationEngine& engine,
                                  const fs::path& out_dir, const SynthesisOptions& options) {
    validate(ensemble);
    for (const auto& [name, w] : ensemble.members) registry.get(name);
    const auto& docs = corpus.documents();
    if (docs.empty()) fail(ErrorCode::EmptyCorpus, "corpus " + corpus.name + " is empty");
    const std::size_t per_shard = std::max<std::size_t>(1, options.docs_per_shard);
    const std::size_t n_shards = (docs.size() + per_shard - 1) / per_shard;
    const std::string name = options.name.empty() ? corpus.name + "+synth" : options.name;
    const std::string fingerprint = run_fingerprint(corpus, registry, ensemble, engine.config(), per_shard);
    const auto assignments = assign_strategies(ensemble, docs);

    std::size_t done = 0;
    const fs::path checkpoint_path = out_dir / "checkpoint.json";
    if (fs::exists(checkpoint_path)) {
        json cp = json::parse(read_file(checkpoint_path), nullptr, false);
        if (cp.is_discarded() || cp.value("fingerprint", std::string{}) != fingerprint)
            fail(ErrorCode::ConfigError, "checkpoint in " + out_dir.string() + " belongs to a different run");
        done = std::min<std::size_t>(cp.value("completed_shards", std::size_t{0}), n_shards);
        for (std::size_t s = 0; s < done; ++s) {
            if (!fs::exists(out_dir / shard_name("shard", s)) || !fs::exists(out_dir / shard_name("records", s))) {
                done = s;
                break;
            }
        }
    }

    SynthesisReport report;
    report.shards_total = n_shards;
    report.shards_resumed = done;
    for (std::size_t s = done; s < n_shards; ++s) {
        const std::size_t begin = s * per_shard;
        const std::size_t end = std::min(docs.size(), begin + per_shard);
        std::vector<GenerationRequest> requests;
        for (std::size_t i = begin; i < end; ++i)
            requests.push_back({docs[i], registry.get(assignments[i].strategy)});
        // Records carry the ensemble's member name, which may be an alias.
        auto records = engine.generate_batch(requests);
        std::string shard_body;
        std::string record_body;
        for (std::size_t i = begin; i < end; ++i) {
            auto& rec = records[i - begin];
            rec.strategy_name = assignments[i].strategy;
            record_body += to_json(rec).dump() + '\n';
            if (rec.status != GenerationStatus::failed)
                shard_body += to_jsonl_line(synthetic_document(docs[i], rec, engine.tokenizer())) + '\n';
        }
        write_file_atomic(out_dir / shard_name("shard", s), shard_body);
        write_file_atomic(out_dir / shard_name("records", s), record_body);
        write_file_atomic(checkpoint_path,
                          json{{"fingerprint", fingerprint}, {"completed_shards", s + 1}, {"total_shards", n_shards}}
                                  .dump(2) +
                              "\n");
        if (options.stop_after && s + 1 < n_shards && options.stop_after(s + 1)) {
            report.complete = false;
            return {make_corpus(name, {}), report};
        }
    }

    // Rebuild from disk so resumed and uninterrupted runs take the same path.
    std::vector<Document> out_docs;
    ShardManifest manifest;
    manifest.name = name;
    for (std::size_t s = 0; s < n_shards; ++s) {
        const std::string file = shard_name("shard", s);
        const std::string body = read_file(out_dir / file);
        ShardInfo info{file, 0, 0};
        for (std::string_view line : split_lines(body)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line);
            Document d;
            d.id = j.at("id").get<std::string>();
            d.text = j.at("text").get<std::string>();
            d.source = j.at("source").get<std::string>();
            d.quality_tier = parse_quality_tier(j.at("quality_tier").get<std::string>()).value_or(QualityTier::unknown);
            d.style_labels = j.at("style_labels").get<std::vector<std::string>>();
            d.meta = j.at("meta").get<std::map<std::string, std::string>>();
            d.token_count = engine.tokenizer().count(d.text);
            ++info.docs;
            info.tokens += d.token_count;
            out_docs.push_back(std::move(d));
        }
        const std::string records = read_file(out_dir / shard_name("records", s));
        for (std::string_view line : split_lines(records)) {
            if (trim(line).empty()) continue;
            json r = json::parse(line);
            const std::string status = r.at("status").get<std::string>();
            if (status == "ok") ++report.ok;
            else if (status == "truncated") ++report.truncated;
            else ++report.failed;
        }
        if (info.docs > 0) manifest.shards.push_back(info);
        manifest.total_tokens += info.tokens;
    }
    report.source_docs = static_cast<std::int64_t>(docs.size());
    report.source_tokens = corpus.total_tokens;
    report.output_docs = static_cast<std::int64_t>(out_docs.size());
    report.output_tokens = manifest.total_tokens;
    for (const auto& d : out_docs) ++report.per_strategy[d.meta.at("strategy")];
    report.complete = true;
    write_file_atomic(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
    write_file_atomic(out_dir / "report.json", to_json(report).dump(2) + "\n");

    std::vector<fs::path> paths;
    for (const auto& s : manifest.shards) paths.push_back(out_dir / s.path);
    return {make_corpus(name, std::move(out_docs), std::move(paths)), report};
}

}  // namespace synthpipe
