#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synthpipe/corpus_io.hpp"
#include "synthpipe/prompts.hpp"

namespace synthpipe {

struct BackendConfig {
    std::string backend_id = "mock";
    std::string kind = "mock";  // "mock" or "http"
    std::string endpoint;       // e.g. http://localhost:8000/v1
    std::string model_name;
    std::string api_key_env;    // empty: no Authorization header
    int max_in_flight = 4;
    std::chrono::milliseconds request_timeout{60'000};
    int max_retries = 3;
    std::uint64_t seed = 0;     // mock output seed
    std::chrono::milliseconds backoff_base{500};
    std::chrono::milliseconds backoff_cap{30'000};

    bool operator==(const BackendConfig&) const = default;
};

nlohmann::json to_json(const BackendConfig& c);
BackendConfig backend_config_from_json(const nlohmann::json& j);
BackendConfig load_backend_config(const std::filesystem::path& path);

struct CompletionRequest {
    std::size_t index = 0;
    std::string prompt;
    SamplingParams sampling;
};

struct CompletionResponse {
    bool ok = false;
    std::string text;
    bool hit_length_limit = false;
    std::string error;
};

/// A chat-completion endpoint. complete() is called concurrently from the
/// engine's workers and must be thread-safe.
class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

/// Deterministic offline generator: a pure function of (prompt, seed).
/// Summaries are shorter than their source (for sources of two or more
/// tokens), continuations never copy the source, and classification prompts
/// are answered with "0"/"1" from the offline heuristic.
std::string mock_generate(std::string_view prompt, std::uint64_t seed);

class MockBackend final : public Backend {
public:
    explicit MockBackend(std::uint64_t seed) : seed_(seed) {}
    CompletionResponse complete(const CompletionRequest& request) override;

private:
    std::uint64_t seed_;
};

/// POST {endpoint}/chat/completions with a single user message. Non-2xx
/// responses and malformed bodies are reported as failures for retry.
class HttpBackend final : public Backend {
public:
    /// Throws ConfigError for a malformed endpoint or an unset key variable.
    explicit HttpBackend(BackendConfig config);
    CompletionResponse complete(const CompletionRequest& request) override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::string bearer_;
};

enum class GenerationStatus { ok, failed, truncated };
std::string_view to_string(GenerationStatus s);

struct GenerationRecord {
    std::string source_doc_id;
    std::string strategy_name;
    std::string backend_id;
    std::string prompt_hash;  // digest128_hex of the rendered prompt
    std::string output_text;
    std::int64_t output_token_count = 0;
    GenerationStatus status = GenerationStatus::failed;
    int attempts = 0;
    std::int64_t wall_time_ms = 0;
    std::string error;
};

/// Persisted form; wall_time_ms is omitted so artifacts are reproducible.
nlohmann::json to_json(const GenerationRecord& r);

struct PromptJob {
    std::string source_doc_id;
    std::string strategy_name;
    std::string prompt;
    SamplingParams sampling;
};

struct GenerationRequest {
    const Document& doc;
    const PromptStrategy& strategy;
};

class GenerationEngine {
public:
    /// Builds the backend from config.kind. Throws ConfigError.
    explicit GenerationEngine(BackendConfig config, const Tokenizer& tokenizer = reference_tokenizer());
    /// Uses a caller-provided backend (tests, custom transports). Throws ConfigError.
    GenerationEngine(BackendConfig config, std::shared_ptr<Backend> backend,
                     const Tokenizer& tokenizer = reference_tokenizer());

    const BackendConfig& config() const { return config_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

    /// Further caps concurrent requests below config.max_in_flight (0: no cap).
    void set_worker_cap(int cap) { worker_cap_ = cap; }

    /// One record per job, in job order. Never throws for backend failures.
    std::vector<GenerationRecord> run(const std::vector<PromptJob>& jobs);

    /// Renders each (doc, strategy) prompt and runs it.
    std::vector<GenerationRecord> generate_batch(const std::vector<GenerationRequest>& requests);

private:
    GenerationRecord run_one(const PromptJob& job, std::size_t index);

    BackendConfig config_;
    std::shared_ptr<Backend> backend_;
    const Tokenizer& tokenizer_;
    int worker_cap_ = 0;
};

/// Throws ConfigError when the configuration cannot work.
void validate(const BackendConfig& config);

struct SynthesisOptions {
    std::string name;                  // output corpus name; default "<source>+synth"
    std::size_t docs_per_shard = 256;  // checkpoint granularity
    /// Called after each shard is persisted with the number of completed
    /// shards; returning true stops the run there (simulated interruption).
    std::function<bool(std::size_t)> stop_after;
};

struct SynthesisReport {
    std::int64_t source_docs = 0;
    std::int64_t source_tokens = 0;
    std::int64_t ok = 0;
    std::int64_t failed = 0;
    std::int64_t truncated = 0;
    std::int64_t output_docs = 0;
    std::int64_t output_tokens = 0;
    std::map<std::string, std::int64_t> per_strategy;  // synthetic documents by strategy
    std::size_t shards_total = 0;
    std::size_t shards_resumed = 0;  // not persisted: differs between resumed and fresh runs
    bool complete = false;
};

nlohmann::json to_json(const SynthesisReport& r);

struct SynthesisResult {
    CorpusHandle corpus;
    SynthesisReport report;
};

/// Rephrases every document of `corpus` with its assigned strategy. Output
/// shards, per-shard records and a checkpoint are written under out_dir; a
/// rerun over the same inputs resumes after the last completed shard.
SynthesisResult synthesize_corpus(const CorpusHandle& corpus, const StrategyRegistry& registry,
                                  const StrategyEnsemble& ensemble, GenerationEngine& engine,
                                  const std::filesystem::path& out_dir,
                                  const SynthesisOptions& options = {});

}  // namespace synthpipe
