#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthpipe/corpus_io.hpp"
#include "synthpipe/generation.hpp"
#include "synthpipe/prompts.hpp"
#include "synthpipe/segmentation.hpp"

namespace synthpipe {

struct RepetitionPolicy {
    bool allow = false;
    double max_epochs = 1.0;

    static RepetitionPolicy forbid() { return {}; }
    static RepetitionPolicy allow_up_to(double max_epochs) { return {true, max_epochs}; }
    bool operator==(const RepetitionPolicy&) const = default;
};

struct UpsampleSpec {
    std::string predicate = "conversational";
    double target_fraction = 0.0;
    bool operator==(const UpsampleSpec&) const = default;
};

struct MixtureComponent {
    std::string corpus;
    double weight = 0.0;
    bool operator==(const MixtureComponent&) const = default;
};

struct MixtureSpec {
    std::vector<MixtureComponent> components;
    std::int64_t total_token_budget = 0;
    std::uint64_t seed = 0;
    RepetitionPolicy repetition;
    std::optional<UpsampleSpec> upsample;
    bool operator==(const MixtureSpec&) const = default;
};

/// Throws InvalidArgument: empty components, non-positive weight or budget,
/// weights not summing to 1 (1e-6), target_fraction outside [0, 1].
void validate(const MixtureSpec& spec);

nlohmann::json to_json(const MixtureSpec& spec);
/// "components" may be an object {"web": 0.6} or an array of
/// {"corpus", "weight"}; "repetition" is "forbid" or {"allow": max_epochs}.
MixtureSpec mixture_spec_from_json(const nlohmann::json& j);

struct ComponentReport {
    std::string corpus;
    double target_fraction = 0.0;
    double target_tokens = 0.0;
    std::int64_t available_tokens = 0;
    std::int64_t realized_tokens = 0;
    double realized_fraction = 0.0;
    double epochs = 0.0;  // realized_tokens / available_tokens
    std::int64_t docs = 0;
};

struct MixtureReport {
    std::vector<ComponentReport> components;
    std::int64_t budget = 0;
    std::int64_t total_tokens = 0;
    std::int64_t max_doc_tokens = 0;
    std::optional<double> upsample_fraction;
    std::string provenance_path;

    const ComponentReport& component(std::string_view corpus) const;
};

nlohmann::json to_json(const MixtureReport& r);

struct ProvenanceEntry {
    std::int64_t out_position = 0;
    std::string doc_id;  // id in the source corpus
    std::string corpus;
    std::int64_t epoch = 0;
    bool operator==(const ProvenanceEntry&) const = default;
};

struct MixtureResult {
    CorpusHandle corpus;
    MixtureReport report;
    std::vector<ProvenanceEntry> provenance;
};

using CorpusMap = std::map<std::string, CorpusHandle, std::less<>>;

/// demanded / available. Throws InvalidArgument when available <= 0.
double epochs_required(std::int64_t available_tokens, std::int64_t demanded_tokens);
/// Fixed-point rendering, e.g. format_fixed(400.0 / 27.0, 4) == "14.8148".
std::string format_fixed(double value, int decimals);

/// Draws whole documents per component by seeded shuffle (reshuffled each
/// epoch) until the component is as close as one document can get to its
/// carried-over cumulative quota, then interleaves components by a seeded
/// shuffle of the per-component document slots.
/// Throws InsufficientTokens, EpochCapExceeded, InvalidArgument.
MixtureResult build_mixture(const MixtureSpec& spec, const CorpusMap& sources);

/// Verdicts keyed by document id (1 = predicate holds).
using VerdictMap = std::map<std::string, int, std::less<>>;

/// Mixes the spec's source documents so that the predicate-positive share of
/// tokens hits spec.upsample->target_fraction; the rest comes from negatives.
/// Throws MissingLabels, InsufficientLabeledTokens.
MixtureResult upsample_to_fraction(const MixtureSpec& spec, const CorpusMap& sources, const VerdictMap& verdicts);

/// Writes shards, provenance.jsonl and report.json under out_dir.
void write_mixture(MixtureResult& result, const std::filesystem::path& out_dir,
                   std::int64_t max_tokens_per_shard = 1'000'000, bool gzip = false);

struct Rq2Options {
    KeepHalf keep = KeepHalf::second;
    std::uint64_t seed = 0;
    double max_epochs = 4.0;
    std::size_t docs_per_shard = 256;
};

struct Rq2Corpora {
    MixtureResult full;
    MixtureResult repeat2x;
    MixtureResult synthetic_extension;
    HalfCorpus kept_half;
    SynthesisResult continuations;
};

/// Full-data, repeated-half and continuation-extended corpora at one budget.
/// Continuations are generated under work_dir/continuations.
Rq2Corpora build_rq2_corpora(const CorpusHandle& source, std::int64_t budget, GenerationEngine& engine,
                             const StrategyRegistry& registry, const std::filesystem::path& work_dir,
                             const Rq2Options& options = {});

struct Rq3Options {
    StrategyEnsemble ensemble{{{"qa_rephrase", 1.0}}, 0};
    std::uint64_t seed = 0;
    double max_epochs = 4.0;
    std::size_t docs_per_shard = 256;
};

struct Rq3Corpora {
    MixtureResult hq_synth_plus_hq;
    MixtureResult lq_synth_plus_hq;
    MixtureResult lq_plus_hq;
    CorpusHandle hq_web;  // the HQ documents used both in the mixes and as rephrasing seeds
    CorpusHandle lq_web;
    SynthesisResult hq_synth;
    SynthesisResult lq_synth;
};

/// Three 50:50 mixtures of HQ web with HQ synth, LQ synth or LQ web. Throws
/// SchemaViolation when the inputs' tiers do not match.
Rq3Corpora build_rq3_corpora(const CorpusHandle& hq_corpus, const CorpusHandle& lq_corpus, GenerationEngine& engine,
                             const StrategyRegistry& registry, std::int64_t budget,
                             const std::filesystem::path& work_dir, const Rq3Options& options = {});

}  // namespace synthpipe
