#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthpipe/corpus_io.hpp"

namespace synthpipe {

inline constexpr std::string_view kDocumentPlaceholder = "{{document}}";

struct SamplingParams {
    double temperature = 0.8;
    double top_p = 0.95;
    std::int64_t max_new_tokens = 1024;
    bool operator==(const SamplingParams&) const = default;
};

struct PromptStrategy {
    std::string name;
    std::string template_text;  // holds kDocumentPlaceholder exactly once
    std::string target_style;   // "summary", "continuation", "qa", ...
    std::int64_t max_source_tokens = 1000;
    SamplingParams sampling;
    bool operator==(const PromptStrategy&) const = default;
};

/// Throws InvalidArgument when a field constraint is violated.
void validate(const PromptStrategy& strategy);

nlohmann::json to_json(const PromptStrategy& s);
PromptStrategy strategy_from_json(const nlohmann::json& j);

/// Instruction texts that are reproduced word for word.
namespace verbatim {
inline constexpr std::string_view kSummarizeInstruction =
    "Summarize the following text. Directly start with the summary. Do not say anything else.";
inline constexpr std::string_view kContinueInstruction =
    "Continue the following text in the same style as the original.";
}  // namespace verbatim

/// Best-effort templates for the question/answer style families. The wording
/// is ours; only the style families themselves are taken from the literature.
namespace reconstructed {
extern const std::string_view kQaRephrase;
extern const std::string_view kMcq;
extern const std::string_view kYesNo;
extern const std::string_view kOpenEnded;
extern const std::string_view kReadingComprehension;
}  // namespace reconstructed

class StrategyRegistry {
public:
    /// Throws InvalidArgument on duplicate names or invalid strategies.
    void add(PromptStrategy strategy);
    /// `alias` resolves to the registered strategy `target`.
    void add_alias(std::string alias, std::string target);

    /// Throws UnknownStrategy.
    const PromptStrategy& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;  // registration order, aliases excluded

    static StrategyRegistry from_json(const nlohmann::json& pack);
    static StrategyRegistry load(const std::filesystem::path& path);
    /// Pack entries override same-named strategies in this registry.
    void merge(const StrategyRegistry& other);

private:
    std::vector<PromptStrategy> strategies_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::map<std::string, std::string, std::less<>> aliases_;
};

/// summarize, continue, qa_rephrase (alias "qa"), mcq, yesno, open_ended,
/// reading_comprehension.
const StrategyRegistry& builtin_registry();

/// Largest sentence-aligned prefix with at most `max_tokens` tokens. When the
/// first sentence alone is too long, falls back to the first `max_tokens`
/// whitespace tokens.
std::string truncate_to_tokens(std::string_view text, std::int64_t max_tokens,
                               const Tokenizer& tokenizer = reference_tokenizer());

/// Throws EmptyDocument.
std::string render_prompt(const PromptStrategy& strategy, const Document& doc,
                          const Tokenizer& tokenizer = reference_tokenizer());
/// Throws UnknownStrategy, EmptyDocument.
std::string render_prompt(const StrategyRegistry& registry, std::string_view strategy,
                          const Document& doc, const Tokenizer& tokenizer = reference_tokenizer());

struct StrategyEnsemble {
    std::vector<std::pair<std::string, double>> members;
    std::uint64_t seed = 0;
    bool operator==(const StrategyEnsemble&) const = default;
};

/// Throws EmptyEnsemble, or InvalidArgument for non-positive weights or a
/// weight sum off 1 by more than 1e-6.
void validate(const StrategyEnsemble& ensemble);

nlohmann::json to_json(const StrategyEnsemble& e);
/// Accepts {"members": {"name": w, ...} | [[name, w], ...], "seed": n}.
StrategyEnsemble ensemble_from_json(const nlohmann::json& j);

struct StrategyAssignment {
    std::string doc_id;
    std::string strategy;
    bool operator==(const StrategyAssignment&) const = default;
};

/// Strategy for one document id: keyed_hash64(seed, id) mapped onto the
/// cumulative weight intervals. Independent of corpus order.
const std::string& assign_strategy(const StrategyEnsemble& ensemble, std::string_view doc_id);

std::vector<StrategyAssignment> assign_strategies(const StrategyEnsemble& ensemble,
                                                  const std::vector<Document>& documents);

}  // namespace synthpipe
