#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synthpipe/corpus_io.hpp"

namespace synthpipe {

class GenerationEngine;

enum class StyleMethod { llm, heuristic, owt_label };
std::string_view to_string(StyleMethod m);
/// Accepts "llm", "heuristic", "owt" and "owt_label". Throws InvalidArgument.
StyleMethod parse_style_method(std::string_view s);

struct StyleVerdict {
    std::string doc_id;
    int label = 0;
    StyleMethod method = StyleMethod::heuristic;
    std::string raw_response;  // llm only
};

struct FractionEstimate {
    double fraction = 0.0;
    std::int64_t sample_size = 0;
    std::int64_t positives = 0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::uint64_t seed = 0;
    StyleMethod method = StyleMethod::heuristic;
};

nlohmann::json to_json(const FractionEstimate& e);

/// Conversational-vs-not instructions with the eight worked examples, ending
/// in "Classify the following text:".
extern const std::string_view kConversationalPrompt;

struct FewShotExample {
    std::string_view text;
    int label;
};
const std::array<FewShotExample, 8>& conversational_examples();

/// kConversationalPrompt, a newline, then the text.
std::string render_classification_prompt(std::string_view text);

/// The four style categories that mark naturally occurring conversation.
const std::array<std::string_view, 4>& conversational_owt_categories();

/// 1 iff there are at least two speaker-turn markers ("Q:", "A:", "User1:",
/// "Name:" or a dialogue dash) and the speaker changes at least once.
bool heuristic_conversational(std::string_view text);

/// Strict parse of "0" or "1" after trimming whitespace. Throws UnparseableResponse.
int parse_binary_response(std::string_view response);

/// Throws MissingLabels (owt_label without labels), ConfigError (llm without engine),
/// UnparseableResponse.
StyleVerdict classify_conversational(const Document& doc, StyleMethod method,
                                     GenerationEngine* engine = nullptr);

/// Same as classify_conversational per document; llm requests go through the
/// engine's worker pool as one batch.
std::vector<StyleVerdict> classify_batch(const std::vector<Document>& docs, StyleMethod method,
                                         GenerationEngine* engine = nullptr);

/// Wilson score interval for k successes in n trials.
std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n,
                                          double z = 1.959963984540054);

/// Seeded simple random sample without replacement, then the labeled-1 share.
/// Throws SampleTooLarge.
FractionEstimate estimate_fraction(const CorpusHandle& corpus, StyleMethod method,
                                   std::int64_t sample_size, std::uint64_t seed,
                                   GenerationEngine* engine = nullptr);

}  // namespace synthpipe
