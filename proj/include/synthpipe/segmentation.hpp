#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "synthpipe/corpus_io.hpp"

namespace synthpipe {

struct SentenceSpan {
    std::size_t start = 0;  // byte offset of the first non-space byte
    std::size_t end = 0;    // exclusive
    std::int64_t token_count = 0;
    bool operator==(const SentenceSpan&) const = default;
};

/// Rule-based boundaries: a run of [.!?] (plus closing quotes/brackets)
/// followed by whitespace and an ASCII uppercase letter, or by end of text.
/// '.' after a stop-listed abbreviation (Dr., e.g., Fig., ...) never ends a
/// sentence. Throws EmptyText when `text` is blank.
std::vector<SentenceSpan> split_sentences(std::string_view text,
                                          const Tokenizer& tokenizer = reference_tokenizer());

bool is_abbreviation(std::string_view word);

struct SplitResult {
    Document first_half;
    Document second_half;
    std::size_t boundary_index = 0;  // number of sentences in first_half
};

/// Index b in [1, n) minimising |2*cum(b) - total|; ties go to the smaller b.
/// `sentence_tokens` must hold at least two entries.
std::size_t midpoint_boundary(const std::vector<std::int64_t>& sentence_tokens);

/// Splits at the sentence boundary closest to the token midpoint. Halves keep
/// source, tier, labels and meta; ids get ":h1" / ":h2". Throws NoInteriorBoundary.
SplitResult split_at_midpoint(const Document& doc,
                              const Tokenizer& tokenizer = reference_tokenizer());

enum class KeepHalf { first, second };

struct HalfCorpus {
    CorpusHandle corpus;
    std::int64_t dropped = 0;           // single-sentence documents
    std::int64_t splittable_tokens = 0;  // token mass of the documents that split
};

HalfCorpus build_half_corpus(const CorpusHandle& corpus, KeepHalf keep,
                             const Tokenizer& tokenizer = reference_tokenizer());

}  // namespace synthpipe
