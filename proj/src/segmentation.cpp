#include "synthpipe/segmentation.hpp"

#include <array>
#include <cctype>
#include <cstdlib>

#include "synthpipe/error.hpp"

namespace synthpipe {

namespace {

constexpr std::array<std::string_view, 11> kAbbreviations = {
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "e.g.", "i.e.", "vs.", "etc.", "Fig.", "Eq.",
};

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }

// The whitespace-delimited word ending at `last` (inclusive), leading openers stripped.
std::string_view word_ending_at(std::string_view text, std::size_t last) {
    std::size_t begin = last;
    while (begin > 0 && !is_space(text[begin - 1])) --begin;
    while (begin < last && is_opener(text[begin])) ++begin;
    return text.substr(begin, last - begin + 1);
}

}  // namespace

bool is_abbreviation(std::string_view word) {
    for (auto a : kAbbreviations)
        if (word == a) return true;
    return false;
}

std::vector<SentenceSpan> split_sentences(std::string_view text, const Tokenizer& tokenizer) {
    const std::size_t n = text.size();
    std::size_t pos = 0;
    while (pos < n && is_space(text[pos])) ++pos;
    if (pos == n) fail(ErrorCode::EmptyText, "cannot split empty text");

    std::vector<SentenceSpan> spans;
    auto emit = [&](std::size_t start, std::size_t end) {
        spans.push_back({start, end, tokenizer.count(text.substr(start, end - start))});
    };

    std::size_t start = pos;
    std::size_t i = pos;
    while (i < n) {
        if (!is_terminator(text[i])) {
            ++i;
            continue;
        }
        const std::size_t first_term = i;
        std::size_t j = i;
        while (j < n && is_terminator(text[j])) ++j;
        while (j < n && is_closer(text[j])) ++j;
        // j is one past the candidate sentence end.
        bool boundary = false;
        std::size_t next = j;
        if (j == n) {
            boundary = true;
        } else if (is_space(text[j])) {
            while (next < n && is_space(text[next])) ++next;
            boundary = next == n || std::isupper(static_cast<unsigned char>(text[next]));
        }
        if (boundary && text[first_term] == '.' && j == first_term + 1 &&
            is_abbreviation(word_ending_at(text, first_term))) {
            boundary = false;
        }
        if (boundary) {
            emit(start, j);
            if (next >= n) return spans;
            start = next;
            i = next;
        } else {
            i = j;
        }
    }
    std::size_t end = n;
    while (end > start && is_space(text[end - 1])) --end;
    emit(start, end);
    return spans;
}

std::size_t midpoint_boundary(const std::vector<std::int64_t>& sentence_tokens) {
    if (sentence_tokens.size() < 2) fail(ErrorCode::NoInteriorBoundary, "need at least two sentences");
    std::int64_t total = 0;
    for (auto t : sentence_tokens) total += t;
    std::size_t best = 1;
    std::int64_t best_gap = -1;
    std::int64_t cum = 0;
    for (std::size_t b = 1; b < sentence_tokens.size(); ++b) {
        cum += sentence_tokens[b - 1];
        const std::int64_t gap = std::llabs(2 * cum - total);
        if (best_gap < 0 || gap < best_gap) {
            best = b;
            best_gap = gap;
        }
    }
    return best;
}

SplitResult split_at_midpoint(const Document& doc, const Tokenizer& tokenizer) {
    const auto spans = split_sentences(doc.text, tokenizer);
    if (spans.size() < 2) {
        fail(ErrorCode::NoInteriorBoundary, "document " + doc.id + " has a single sentence");
    }
    std::vector<std::int64_t> lens;
    lens.reserve(spans.size());
    for (const auto& s : spans) lens.push_back(s.token_count);
    const std::size_t b = midpoint_boundary(lens);

    auto make_half = [&](std::size_t from, std::size_t to, const char* suffix) {
        Document half = doc;
        half.id = doc.id + suffix;
        half.text = doc.text.substr(spans[from].start, spans[to - 1].end - spans[from].start);
        half.token_count = tokenizer.count(half.text);
        return half;
    };
    SplitResult r;
    r.first_half = make_half(0, b, ":h1");
    r.second_half = make_half(b, spans.size(), ":h2");
    r.boundary_index = b;
    return r;
}

HalfCorpus build_half_corpus(const CorpusHandle& corpus, KeepHalf keep, const Tokenizer& tokenizer) {
    if (corpus.documents().empty()) fail(ErrorCode::EmptyCorpus, "corpus " + corpus.name + " is empty");
    std::vector<Document> kept;
    HalfCorpus out;
    for (const auto& doc : corpus.documents()) {
        const auto spans = split_sentences(doc.text, tokenizer);
        if (spans.size() < 2) {
            ++out.dropped;
            continue;
        }
        SplitResult r = split_at_midpoint(doc, tokenizer);
        out.splittable_tokens += doc.token_count;
        kept.push_back(keep == KeepHalf::first ? std::move(r.first_half) : std::move(r.second_half));
    }
    if (kept.empty()) fail(ErrorCode::EmptyCorpus, "no document in " + corpus.name + " could be split");
    const char* tag = keep == KeepHalf::first ? ":first_half" : ":second_half";
    out.corpus = make_corpus(corpus.name + tag, std::move(kept));
    return out;
}

}  // namespace synthpipe
