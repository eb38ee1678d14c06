#include "synthpipe/style.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "synthpipe/error.hpp"
#include "synthpipe/generation.hpp"
#include "synthpipe/random.hpp"

namespace synthpipe {

using nlohmann::json;

const std::string_view kConversationalPrompt =
    "Your task is to classify text as either conversational (1) or non-conversational (0).\n"
    "\n"
    "Conversational text (1) shows:\n"
    "- Back-and-forth exchanges between participants\n"
    "- Questions followed by relevant answers\n"
    "\n"
    "Non-conversational text (0) typically:\n"
    "- Presents information in a one-way format\n"
    "- Lacks interaction between participants\n"
    "- Contains formal or encyclopedic writing\n"
    "- Focuses on describing or explaining without dialogue\n"
    "\n"
    "Rate each text as exactly 0 or 1. Return only the number.\n"
    "\n"
    "Examples:\n"
    "- Text: \"The mitochondria is the powerhouse of the cell. It produces energy through cellular "
    "respiration. This process involves multiple steps including glycolysis and the Krebs cycle.\"\n"
    "  Output: 0\n"
    "- Text: \"A: Hey, I'm having trouble with my code. The function keeps returning null. B: Can you "
    "share the error message you're getting? A: Here's the stack trace: [error details] B: Ah, I see the "
    "issue. You need to initialize the variable first. A: That fixed it, thanks!\"\n"
    "  Output: 1\n"
    "- Text: \"Q: What's the capital of France? A: The capital of France is Paris. Q: What's its "
    "population? A: Paris has a population of about 2.2 million people.\"\n"
    "  Output: 1\n"
    "- Text: \"To install Python, first download the installer from python.org. Run the executable and "
    "follow the installation wizard. Make sure to check the 'Add Python to PATH' option during "
    "installation.\"\n"
    "  Output: 0\n"
    "- Text: \"JavaScript was created by Brendan Eich in 1995 while he was working at Netscape "
    "Communications Corporation. The language was originally designed for client-side web "
    "development.\"\n"
    "  Output: 0\n"
    "- Text: \"User1: Did anyone solve the memory leak issue? User2: Yes, it was related to the event "
    "listeners User1: How did you fix it? User2: We added a cleanup function in the useEffect hook "
    "User1: Got it, I'll try that\"\n"
    "  Output: 1\n"
    "- Text: \"The Renaissance was a period in European history marking the transition from the Middle "
    "Ages to modernity and covering the 15th and 16th centuries.\"\n"
    "  Output: 0\n"
    "- Text: \"- Can we push back the deadline? - I need to check with the team first. When would you "
    "need it by? - Would next Friday work? - Yes, that should be fine. I'll update the project "
    "timeline.\"\n"
    "  Output: 1\n"
    "\n"
    "Classify the following text:";

const std::array<FewShotExample, 8>& conversational_examples() {
    static const std::array<FewShotExample, 8> examples = {{
        {"The mitochondria is the powerhouse of the cell. It produces energy through cellular respiration. "
         "This process involves multiple steps including glycolysis and the Krebs cycle.",
         0},
        {"A: Hey, I'm having trouble with my code. The function keeps returning null. B: Can you share the "
         "error message you're getting? A: Here's the stack trace: [error details] B: Ah, I see the issue. "
         "You need to initialize the variable first. A: That fixed it, thanks!",
         1},
        {"Q: What's the capital of France? A: The capital of France is Paris. Q: What's its population? A: "
         "Paris has a population of about 2.2 million people.",
         1},
        {"To install Python, first download the installer from python.org. Run the executable and follow "
         "the installation wizard. Make sure to check the 'Add Python to PATH' option during installation.",
         0},
        {"JavaScript was created by Brendan Eich in 1995 while he was working at Netscape Communications "
         "Corporation. The language was originally designed for client-side web development.",
         0},
        {"User1: Did anyone solve the memory leak issue? User2: Yes, it was related to the event listeners "
         "User1: How did you fix it? User2: We added a cleanup function in the useEffect hook User1: Got "
         "it, I'll try that",
         1},
        {"The Renaissance was a period in European history marking the transition from the Middle Ages to "
         "modernity and covering the 15th and 16th centuries.",
         0},
        {"- Can we push back the deadline? - I need to check with the team first. When would you need it "
         "by? - Would next Friday work? - Yes, that should be fine. I'll update the project timeline.",
         1},
    }};
    return examples;
}

std::string render_classification_prompt(std::string_view text) {
    std::string out(kConversationalPrompt);
    out += '\n';
    out += text;
    return out;
}

const std::array<std::string_view, 4>& conversational_owt_categories() {
    static const std::array<std::string_view, 4> cats = {"Audio Transcript", "Customer Support", "FAQ",
                                                         "Q&A Forum"};
    return cats;
}

std::string_view to_string(StyleMethod m) {
    switch (m) {
        case StyleMethod::llm: return "llm";
        case StyleMethod::heuristic: return "heuristic";
        case StyleMethod::owt_label: return "owt_label";
    }
    return "heuristic";
}

StyleMethod parse_style_method(std::string_view s) {
    if (s == "llm") return StyleMethod::llm;
    if (s == "heuristic") return StyleMethod::heuristic;
    if (s == "owt" || s == "owt_label") return StyleMethod::owt_label;
    fail(ErrorCode::InvalidArgument, "unknown style method \"" + std::string(s) + "\"");
}

namespace {

// A marker opens a turn: at text start or after whitespace, a speaker token
// immediately followed by ':' and whitespace, or a lone '-' after a line start
// or sentence end.
std::vector<std::string> speaker_turns(std::string_view text) {
    std::vector<std::string> turns;
    std::size_t dash_turns = 0;
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && !is_space(text[i - 1])) continue;
        const char c = text[i];
        if (c == '-') {
            if (i + 1 >= n || text[i + 1] != ' ') continue;
            std::size_t p = i;
            while (p > 0 && text[p - 1] == ' ') --p;
            const bool opens = p == 0 || text[p - 1] == '\n' || text[p - 1] == '.' || text[p - 1] == '?' ||
                               text[p - 1] == '!' || text[p - 1] == '"';
            // Dashes carry no name; consecutive dash turns alternate speakers.
            if (opens) turns.push_back(dash_turns++ % 2 == 0 ? "-a" : "-b");
            continue;
        }
        if (!std::isupper(static_cast<unsigned char>(c))) continue;
        std::size_t j = i + 1;
        while (j < n && j - i < 20 && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
        if (j < n && text[j] == ':' && (j + 1 == n || is_space(text[j + 1]))) {
            turns.emplace_back(text.substr(i, j - i));
        }
    }
    return turns;
}

}  // namespace

bool heuristic_conversational(std::string_view text) {
    const auto turns = speaker_turns(text);
    if (turns.size() < 2) return false;
    for (std::size_t i = 1; i < turns.size(); ++i)
        if (turns[i] != turns[i - 1]) return true;
    return false;
}

int parse_binary_response(std::string_view response) {
    const std::string_view t = trim(response);
    if (t == "0") return 0;
    if (t == "1") return 1;
    fail(ErrorCode::UnparseableResponse, "expected \"0\" or \"1\", got \"" + std::string(t.substr(0, 80)) + "\"");
}

namespace {

int owt_label(const Document& doc) {
    if (doc.style_labels.empty()) fail(ErrorCode::MissingLabels, "document " + doc.id + " has no style labels");
    const auto& cats = conversational_owt_categories();
    for (const auto& label : doc.style_labels)
        if (std::find(cats.begin(), cats.end(), label) != cats.end()) return 1;
    return 0;
}

PromptJob classification_job(const Document& doc) {
    PromptJob job;
    job.source_doc_id = doc.id;
    job.strategy_name = "conversational_classifier";
    job.prompt = render_classification_prompt(doc.text);
    job.sampling = SamplingParams{0.0, 1.0, 4};
    return job;
}

StyleVerdict verdict_from_record(const Document& doc, const GenerationRecord& r) {
    if (r.status == GenerationStatus::failed)
        fail(ErrorCode::UnparseableResponse, "classification of " + doc.id + " failed: " + r.error);
    StyleVerdict v{doc.id, parse_binary_response(r.output_text), StyleMethod::llm, r.output_text};
    return v;
}

}  // namespace

StyleVerdict classify_conversational(const Document& doc, StyleMethod method, GenerationEngine* engine) {
    switch (method) {
        case StyleMethod::owt_label: return {doc.id, owt_label(doc), method, {}};
        case StyleMethod::heuristic: return {doc.id, heuristic_conversational(doc.text) ? 1 : 0, method, {}};
        case StyleMethod::llm: {
            if (engine == nullptr) fail(ErrorCode::ConfigError, "llm classification needs a backend");
            const auto records = engine->run({classification_job(doc)});
            return verdict_from_record(doc, records.front());
        }
    }
    fail(ErrorCode::InvalidArgument, "bad style method");
}

std::vector<StyleVerdict> classify_batch(const std::vector<Document>& docs, StyleMethod method,
                                         GenerationEngine* engine) {
    std::vector<StyleVerdict> out;
    out.reserve(docs.size());
    if (method != StyleMethod::llm) {
        for (const auto& d : docs) out.push_back(classify_conversational(d, method, engine));
        return out;
    }
    if (engine == nullptr) fail(ErrorCode::ConfigError, "llm classification needs a backend");
    std::vector<PromptJob> jobs;
    jobs.reserve(docs.size());
    for (const auto& d : docs) jobs.push_back(classification_job(d));
    const auto records = engine->run(jobs);
    for (std::size_t i = 0; i < docs.size(); ++i) out.push_back(verdict_from_record(docs[i], records[i]));
    return out;
}

std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n, double z) {
    if (n <= 0) fail(ErrorCode::InvalidArgument, "wilson interval needs n >= 1");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    double lo = std::clamp(centre - half, 0.0, 1.0);
    double hi = std::clamp(centre + half, 0.0, 1.0);
    if (k == 0) lo = 0.0;
    if (k == n) hi = 1.0;
    return {std::min(lo, p), std::max(hi, p)};
}

FractionEstimate estimate_fraction(const CorpusHandle& corpus, StyleMethod method, std::int64_t sample_size,
                                   std::uint64_t seed, GenerationEngine* engine) {
    const auto& docs = corpus.documents();
    if (sample_size < 1) fail(ErrorCode::InvalidArgument, "sample size must be >= 1");
    if (sample_size > static_cast<std::int64_t>(docs.size())) {
        fail(ErrorCode::SampleTooLarge, "sample of " + std::to_string(sample_size) + " exceeds " +
                                            std::to_string(docs.size()) + " documents");
    }
    // Partial Fisher-Yates: the first sample_size slots are the sample.
    std::vector<std::size_t> idx(docs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    const auto k = static_cast<std::size_t>(sample_size);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Document> sample;
    sample.reserve(k);
    for (std::size_t i = 0; i < k; ++i) sample.push_back(docs[idx[i]]);

    const auto verdicts = classify_batch(sample, method, engine);
    FractionEstimate est;
    est.sample_size = sample_size;
    est.seed = seed;
    est.method = method;
    for (const auto& v : verdicts) est.positives += v.label;
    est.fraction = static_cast<double>(est.positives) / static_cast<double>(sample_size);
    std::tie(est.ci_low, est.ci_high) = wilson_interval(est.positives, sample_size);
    return est;
}

json to_json(const FractionEstimate& e) {
    return {{"fraction", e.fraction}, {"sample_size", e.sample_size}, {"positives", e.positives},
            {"ci_low", e.ci_low},     {"ci_high", e.ci_high},         {"seed", e.seed},
            {"method", std::string(to_string(e.method))}};
}

}  // namespace synthpipe
