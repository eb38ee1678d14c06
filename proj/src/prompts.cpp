#include "synthpipe/prompts.hpp"

#include <cmath>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/hashing.hpp"
#include "synthpipe/segmentation.hpp"

namespace synthpipe {

using nlohmann::json;

namespace reconstructed {
const std::string_view kQaRephrase =
    "Convert the following text into a conversational exchange of questions and answers "
    "between a curious reader and an expert. Keep every fact from the text and do not add "
    "new information.\n\n{{document}}";
const std::string_view kMcq =
    "Write multiple-choice questions that test understanding of the following text. Give "
    "each question four options and mark the correct answer.\n\n{{document}}";
const std::string_view kYesNo =
    "Write yes/no questions about the following text. Follow each question with its answer "
    "and a one-sentence justification taken from the text.\n\n{{document}}";
const std::string_view kOpenEnded =
    "Write open-ended questions about the following text. Follow each question with a "
    "detailed answer that relies only on the text.\n\n{{document}}";
const std::string_view kReadingComprehension =
    "Turn the following text into a reading comprehension exercise. Restate the passage, "
    "then ask questions about it and answer each one.\n\n{{document}}";
}  // namespace reconstructed

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

void validate(const PromptStrategy& s) {
    if (s.name.empty()) fail(ErrorCode::InvalidArgument, "strategy name is empty");
    if (count_occurrences(s.template_text, kDocumentPlaceholder) != 1)
        fail(ErrorCode::InvalidArgument, "template of " + s.name + " must contain {{document}} exactly once");
    if (s.max_source_tokens <= 0) fail(ErrorCode::InvalidArgument, s.name + ": max_source_tokens must be > 0");
    if (!(s.sampling.temperature >= 0.0)) fail(ErrorCode::InvalidArgument, s.name + ": temperature must be >= 0");
    if (!(s.sampling.top_p > 0.0 && s.sampling.top_p <= 1.0))
        fail(ErrorCode::InvalidArgument, s.name + ": top_p must be in (0, 1]");
    if (s.sampling.max_new_tokens <= 0) fail(ErrorCode::InvalidArgument, s.name + ": max_new_tokens must be > 0");
}

json to_json(const PromptStrategy& s) {
    return {{"name", s.name},
            {"template", s.template_text},
            {"target_style", s.target_style},
            {"max_source_tokens", s.max_source_tokens},
            {"sampling",
             {{"temperature", s.sampling.temperature},
              {"top_p", s.sampling.top_p},
              {"max_new_tokens", s.sampling.max_new_tokens}}}};
}

PromptStrategy strategy_from_json(const json& j) {
    try {
        PromptStrategy s;
        s.name = j.at("name").get<std::string>();
        s.template_text = j.at("template").get<std::string>();
        s.target_style = j.value("target_style", std::string{});
        s.max_source_tokens = j.value("max_source_tokens", s.max_source_tokens);
        if (auto it = j.find("sampling"); it != j.end()) {
            s.sampling.temperature = it->value("temperature", s.sampling.temperature);
            s.sampling.top_p = it->value("top_p", s.sampling.top_p);
            s.sampling.max_new_tokens = it->value("max_new_tokens", s.sampling.max_new_tokens);
        }
        validate(s);
        return s;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("bad strategy entry: ") + e.what());
    }
}

void StrategyRegistry::add(PromptStrategy strategy) {
    validate(strategy);
    if (index_.count(strategy.name) || aliases_.count(strategy.name))
        fail(ErrorCode::InvalidArgument, "duplicate strategy " + strategy.name);
    index_.emplace(strategy.name, strategies_.size());
    strategies_.push_back(std::move(strategy));
}

void StrategyRegistry::add_alias(std::string alias, std::string target) {
    if (!index_.count(target)) fail(ErrorCode::UnknownStrategy, "alias target " + target + " is not registered");
    if (index_.count(alias) || aliases_.count(alias)) fail(ErrorCode::InvalidArgument, "duplicate strategy " + alias);
    aliases_.emplace(std::move(alias), std::move(target));
}

const PromptStrategy& StrategyRegistry::get(std::string_view name) const {
    if (auto a = aliases_.find(name); a != aliases_.end()) name = a->second;
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorCode::UnknownStrategy, "unknown strategy \"" + std::string(name) + "\"");
    return strategies_[it->second];
}

bool StrategyRegistry::contains(std::string_view name) const {
    return index_.count(name) > 0 || aliases_.count(name) > 0;
}

std::vector<std::string> StrategyRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& s : strategies_) out.push_back(s.name);
    return out;
}

StrategyRegistry StrategyRegistry::from_json(const json& pack) {
    if (!pack.is_array()) fail(ErrorCode::SchemaViolation, "strategy pack must be a JSON array");
    StrategyRegistry r;
    for (const auto& entry : pack) r.add(strategy_from_json(entry));
    return r;
}

StrategyRegistry StrategyRegistry::load(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaViolation, path.string() + " is not valid JSON");
    return from_json(j);
}

void StrategyRegistry::merge(const StrategyRegistry& other) {
    for (const auto& s : other.strategies_) {
        if (auto it = index_.find(s.name); it != index_.end()) {
            strategies_[it->second] = s;
        } else {
            aliases_.erase(s.name);
            add(s);
        }
    }
}

const StrategyRegistry& builtin_registry() {
    static const StrategyRegistry registry = [] {
        StrategyRegistry r;
        auto make = [](std::string name, std::string_view tmpl, std::string style) {
            PromptStrategy s;
            s.name = std::move(name);
            s.template_text = std::string(tmpl);
            s.target_style = std::move(style);
            return s;
        };
        r.add(make("summarize", std::string(verbatim::kSummarizeInstruction) + "\n\n{{document}}", "summary"));
        r.add(make("continue", std::string(verbatim::kContinueInstruction) + "\n\n{{document}}", "continuation"));
        r.add(make("qa_rephrase", reconstructed::kQaRephrase, "qa"));
        r.add(make("mcq", reconstructed::kMcq, "mcq"));
        r.add(make("yesno", reconstructed::kYesNo, "yesno"));
        r.add(make("open_ended", reconstructed::kOpenEnded, "open_ended"));
        r.add(make("reading_comprehension", reconstructed::kReadingComprehension, "reading_comprehension"));
        r.add_alias("qa", "qa_rephrase");
        return r;
    }();
    return registry;
}

std::string truncate_to_tokens(std::string_view text, std::int64_t max_tokens, const Tokenizer& tokenizer) {
    const std::string_view body = trim(text);
    if (tokenizer.count(body) <= max_tokens) return std::string(body);

    const auto spans = split_sentences(body, tokenizer);
    std::int64_t used = 0;
    std::size_t end = 0;
    for (const auto& s : spans) {
        if (used + s.token_count > max_tokens) break;
        used += s.token_count;
        end = s.end;
    }
    if (end > 0) return std::string(body.substr(0, end));

    // First sentence alone is over the limit: cut after max_tokens tokens.
    std::int64_t seen = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        const bool space = is_space(body[i]);
        if (!space && !in_token) {
            if (seen == max_tokens) return std::string(trim(body.substr(0, i)));
            ++seen;
        }
        in_token = !space;
    }
    return std::string(body);
}

std::string render_prompt(const PromptStrategy& strategy, const Document& doc, const Tokenizer& tokenizer) {
    if (trim(doc.text).empty()) fail(ErrorCode::EmptyDocument, "document " + doc.id + " is empty");
    const std::string source = truncate_to_tokens(doc.text, strategy.max_source_tokens, tokenizer);
    std::string out = strategy.template_text;
    const std::size_t pos = out.find(kDocumentPlaceholder);
    out.replace(pos, kDocumentPlaceholder.size(), source);
    return out;
}

std::string render_prompt(const StrategyRegistry& registry, std::string_view strategy, const Document& doc,
                          const Tokenizer& tokenizer) {
    return render_prompt(registry.get(strategy), doc, tokenizer);
}

void validate(const StrategyEnsemble& e) {
    if (e.members.empty()) fail(ErrorCode::EmptyEnsemble, "strategy ensemble has no members");
    double sum = 0.0;
    for (const auto& [name, w] : e.members) {
        if (!(w > 0.0)) fail(ErrorCode::InvalidArgument, "ensemble weight for " + name + " must be > 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(ErrorCode::InvalidArgument, "ensemble weights sum to " + std::to_string(sum));
}

json to_json(const StrategyEnsemble& e) {
    json members = json::array();
    for (const auto& [name, w] : e.members) members.push_back({name, w});
    return {{"members", members}, {"seed", e.seed}};
}

StrategyEnsemble ensemble_from_json(const json& j) {
    try {
        StrategyEnsemble e;
        const json& m = j.at("members");
        if (m.is_object()) {
            for (const auto& [name, w] : m.items()) e.members.emplace_back(name, w.get<double>());
        } else {
            for (const auto& pair : m) e.members.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
        }
        e.seed = j.value("seed", std::uint64_t{0});
        validate(e);
        return e;
    } catch (const json::exception& ex) {
        fail(ErrorCode::SchemaViolation, std::string("bad ensemble: ") + ex.what());
    }
}

const std::string& assign_strategy(const StrategyEnsemble& e, std::string_view doc_id) {
    const double u = unit_interval(keyed_hash64(e.seed, doc_id));
    double cum = 0.0;
    for (const auto& [name, w] : e.members) {
        cum += w;
        if (u < cum) return name;
    }
    return e.members.back().first;
}

std::vector<StrategyAssignment> assign_strategies(const StrategyEnsemble& e, const std::vector<Document>& documents) {
    validate(e);
    std::vector<StrategyAssignment> out;
    out.reserve(documents.size());
    for (const auto& d : documents) out.push_back({d.id, assign_strategy(e, d.id)});
    return out;
}

}  // namespace synthpipe
