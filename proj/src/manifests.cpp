#include "synthpipe/manifests.hpp"

#include <cmath>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"

namespace synthpipe {

using nlohmann::json;

json to_json(const ExperimentManifest& m) {
    json j = {{"experiment_id", m.experiment_id},
              {"mixture_spec", to_json(m.mixture_spec)},
              {"requires_ensemble", m.requires_ensemble},
              {"model_scale", m.model_scale},
              {"train_hparams", m.train_hparams},
              {"eval_protocol", m.eval_protocol}};
    j["strategy_ensemble"] = m.strategy_ensemble ? to_json(*m.strategy_ensemble) : json(nullptr);
    j["backend_id"] = m.backend_id ? json(*m.backend_id) : json(nullptr);
    return j;
}

ExperimentManifest manifest_from_json(const json& j) {
    try {
        ExperimentManifest m;
        m.experiment_id = j.at("experiment_id").get<std::string>();
        m.mixture_spec = mixture_spec_from_json(j.at("mixture_spec"));
        if (auto it = j.find("strategy_ensemble"); it != j.end() && !it->is_null())
            m.strategy_ensemble = ensemble_from_json(*it);
        m.requires_ensemble = j.value("requires_ensemble", false);
        if (auto it = j.find("backend_id"); it != j.end() && !it->is_null()) m.backend_id = it->get<std::string>();
        m.model_scale = j.value("model_scale", std::string());
        m.train_hparams = j.value("train_hparams", json::object());
        m.eval_protocol = j.value("eval_protocol", json::object());
        return m;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("bad manifest: ") + e.what());
    }
}

ExperimentManifest load_manifest(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaViolation, path.string() + " is not valid JSON");
    return manifest_from_json(j);
}

const std::vector<std::string>& eval_tasks() {
    static const std::vector<std::string> tasks = {"ARC(C)", "ARC(E)", "BoolQ",  "COPA",   "CSQA",
                                                   "Hella.", "MMLU",   "OBQA",   "PIQA",   "RACE-H",
                                                   "RACE-M", "SIQA",   "SciQ",   "Wino."};
    return tasks;
}

namespace {

constexpr double kAblationBudget = 20e9;

json train_hparams(std::string_view scale) {
    const bool small = scale == "1b";
    return {{"optimizer", "AdamW"},
            {"beta1", 0.9},
            {"beta2", 0.95},
            {"learning_rate", 5e-4},
            {"weight_decay", 1e-7},
            {"lr_warmup", "linear"},
            {"warmup_steps", small ? 4000 : 16000},
            {"batch_size", 512},
            {"context_length", 2048},
            {"architecture", scale == "8b" ? "llama-3.1" : "llama-3.2"},
            {"parallelism", "fsdp"}};
}

json eval_protocol() {
    return {{"tasks", eval_tasks()},
            {"task_count", eval_tasks().size()},
            {"form", "cloze"},
            {"shots", {0, 5}},
            {"aggregate", "mean over 0-shot and 5-shot"}};
}

struct Builder {
    double scale;

    ExperimentManifest make(std::string id, std::vector<MixtureComponent> comps, double budget,
                            RepetitionPolicy rep, std::string model_scale = "1b") const {
        ExperimentManifest m;
        m.experiment_id = std::move(id);
        m.mixture_spec.components = std::move(comps);
        m.mixture_spec.total_token_budget = std::max<std::int64_t>(1, std::llround(budget * scale));
        m.mixture_spec.repetition = rep;
        m.model_scale = model_scale;
        m.train_hparams = train_hparams(model_scale);
        m.eval_protocol = eval_protocol();
        return m;
    }
};

StrategyEnsemble single(std::string strategy) { return StrategyEnsemble{{{std::move(strategy), 1.0}}, 0}; }

constexpr const char* kDefaultRephraser = "llama-3.1-8b";

}  // namespace

std::vector<ExperimentManifest> builtin_manifests(double scale_factor) {
    if (!(scale_factor > 0.0 && scale_factor <= 1.0))
        fail(ErrorCode::InvalidArgument, "scale_factor must be in (0, 1], got " + std::to_string(scale_factor));
    const Builder b{scale_factor};
    const auto forbid = RepetitionPolicy::forbid();
    std::vector<ExperimentManifest> out;

    for (auto [scale, budget] : {std::pair{"1b", 1e12}, {"3b", 180e9}, {"8b", 180e9}}) {
        auto m = b.make(std::string("hero_") + scale, {{"web", 0.6}, {"synth", 0.4}}, budget, forbid, scale);
        m.requires_ensemble = true;
        out.push_back(std::move(m));
    }

    {
        auto m = b.make("rq1_summary", {{"hq_web", 0.5}, {"summary_synth", 0.5}}, kAblationBudget, forbid);
        m.strategy_ensemble = single("summarize");
        m.backend_id = kDefaultRephraser;
        out.push_back(std::move(m));
        // The generator-driven corpus is repeated when it runs short.
        out.push_back(b.make("rq1_cosmopedia_proxy", {{"hq_web", 0.5}, {"cosmopedia", 0.5}}, kAblationBudget,
                             RepetitionPolicy::allow_up_to(4.0)));
    }

    out.push_back(b.make("rq2_full", {{"rpj_full", 1.0}}, kAblationBudget, forbid));
    out.push_back(b.make("rq2_repeat2x", {{"rpj_half", 1.0}}, kAblationBudget, RepetitionPolicy::allow_up_to(2.0)));
    {
        auto m = b.make("rq2_continuation", {{"rpj_half", 0.5}, {"rpj_half_continuation", 0.5}}, kAblationBudget,
                        RepetitionPolicy::allow_up_to(4.0));
        m.strategy_ensemble = single("continue");
        m.backend_id = kDefaultRephraser;
        out.push_back(std::move(m));
    }

    for (auto [id, other, synth] : {std::tuple{"rq3_hq_synth_plus_hq", "hq_synth", true},
                                    {"rq3_lq_synth_plus_hq", "lq_synth", true},
                                    {"rq3_lq_plus_hq", "lq_web", false}}) {
        auto m = b.make(id, {{"hq_web", 0.5}, {other, 0.5}}, kAblationBudget, forbid);
        if (synth) {
            m.strategy_ensemble = single("qa_rephrase");
            m.backend_id = kDefaultRephraser;
        }
        out.push_back(std::move(m));
    }

    out.push_back(b.make("rq4_base", {{"rpj", 1.0}}, kAblationBudget, forbid));
    for (int pct : {10, 20, 50}) {
        auto m = b.make("rq4_" + std::to_string(pct), {{"rpj", 1.0}}, kAblationBudget,
                        RepetitionPolicy::allow_up_to(4.0));
        m.mixture_spec.upsample = UpsampleSpec{"conversational", pct / 100.0};
        out.push_back(std::move(m));
    }

    auto backend_swap = [&](std::string id, std::string backend) {
        auto m = b.make(std::move(id), {{"hq_web", 0.5}, {"hq_synth_" + backend, 0.5}}, kAblationBudget, forbid);
        m.strategy_ensemble = single("qa_rephrase");
        m.backend_id = std::move(backend);
        return m;
    };
    out.push_back(backend_swap("rq6_olmo", "olmo-2-7b"));
    out.push_back(backend_swap("rq6_phi", "phi-4-14b"));
    out.push_back(backend_swap("rq6_mistral", "mistral-7b-v0.3"));
    out.push_back(backend_swap("rq6_llama", "llama-3.1-8b"));
    out.push_back(backend_swap("rq7_1b", "llama-3.2-1b"));
    out.push_back(backend_swap("rq7_3b", "llama-3.2-3b"));
    out.push_back(backend_swap("rq7_8b", "llama-3.1-8b"));
    return out;
}

ExperimentManifest builtin_manifest(std::string_view experiment_id, double scale_factor) {
    for (auto& m : builtin_manifests(scale_factor))
        if (m.experiment_id == experiment_id) return m;
    fail(ErrorCode::InvalidArgument, "unknown experiment id '" + std::string(experiment_id) + "'");
}

ManifestEnvironment environment_from_json(const json& j) {
    try {
        ManifestEnvironment env;
        const json corpora = j.value("corpora", json::object());
        const json strategies = j.value("strategies", json::array());
        const json backends = j.value("backends", json::array());
        for (const auto& [name, tokens] : corpora.items())
            env.corpus_tokens[name] = tokens.is_number_integer() ? tokens.get<std::int64_t>()
                                                                 : std::llround(tokens.get<double>());
        for (const auto& s : strategies) env.strategies.insert(s.get<std::string>());
        for (const auto& s : backends) env.backends.insert(s.get<std::string>());
        return env;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("bad environment: ") + e.what());
    }
}

json to_json(const ManifestEnvironment& env) {
    json corpora = json::object();
    for (const auto& [k, v] : env.corpus_tokens) corpora[k] = v;
    return {{"corpora", corpora},
            {"strategies", std::vector<std::string>(env.strategies.begin(), env.strategies.end())},
            {"backends", std::vector<std::string>(env.backends.begin(), env.backends.end())}};
}

std::string_view to_string(FindingKind kind) {
    switch (kind) {
        case FindingKind::unresolved_corpus: return "unresolved_corpus";
        case FindingKind::unresolved_strategy: return "unresolved_strategy";
        case FindingKind::unresolved_backend: return "unresolved_backend";
        case FindingKind::missing_ensemble: return "missing_ensemble";
        case FindingKind::ratio_sum: return "ratio_sum";
        case FindingKind::budget_conflict: return "budget_conflict";
        case FindingKind::invalid_value: return "invalid_value";
    }
    return "unknown";
}

json to_json(const ManifestFinding& f) {
    json j = {{"kind", to_string(f.kind)}, {"subject", f.subject}, {"message", f.message}};
    if (f.required_tokens) j["required_tokens"] = *f.required_tokens;
    if (f.available_tokens) j["available_tokens"] = *f.available_tokens;
    return j;
}

std::vector<ManifestFinding> validate_manifest(const ExperimentManifest& m, const ManifestEnvironment& env) {
    std::vector<ManifestFinding> out;
    const auto& spec = m.mixture_spec;
    const double budget = static_cast<double>(spec.total_token_budget);

    if (spec.total_token_budget <= 0)
        out.push_back({FindingKind::invalid_value, "total_token_budget", "budget must be positive", {}, {}});
    if (spec.components.empty())
        out.push_back({FindingKind::invalid_value, "components", "mixture has no components", {}, {}});
    if (spec.repetition.allow && !(spec.repetition.max_epochs > 0.0))
        out.push_back({FindingKind::invalid_value, "repetition", "max_epochs must be positive", {}, {}});
    if (spec.upsample && !(spec.upsample->target_fraction >= 0.0 && spec.upsample->target_fraction <= 1.0))
        out.push_back({FindingKind::invalid_value, "upsample", "target_fraction must be in [0, 1]", {}, {}});

    double sum = 0.0;
    for (const auto& c : spec.components) {
        sum += c.weight;
        if (!(c.weight > 0.0))
            out.push_back({FindingKind::invalid_value, c.corpus, "component weight must be positive", {}, {}});
        auto it = env.corpus_tokens.find(c.corpus);
        if (it == env.corpus_tokens.end()) {
            out.push_back({FindingKind::unresolved_corpus, c.corpus, "corpus '" + c.corpus + "' is not available",
                           {}, {}});
            continue;
        }
        const double demanded = c.weight * budget;
        const double passes = spec.repetition.allow ? spec.repetition.max_epochs : 1.0;
        const auto required = static_cast<std::int64_t>(std::ceil(demanded / passes - 1e-6));
        if (required > it->second) {
            out.push_back({FindingKind::budget_conflict, c.corpus,
                           "corpus '" + c.corpus + "' has " + std::to_string(it->second) + " tokens; " +
                               std::to_string(required) + " are needed " +
                               (spec.repetition.allow ? "at " + format_fixed(passes, 2) + " max epochs"
                                                      : std::string("without repetition")),
                           required, it->second});
        }
    }
    if (!spec.components.empty() && std::abs(sum - 1.0) > 1e-6)
        out.push_back({FindingKind::ratio_sum, "components", "weights sum to " + format_fixed(sum, 6), {}, {}});

    if (m.strategy_ensemble) {
        double wsum = 0.0;
        for (const auto& [name, w] : m.strategy_ensemble->members) {
            wsum += w;
            if (!env.strategies.contains(name))
                out.push_back({FindingKind::unresolved_strategy, name, "strategy '" + name + "' is not registered",
                               {}, {}});
        }
        if (std::abs(wsum - 1.0) > 1e-6)
            out.push_back({FindingKind::ratio_sum, "strategy_ensemble",
                           "ensemble weights sum to " + format_fixed(wsum, 6), {}, {}});
    } else if (m.requires_ensemble) {
        out.push_back({FindingKind::missing_ensemble, "strategy_ensemble",
                       "this experiment needs a user-supplied strategy ensemble", {}, {}});
    }
    if (m.backend_id && !env.backends.contains(*m.backend_id))
        out.push_back({FindingKind::unresolved_backend, *m.backend_id,
                       "backend '" + *m.backend_id + "' is not configured", {}, {}});
    return out;
}

}  // namespace synthpipe
