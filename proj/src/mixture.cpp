#include "synthpipe/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/hashing.hpp"
#include "synthpipe/random.hpp"

namespace synthpipe {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const MixtureSpec& spec) {
    if (spec.components.empty()) fail(ErrorCode::InvalidArgument, "mixture has no components");
    if (spec.total_token_budget <= 0) fail(ErrorCode::InvalidArgument, "total_token_budget must be > 0");
    double sum = 0.0;
    for (const auto& c : spec.components) {
        if (!(c.weight > 0.0)) fail(ErrorCode::InvalidArgument, "weight of " + c.corpus + " must be > 0");
        sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail(ErrorCode::InvalidArgument, "mixture weights sum to " + std::to_string(sum));
    if (spec.repetition.allow && !(spec.repetition.max_epochs > 0.0))
        fail(ErrorCode::InvalidArgument, "max_epochs must be > 0");
    if (spec.upsample) {
        const double t = spec.upsample->target_fraction;
        if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::InvalidArgument, "upsample target_fraction must be in [0, 1]");
    }
}

json to_json(const MixtureSpec& spec) {
    json comps = json::array();
    for (const auto& c : spec.components) comps.push_back({{"corpus", c.corpus}, {"weight", c.weight}});
    json j = {{"components", comps}, {"total_token_budget", spec.total_token_budget}, {"seed", spec.seed}};
    j["repetition"] = spec.repetition.allow ? json{{"allow", spec.repetition.max_epochs}} : json("forbid");
    if (spec.upsample)
        j["upsample"] = {{"predicate", spec.upsample->predicate}, {"target_fraction", spec.upsample->target_fraction}};
    return j;
}

MixtureSpec mixture_spec_from_json(const json& j) {
    try {
        MixtureSpec spec;
        const json& comps = j.at("components");
        if (comps.is_object()) {
            for (const auto& [name, w] : comps.items()) spec.components.push_back({name, w.get<double>()});
        } else {
            for (const auto& c : comps)
                spec.components.push_back({c.at("corpus").get<std::string>(), c.at("weight").get<double>()});
        }
        // Budgets may be written in scientific notation (1.8e11).
        const json& budget = j.at("total_token_budget");
        spec.total_token_budget =
            budget.is_number_integer() ? budget.get<std::int64_t>() : std::llround(budget.get<double>());
        spec.seed = j.value("seed", std::uint64_t{0});
        if (auto it = j.find("repetition"); it != j.end()) {
            if (it->is_string()) {
                if (it->get<std::string>() != "forbid")
                    fail(ErrorCode::SchemaViolation, "repetition must be \"forbid\" or {\"allow\": max_epochs}");
            } else {
                spec.repetition = RepetitionPolicy::allow_up_to(it->at("allow").get<double>());
            }
        }
        if (auto it = j.find("upsample"); it != j.end() && !it->is_null()) {
            spec.upsample = UpsampleSpec{it->value("predicate", std::string("conversational")),
                                         it->at("target_fraction").get<double>()};
        }
        return spec;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("bad mixture spec: ") + e.what());
    }
}

const ComponentReport& MixtureReport::component(std::string_view corpus) const {
    for (const auto& c : components)
        if (c.corpus == corpus) return c;
    fail(ErrorCode::InvalidArgument, "no component " + std::string(corpus) + " in report");
}

json to_json(const MixtureReport& r) {
    json comps = json::array();
    for (const auto& c : r.components) {
        comps.push_back({{"corpus", c.corpus},
                         {"target_fraction", c.target_fraction},
                         {"target_tokens", c.target_tokens},
                         {"available_tokens", c.available_tokens},
                         {"realized_tokens", c.realized_tokens},
                         {"realized_fraction", c.realized_fraction},
                         {"epochs", c.epochs},
                         {"epochs_4dp", format_fixed(c.epochs, 4)},
                         {"docs", c.docs}});
    }
    json j = {{"components", comps},
              {"budget", r.budget},
              {"total_tokens", r.total_tokens},
              {"max_doc_tokens", r.max_doc_tokens},
              {"provenance_path", r.provenance_path}};
    if (r.upsample_fraction) j["upsample_fraction"] = *r.upsample_fraction;
    return j;
}

double epochs_required(std::int64_t available_tokens, std::int64_t demanded_tokens) {
    if (available_tokens <= 0) fail(ErrorCode::InvalidArgument, "available_tokens must be > 0");
    return static_cast<double>(demanded_tokens) / static_cast<double>(available_tokens);
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

namespace {

struct Draw {
    std::size_t doc_index;
    std::int64_t epoch;
};

std::uint64_t epoch_seed(std::uint64_t seed, std::string_view corpus, std::int64_t epoch) {
    return derive_seed(seed, "mixture/" + std::string(corpus) + "/epoch=" + std::to_string(epoch));
}

// Pulls documents in shuffled order until adding the next one would not bring
// the emitted total closer to `target`.
std::vector<Draw> draw_component(const CorpusHandle& corpus, std::string_view name, double target,
                                 const MixtureSpec& spec, std::int64_t& emitted) {
    std::vector<Draw> draws;
    const auto& docs = corpus.documents();
    if (docs.empty() || target <= 0.0) return draws;
    std::int64_t epoch = 0;
    auto order = seeded_permutation(docs.size(), epoch_seed(spec.seed, name, epoch));
    std::size_t pos = 0;
    for (;;) {
        const double need = target - static_cast<double>(emitted);
        if (need <= 0.0) break;
        if (pos == order.size()) {
            if (!spec.repetition.allow) break;
            ++epoch;
            order = seeded_permutation(docs.size(), epoch_seed(spec.seed, name, epoch));
            pos = 0;
        }
        const std::size_t idx = order[pos];
        const auto tokens = docs[idx].token_count;
        if (static_cast<double>(tokens) >= 2.0 * need) break;
        draws.push_back({idx, epoch});
        emitted += tokens;
        ++pos;
    }
    return draws;
}

}  // namespace

MixtureResult build_mixture(const MixtureSpec& spec, const CorpusMap& sources) {
    validate(spec);
    const double budget = static_cast<double>(spec.total_token_budget);

    std::vector<const CorpusHandle*> corpora;
    for (const auto& c : spec.components) {
        auto it = sources.find(c.corpus);
        if (it == sources.end()) fail(ErrorCode::InvalidArgument, "mixture component " + c.corpus + " is not loaded");
        const CorpusHandle& h = it->second;
        const double demanded = c.weight * budget;
        if (h.total_tokens <= 0) fail(ErrorCode::InsufficientTokens, "component " + c.corpus + " is empty");
        const double ratio = demanded / static_cast<double>(h.total_tokens);
        if (!spec.repetition.allow && ratio > 1.0 + 1e-12) {
            fail(ErrorCode::InsufficientTokens, "component " + c.corpus + " needs " + format_fixed(demanded, 0) +
                                                    " tokens but has " + std::to_string(h.total_tokens));
        }
        if (spec.repetition.allow && ratio > spec.repetition.max_epochs + 1e-9) {
            fail(ErrorCode::EpochCapExceeded, "component " + c.corpus + " needs " + format_fixed(ratio, 4) +
                                                  " epochs, cap is " + format_fixed(spec.repetition.max_epochs, 4));
        }
        corpora.push_back(&h);
    }

    // Quotas carry over: component i aims at the cumulative target through i,
    // so rounding errors do not accumulate across components.
    std::vector<std::vector<Draw>> draws(spec.components.size());
    std::vector<std::int64_t> realized(spec.components.size(), 0);
    std::int64_t emitted_total = 0;
    double cum_weight = 0.0;
    for (std::size_t i = 0; i < spec.components.size(); ++i) {
        cum_weight += spec.components[i].weight;
        const double cum_target = i + 1 == spec.components.size() ? budget : cum_weight * budget;
        std::int64_t emitted = 0;
        draws[i] = draw_component(*corpora[i], spec.components[i].corpus, cum_target - static_cast<double>(emitted_total), spec, emitted);
        realized[i] = emitted;
        emitted_total += emitted;
    }

    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < draws.size(); ++i) slots.insert(slots.end(), draws[i].size(), i);
    seeded_shuffle(slots, derive_seed(spec.seed, "mixture/interleave"));

    std::vector<Document> out;
    out.reserve(slots.size());
    std::vector<ProvenanceEntry> provenance;
    provenance.reserve(slots.size());
    std::vector<std::size_t> cursor(draws.size(), 0);
    std::int64_t max_doc = 0;
    for (std::size_t s : slots) {
        const Draw& d = draws[s][cursor[s]++];
        const Document& src = corpora[s]->documents()[d.doc_index];
        Document doc = src;
        if (d.epoch > 0) doc.id += "@e" + std::to_string(d.epoch);
        max_doc = std::max(max_doc, doc.token_count);
        provenance.push_back({static_cast<std::int64_t>(out.size()), src.id, spec.components[s].corpus, d.epoch});
        out.push_back(std::move(doc));
    }

    MixtureReport report;
    report.budget = spec.total_token_budget;
    report.total_tokens = emitted_total;
    for (const auto* c : corpora) report.max_doc_tokens = std::max(report.max_doc_tokens, c->max_doc_tokens());
    for (std::size_t i = 0; i < spec.components.size(); ++i) {
        ComponentReport cr;
        cr.corpus = spec.components[i].corpus;
        cr.target_fraction = spec.components[i].weight;
        cr.target_tokens = spec.components[i].weight * budget;
        cr.available_tokens = corpora[i]->total_tokens;
        cr.realized_tokens = realized[i];
        cr.realized_fraction = emitted_total > 0 ? static_cast<double>(realized[i]) / static_cast<double>(emitted_total) : 0.0;
        cr.epochs = epochs_required(cr.available_tokens, realized[i]);
        cr.docs = static_cast<std::int64_t>(draws[i].size());
        report.components.push_back(cr);
    }

    MixtureResult result;
    result.corpus = make_corpus("mixture", std::move(out));
    result.report = std::move(report);
    result.provenance = std::move(provenance);
    return result;
}

MixtureResult upsample_to_fraction(const MixtureSpec& spec, const CorpusMap& sources, const VerdictMap& verdicts) {
    validate(spec);
    if (!spec.upsample) fail(ErrorCode::InvalidArgument, "mixture spec has no upsample target");
    const double target = spec.upsample->target_fraction;

    std::vector<Document> positive;
    std::vector<Document> negative;
    std::string base;
    for (const auto& c : spec.components) {
        auto it = sources.find(c.corpus);
        if (it == sources.end()) fail(ErrorCode::InvalidArgument, "mixture component " + c.corpus + " is not loaded");
        base += (base.empty() ? "" : "+") + c.corpus;
        for (const auto& d : it->second.documents()) {
            auto v = verdicts.find(d.id);
            if (v == verdicts.end()) fail(ErrorCode::MissingLabels, "no verdict for document " + d.id);
            (v->second == 1 ? positive : negative).push_back(d);
        }
    }
    const std::string pos_name = base + ":" + spec.upsample->predicate;
    const std::string neg_name = base + ":other";
    const double budget = static_cast<double>(spec.total_token_budget);

    CorpusMap pools;
    pools.emplace(pos_name, make_corpus(pos_name, std::move(positive)));
    pools.emplace(neg_name, make_corpus(neg_name, std::move(negative)));
    const auto& pos_pool = pools.at(pos_name);
    const auto& neg_pool = pools.at(neg_name);

    if (target > 0.0) {
        const double demanded = target * budget;
        const double cap = spec.repetition.allow ? spec.repetition.max_epochs : 1.0;
        if (pos_pool.total_tokens == 0 || demanded > cap * static_cast<double>(pos_pool.total_tokens) + 1e-9) {
            fail(ErrorCode::InsufficientLabeledTokens,
                 "need " + format_fixed(demanded, 0) + " " + spec.upsample->predicate + " tokens, pool has " +
                     std::to_string(pos_pool.total_tokens) + " (max epochs " + format_fixed(cap, 2) + ")");
        }
    }

    MixtureSpec inner;
    inner.total_token_budget = spec.total_token_budget;
    inner.seed = spec.seed;
    inner.repetition = spec.repetition;
    if (target > 0.0) inner.components.push_back({pos_name, target});
    if (target < 1.0) inner.components.push_back({neg_name, 1.0 - target});
    if (target < 1.0 && neg_pool.total_tokens == 0)
        fail(ErrorCode::InsufficientTokens, "no non-" + spec.upsample->predicate + " documents to fill the remainder");

    MixtureResult result = build_mixture(inner, pools);
    const std::int64_t pos_tokens =
        target > 0.0 ? result.report.component(pos_name).realized_tokens : std::int64_t{0};
    result.report.upsample_fraction =
        result.report.total_tokens > 0 ? static_cast<double>(pos_tokens) / static_cast<double>(result.report.total_tokens)
                                       : 0.0;
    return result;
}

void write_mixture(MixtureResult& result, const fs::path& out_dir, std::int64_t max_tokens_per_shard, bool gzip) {
    ShardWriteOptions opts;
    opts.name = result.corpus.name;
    opts.gzip = gzip;
    write_shards(result.corpus.documents(), out_dir, std::max(max_tokens_per_shard, result.corpus.max_doc_tokens()),
                 opts);
    std::string prov;
    for (const auto& p : result.provenance) {
        prov += json{{"out_position", p.out_position}, {"doc_id", p.doc_id}, {"corpus", p.corpus}, {"epoch", p.epoch}}
                    .dump() +
                '\n';
    }
    write_file_atomic(out_dir / "provenance.jsonl", prov);
    result.report.provenance_path = "provenance.jsonl";
    write_file_atomic(out_dir / "report.json", to_json(result.report).dump(2) + "\n");
}

// ---- experiment corpora ------------------------------------------------------

namespace {

MixtureResult named(MixtureResult r, std::string name) {
    std::vector<Document> docs = r.corpus.documents();
    r.corpus = make_corpus(std::move(name), std::move(docs));
    return r;
}

}  // namespace

Rq2Corpora build_rq2_corpora(const CorpusHandle& source, std::int64_t budget, GenerationEngine& engine,
                             const StrategyRegistry& registry, const fs::path& work_dir, const Rq2Options& options) {
    if (source.total_tokens < budget) {
        fail(ErrorCode::InsufficientTokens, "source " + source.name + " has " + std::to_string(source.total_tokens) +
                                                " tokens, budget is " + std::to_string(budget));
    }
    Rq2Corpora out;
    CorpusMap sources{{source.name, source}};

    MixtureSpec full{{{source.name, 1.0}}, budget, options.seed, RepetitionPolicy::forbid(), std::nullopt};
    out.full = named(build_mixture(full, sources), "rq2_full");

    out.kept_half = build_half_corpus(source, options.keep, engine.tokenizer());
    const CorpusHandle& half = out.kept_half.corpus;
    sources.emplace(half.name, half);

    const auto repeat = RepetitionPolicy::allow_up_to(options.max_epochs);
    MixtureSpec rep{{{half.name, 1.0}}, budget, options.seed, repeat, std::nullopt};
    out.repeat2x = named(build_mixture(rep, sources), "rq2_repeat2x");

    SynthesisOptions synth_opts;
    synth_opts.name = half.name + "+continuation";
    synth_opts.docs_per_shard = options.docs_per_shard;
    const StrategyEnsemble continuation{{{"continue", 1.0}}, options.seed};
    out.continuations =
        synthesize_corpus(half, registry, continuation, engine, work_dir / "continuations", synth_opts);
    sources.emplace(out.continuations.corpus.name, out.continuations.corpus);

    MixtureSpec ext{{{half.name, 0.5}, {out.continuations.corpus.name, 0.5}}, budget, options.seed, repeat,
                    std::nullopt};
    out.synthetic_extension = named(build_mixture(ext, sources), "rq2_synthetic_extension");
    return out;
}

namespace {

void require_tier(const CorpusHandle& c, QualityTier tier) {
    for (const auto& d : c.documents()) {
        if (d.quality_tier != tier) {
            fail(ErrorCode::SchemaViolation, "document " + d.id + " in " + c.name + " has tier " +
                                                 std::string(to_string(d.quality_tier)) + ", expected " +
                                                 std::string(to_string(tier)));
        }
    }
}

// 50:50 mix whose first half is exactly all of `web`.
MixtureResult half_and_half(const CorpusHandle& web, const CorpusHandle& other, std::int64_t budget,
                            const Rq3Options& options, std::string name) {
    const double w = std::min(1.0, static_cast<double>(web.total_tokens) / static_cast<double>(budget));
    CorpusMap sources{{web.name, web}, {other.name, other}};
    MixtureSpec spec{{{web.name, w}, {other.name, 1.0 - w}},
                     budget,
                     options.seed,
                     RepetitionPolicy::allow_up_to(options.max_epochs),
                     std::nullopt};
    return named(build_mixture(spec, sources), std::move(name));
}

}  // namespace

Rq3Corpora build_rq3_corpora(const CorpusHandle& hq_corpus, const CorpusHandle& lq_corpus, GenerationEngine& engine,
                             const StrategyRegistry& registry, std::int64_t budget, const fs::path& work_dir,
                             const Rq3Options& options) {
    require_tier(hq_corpus, QualityTier::hq);
    require_tier(lq_corpus, QualityTier::lq);
    const std::int64_t half_budget = budget / 2;
    Rq3Corpora out;

    auto select = [&](const CorpusHandle& c, std::string name) {
        MixtureSpec spec{{{c.name, 1.0}}, half_budget, options.seed, RepetitionPolicy::forbid(), std::nullopt};
        MixtureResult r = build_mixture(spec, CorpusMap{{c.name, c}});
        std::vector<Document> docs = r.corpus.documents();
        return make_corpus(std::move(name), std::move(docs));
    };
    out.hq_web = select(hq_corpus, "hq_web");
    out.lq_web = select(lq_corpus, "lq_web");

    SynthesisOptions so;
    so.docs_per_shard = options.docs_per_shard;
    so.name = "hq_synth";
    out.hq_synth = synthesize_corpus(out.hq_web, registry, options.ensemble, engine, work_dir / "hq_synth", so);
    so.name = "lq_synth";
    out.lq_synth = synthesize_corpus(out.lq_web, registry, options.ensemble, engine, work_dir / "lq_synth", so);

    out.hq_synth_plus_hq = half_and_half(out.hq_web, out.hq_synth.corpus, budget, options, "rq3_hq_synth_plus_hq");
    out.lq_synth_plus_hq = half_and_half(out.hq_web, out.lq_synth.corpus, budget, options, "rq3_lq_synth_plus_hq");
    out.lq_plus_hq = half_and_half(out.hq_web, out.lq_web, budget, options, "rq3_lq_plus_hq");
    return out;
}

}  // namespace synthpipe
