#include "synthpipe/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <set>
#include <sstream>

#include "synthpipe/analysis.hpp"
#include "synthpipe/corpus_io.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/generation.hpp"
#include "synthpipe/hashing.hpp"
#include "synthpipe/manifests.hpp"
#include "synthpipe/mixture.hpp"
#include "synthpipe/prompts.hpp"
#include "synthpipe/segmentation.hpp"
#include "synthpipe/style.hpp"

namespace synthpipe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { error, warn, info, debug };

struct Context {
    std::uint64_t seed = 0;
    std::string log_level = "warn";
    unsigned jobs = 0;
    std::ostream& out;
    std::ostream& err;

    LogLevel level() const {
        if (log_level == "error") return LogLevel::error;
        if (log_level == "info") return LogLevel::info;
        if (log_level == "debug") return LogLevel::debug;
        return LogLevel::warn;
    }
    void log(LogLevel lvl, std::string_view event, json fields = json::object()) const {
        if (lvl > level()) return;
        static constexpr const char* names[] = {"error", "warn", "info", "debug"};
        fields["level"] = names[static_cast<int>(lvl)];
        fields["event"] = event;
        err << fields.dump() << '\n';
    }
};

json read_json(const fs::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaViolation, path.string() + " is not valid JSON");
    return j;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, j.dump(2) + "\n");
}

void emit(const Context& ctx, const std::string& out_path, const json& j) {
    if (out_path.empty() || out_path == "-") ctx.out << j.dump(2) << '\n';
    else write_json(out_path, j);
}

std::optional<QualityTier> tier_option(const std::string& s) {
    if (s.empty()) return std::nullopt;
    auto t = parse_quality_tier(s);
    if (!t) fail(ErrorCode::InvalidArgument, "unknown quality tier '" + s + "'");
    return t;
}

CorpusHandle load_corpus(const Context& ctx, const std::string& spec, const std::string& tier = {}) {
    // "name=path" renames the corpus; a bare path keeps the stored name.
    IngestOptions opts;
    opts.jobs = ctx.jobs;
    opts.quality_tier = tier_option(tier);
    std::string path = spec;
    if (auto eq = spec.find('='); eq != std::string::npos && eq > 0) {
        opts.name = spec.substr(0, eq);
        path = spec.substr(eq + 1);
    }
    CorpusHandle c = open_corpus(path, reference_tokenizer(), opts);
    ctx.log(LogLevel::info, "corpus_loaded",
            {{"name", c.name}, {"docs", c.doc_count}, {"tokens", c.total_tokens}, {"skipped", c.skipped_lines}});
    return c;
}

StrategyRegistry make_registry(const std::string& pack) {
    StrategyRegistry reg = builtin_registry();
    if (!pack.empty()) reg.merge(StrategyRegistry::load(pack));
    return reg;
}

BackendConfig make_backend_config(const Context& ctx, const std::string& path) {
    BackendConfig cfg;
    bool has_seed = false;
    if (!path.empty()) {
        const json j = read_json(path);
        cfg = backend_config_from_json(j);
        has_seed = j.contains("seed");
    }
    if (!has_seed) cfg.seed = derive_seed(ctx.seed, "generation");
    validate(cfg);
    return cfg;
}

std::unique_ptr<GenerationEngine> make_engine(const Context& ctx, const std::string& path) {
    auto engine = std::make_unique<GenerationEngine>(make_backend_config(ctx, path));
    if (ctx.jobs > 0) engine->set_worker_cap(static_cast<int>(ctx.jobs));
    return engine;
}

StrategyEnsemble make_ensemble(const Context& ctx, const std::string& path, const std::string& strategy,
                               const std::string& fallback) {
    StrategyEnsemble e;
    if (!path.empty()) {
        const json j = read_json(path);
        e = ensemble_from_json(j);
        if (!j.contains("seed")) e.seed = derive_seed(ctx.seed, "prompts");
        return e;
    }
    e.members = {{strategy.empty() ? fallback : strategy, 1.0}};
    e.seed = derive_seed(ctx.seed, "prompts");
    return e;
}

KeepHalf parse_keep(const std::string& s) {
    if (s == "first") return KeepHalf::first;
    if (s == "second") return KeepHalf::second;
    fail(ErrorCode::InvalidArgument, "--keep must be first or second, got '" + s + "'");
}

json half_summary(const HalfCorpus& h) {
    return {{"name", h.corpus.name},
            {"docs", h.corpus.doc_count},
            {"tokens", h.corpus.total_tokens},
            {"dropped", h.dropped},
            {"splittable_tokens", h.splittable_tokens}};
}

std::int64_t shard_limit(std::int64_t requested, const CorpusHandle& c) {
    return std::max(requested, c.max_doc_tokens());
}

// Share of synthetic documents in `mix` whose source document is in `allowed`.
json provenance_closure(const CorpusHandle& mix, const CorpusHandle& allowed) {
    std::set<std::string, std::less<>> ids;
    for (const auto& d : allowed.documents()) ids.insert(d.id);
    std::int64_t synthetic = 0, closed = 0;
    for (const auto& d : mix.documents()) {
        if (d.source != "synthetic") continue;
        ++synthetic;
        auto it = d.meta.find("source_doc_id");
        if (it != d.meta.end() && ids.contains(it->second)) ++closed;
    }
    return {{"synthetic_docs", synthetic},
            {"closed", closed},
            {"fraction", synthetic > 0 ? static_cast<double>(closed) / static_cast<double>(synthetic) : 1.0}};
}

VerdictMap read_verdicts(const fs::path& path) {
    VerdictMap v;
    const std::string body = read_file(path);
    for (auto line : split_lines(body)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("doc_id") || !j.contains("label"))
            fail(ErrorCode::SchemaViolation, "bad verdict line in " + path.string());
        v[j["doc_id"].get<std::string>()] = j["label"].get<int>();
    }
    return v;
}

std::string verdict_lines(const std::vector<StyleVerdict>& verdicts) {
    std::string s;
    for (const auto& v : verdicts)
        s += json{{"doc_id", v.doc_id}, {"label", v.label}, {"method", to_string(v.method)}}.dump() + "\n";
    return s;
}

std::vector<std::int64_t> parse_edges(const std::string& s) {
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::llround(std::stod(item)));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "bad window edge '" + item + "'");
        }
    }
    return out;
}

// ---- option bags -----------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> inputs;
    std::string out, name = "corpus", tier, source;
    bool strict = false, gzip = false;
    std::int64_t max_shard_tokens = 1'000'000;
};
struct SplitArgs {
    std::string corpus, out, keep = "second", name;
    std::int64_t max_shard_tokens = 1'000'000;
};
struct SynthArgs {
    std::string corpus, out, ensemble, strategy, backend, strategies, name;
    std::size_t docs_per_shard = 256;
};
struct StyleArgs {
    std::string corpus, method = "heuristic", backend, out;
    std::int64_t sample = 10'000;
};
struct MixArgs {
    std::string spec, out, verdicts, style_method = "heuristic", backend;
    std::vector<std::string> corpora;
    std::int64_t max_shard_tokens = 1'000'000;
    bool gzip = false;
};
struct Rq2Args {
    std::string corpus, out, keep = "second", backend, strategies;
    std::int64_t budget = 0, max_shard_tokens = 1'000'000;
    double max_epochs = 4.0;
    std::size_t docs_per_shard = 256;
};
struct Rq3Args {
    std::string hq, lq, out, ensemble, strategy, backend, strategies;
    std::int64_t budget = 0, max_shard_tokens = 1'000'000;
    double max_epochs = 4.0;
    std::size_t docs_per_shard = 256;
};
struct ManifestArgs {
    std::string id, ensemble, out, manifest, env, strategies;
    std::vector<std::string> corpora, backends;
    double scale = 1.0;
    bool all = false;
};
struct AnalyzeArgs {
    std::vector<std::string> inputs, deltas;
    std::string baseline, out, plot, edges, table_out;
};

// ---- handlers --------------------------------------------------------------

int cmd_ingest(const Context& ctx, const IngestArgs& a) {
    IngestOptions opts;
    opts.name = a.name;
    opts.quality_tier = tier_option(a.tier);
    if (!a.source.empty()) opts.default_source = a.source;
    opts.strict = a.strict;
    opts.jobs = ctx.jobs;
    std::vector<fs::path> paths(a.inputs.begin(), a.inputs.end());
    CorpusHandle c = ingest_jsonl(paths, reference_tokenizer(), opts);
    ShardWriteOptions wo;
    wo.name = c.name;
    wo.gzip = a.gzip;
    const ShardManifest m = write_shards(c.documents(), a.out, shard_limit(a.max_shard_tokens, c), wo);
    ctx.out << json{{"name", c.name},
                    {"docs", c.doc_count},
                    {"tokens", c.total_tokens},
                    {"skipped_lines", c.skipped_lines},
                    {"shards", m.shards.size()}}
                   .dump()
            << '\n';
    return 0;
}

int cmd_split(const Context& ctx, const SplitArgs& a) {
    CorpusHandle c = load_corpus(ctx, a.corpus);
    HalfCorpus h = build_half_corpus(c, parse_keep(a.keep));
    if (!a.name.empty()) {
        std::vector<Document> docs = h.corpus.documents();
        h.corpus = make_corpus(a.name, std::move(docs));
    }
    ShardWriteOptions wo;
    wo.name = h.corpus.name;
    write_shards(h.corpus.documents(), a.out, shard_limit(a.max_shard_tokens, h.corpus), wo);
    json report = half_summary(h);
    report["keep"] = a.keep;
    write_json(fs::path(a.out) / "split_report.json", report);
    ctx.out << report.dump() << '\n';
    return 0;
}

int cmd_synthesize(const Context& ctx, const SynthArgs& a) {
    CorpusHandle c = load_corpus(ctx, a.corpus);
    const StrategyRegistry reg = make_registry(a.strategies);
    const StrategyEnsemble ens = make_ensemble(ctx, a.ensemble, a.strategy, "qa_rephrase");
    auto engine = make_engine(ctx, a.backend);
    SynthesisOptions so;
    so.name = a.name;
    so.docs_per_shard = a.docs_per_shard;
    const auto t0 = std::chrono::steady_clock::now();
    SynthesisResult r = synthesize_corpus(c, reg, ens, *engine, a.out, so);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    ctx.log(LogLevel::info, "synthesis_done",
            {{"wall_time_ms", ms}, {"shards_resumed", r.report.shards_resumed}, {"ok", r.report.ok}});
    ctx.out << to_json(r.report).dump() << '\n';
    return 0;
}

VerdictMap verdicts_for(const Context& ctx, const std::vector<const CorpusHandle*>& corpora,
                        const std::string& method, const std::string& backend) {
    const StyleMethod m = parse_style_method(method);
    std::unique_ptr<GenerationEngine> engine;
    if (m == StyleMethod::llm) engine = make_engine(ctx, backend);
    VerdictMap out;
    for (const auto* c : corpora)
        for (const auto& v : classify_batch(c->documents(), m, engine.get())) out[v.doc_id] = v.label;
    return out;
}

int cmd_style_audit(const Context& ctx, const StyleArgs& a) {
    CorpusHandle c = load_corpus(ctx, a.corpus);
    const StyleMethod m = parse_style_method(a.method);
    std::unique_ptr<GenerationEngine> engine;
    if (m == StyleMethod::llm) engine = make_engine(ctx, a.backend);
    const FractionEstimate e = estimate_fraction(c, m, a.sample, derive_seed(ctx.seed, "style"), engine.get());
    json j = to_json(e);
    j["corpus"] = c.name;
    emit(ctx, a.out, j);
    return 0;
}

int cmd_style_label(const Context& ctx, const StyleArgs& a) {
    CorpusHandle c = load_corpus(ctx, a.corpus);
    const StyleMethod m = parse_style_method(a.method);
    std::unique_ptr<GenerationEngine> engine;
    if (m == StyleMethod::llm) engine = make_engine(ctx, a.backend);
    const std::string lines = verdict_lines(classify_batch(c.documents(), m, engine.get()));
    if (a.out.empty() || a.out == "-") ctx.out << lines;
    else write_file_atomic(a.out, lines);
    return 0;
}

int cmd_mix(const Context& ctx, const MixArgs& a) {
    const json j = read_json(a.spec);
    MixtureSpec spec = mixture_spec_from_json(j);
    if (!j.contains("seed")) spec.seed = ctx.seed;
    CorpusMap sources;
    for (const auto& s : a.corpora) {
        CorpusHandle c = load_corpus(ctx, s);
        std::string name = c.name;
        sources.insert_or_assign(std::move(name), std::move(c));
    }
    MixtureResult r;
    if (spec.upsample) {
        VerdictMap verdicts;
        if (!a.verdicts.empty()) {
            verdicts = read_verdicts(a.verdicts);
        } else {
            std::vector<const CorpusHandle*> comps;
            for (const auto& comp : spec.components)
                if (auto it = sources.find(comp.corpus); it != sources.end()) comps.push_back(&it->second);
            verdicts = verdicts_for(ctx, comps, a.style_method, a.backend);
        }
        r = upsample_to_fraction(spec, sources, verdicts);
    } else {
        r = build_mixture(spec, sources);
    }
    write_mixture(r, a.out, a.max_shard_tokens, a.gzip);
    ctx.out << to_json(r.report).dump() << '\n';
    return 0;
}

int cmd_rq2(const Context& ctx, const Rq2Args& a) {
    if (a.budget <= 0) fail(ErrorCode::InvalidArgument, "--budget must be > 0");
    CorpusHandle c = load_corpus(ctx, a.corpus);
    auto engine = make_engine(ctx, a.backend);
    const StrategyRegistry reg = make_registry(a.strategies);
    Rq2Options opts;
    opts.keep = parse_keep(a.keep);
    opts.seed = ctx.seed;
    opts.max_epochs = a.max_epochs;
    opts.docs_per_shard = a.docs_per_shard;
    const fs::path out = a.out;
    Rq2Corpora r = build_rq2_corpora(c, a.budget, *engine, reg, out, opts);

    ShardWriteOptions wo;
    wo.name = r.kept_half.corpus.name;
    write_shards(r.kept_half.corpus.documents(), out / "kept_half", shard_limit(a.max_shard_tokens, r.kept_half.corpus),
                 wo);
    write_mixture(r.full, out / "full", a.max_shard_tokens);
    write_mixture(r.repeat2x, out / "repeat2x", a.max_shard_tokens);
    write_mixture(r.synthetic_extension, out / "synthetic_extension", a.max_shard_tokens);

    json report = {{"budget", a.budget},
                   {"keep", a.keep},
                   {"kept_half", half_summary(r.kept_half)},
                   {"full", to_json(r.full.report)},
                   {"repeat2x", to_json(r.repeat2x.report)},
                   {"synthetic_extension", to_json(r.synthetic_extension.report)},
                   {"continuations", to_json(r.continuations.report)},
                   {"provenance_closure", provenance_closure(r.synthetic_extension.corpus, r.kept_half.corpus)}};
    write_json(out / "rq2_report.json", report);
    ctx.out << json{{"full_tokens", r.full.report.total_tokens},
                    {"repeat2x_tokens", r.repeat2x.report.total_tokens},
                    {"repeat2x_epochs", format_fixed(r.repeat2x.report.components.at(0).epochs, 4)},
                    {"synthetic_extension_tokens", r.synthetic_extension.report.total_tokens}}
                   .dump()
            << '\n';
    return 0;
}

int cmd_rq3(const Context& ctx, const Rq3Args& a) {
    if (a.budget <= 0) fail(ErrorCode::InvalidArgument, "--budget must be > 0");
    CorpusHandle hq = load_corpus(ctx, a.hq, "hq");
    CorpusHandle lq = load_corpus(ctx, a.lq, "lq");
    auto engine = make_engine(ctx, a.backend);
    const StrategyRegistry reg = make_registry(a.strategies);
    Rq3Options opts;
    opts.ensemble = make_ensemble(ctx, a.ensemble, a.strategy, "qa_rephrase");
    opts.seed = ctx.seed;
    opts.max_epochs = a.max_epochs;
    opts.docs_per_shard = a.docs_per_shard;
    const fs::path out = a.out;
    Rq3Corpora r = build_rq3_corpora(hq, lq, *engine, reg, a.budget, out, opts);
    write_mixture(r.hq_synth_plus_hq, out / "hq_synth_plus_hq", a.max_shard_tokens);
    write_mixture(r.lq_synth_plus_hq, out / "lq_synth_plus_hq", a.max_shard_tokens);
    write_mixture(r.lq_plus_hq, out / "lq_plus_hq", a.max_shard_tokens);
    json report = {{"budget", a.budget},
                   {"hq_web", {{"docs", r.hq_web.doc_count}, {"tokens", r.hq_web.total_tokens}}},
                   {"lq_web", {{"docs", r.lq_web.doc_count}, {"tokens", r.lq_web.total_tokens}}},
                   {"hq_synth", to_json(r.hq_synth.report)},
                   {"lq_synth", to_json(r.lq_synth.report)},
                   {"hq_synth_plus_hq", to_json(r.hq_synth_plus_hq.report)},
                   {"lq_synth_plus_hq", to_json(r.lq_synth_plus_hq.report)},
                   {"lq_plus_hq", to_json(r.lq_plus_hq.report)}};
    write_json(out / "rq3_report.json", report);
    ctx.out << json{{"hq_synth_plus_hq_tokens", r.hq_synth_plus_hq.report.total_tokens},
                    {"lq_synth_plus_hq_tokens", r.lq_synth_plus_hq.report.total_tokens},
                    {"lq_plus_hq_tokens", r.lq_plus_hq.report.total_tokens}}
                   .dump()
            << '\n';
    return 0;
}

int cmd_manifest_emit(const Context& ctx, const ManifestArgs& a) {
    std::vector<ExperimentManifest> ms;
    if (a.all) ms = builtin_manifests(a.scale);
    else ms.push_back(builtin_manifest(a.id, a.scale));
    for (auto& m : ms) {
        m.mixture_spec.seed = ctx.seed;
        if (!a.ensemble.empty()) m.strategy_ensemble = make_ensemble(ctx, a.ensemble, {}, {});
        else if (m.strategy_ensemble) m.strategy_ensemble->seed = derive_seed(ctx.seed, "prompts");
    }
    if (a.all) {
        json arr = json::array();
        for (const auto& m : ms) arr.push_back(to_json(m));
        emit(ctx, a.out, arr);
    } else {
        emit(ctx, a.out, to_json(ms.front()));
    }
    return 0;
}

int cmd_manifest_validate(const Context& ctx, const ManifestArgs& a) {
    const ExperimentManifest m = load_manifest(a.manifest);
    ManifestEnvironment env;
    if (!a.env.empty()) env = environment_from_json(read_json(a.env));
    const StrategyRegistry reg = make_registry(a.strategies);
    for (const auto& n : reg.names()) env.strategies.insert(n);
    for (const auto& s : a.corpora) {
        CorpusHandle c = load_corpus(ctx, s);
        env.corpus_tokens[c.name] = c.total_tokens;
    }
    for (const auto& b : a.backends) env.backends.insert(make_backend_config(ctx, b).backend_id);
    json arr = json::array();
    const auto findings = validate_manifest(m, env);
    for (const auto& f : findings) arr.push_back(to_json(f));
    emit(ctx, a.out, json{{"experiment_id", m.experiment_id}, {"findings", arr}});
    if (!findings.empty())
        fail(ErrorCode::ConfigError, "manifest " + m.experiment_id + " has " + std::to_string(findings.size()) +
                                         " finding(s)");
    return 0;
}

int cmd_analyze_speedup(const Context& ctx, const AnalyzeArgs& a) {
    if (a.inputs.empty()) fail(ErrorCode::InvalidArgument, "analyze speedup needs at least one --in curve");
    LearningCurve base = read_curve_csv(a.baseline);
    const auto edges = a.edges.empty() ? std::vector<std::int64_t>{} : parse_edges(a.edges);
    auto prepare = [&](LearningCurve c) {
        if (!edges.empty() && c.kind == CurveKind::raw) c = smooth_curve(c, edges);
        return c;
    };
    json results = json::array();
    std::vector<LearningCurve> plotted;
    const bool base_smoothed = !edges.empty() && base.kind == CurveKind::raw;
    base = prepare(base);
    for (const auto& in : a.inputs) {
        LearningCurve cand = read_curve_csv(in);
        const bool smoothed = !edges.empty() && cand.kind == CurveKind::raw;
        cand = prepare(cand);
        const SpeedupResult r = speedup_to_baseline(cand, base);
        json j = to_json(r);
        j["smoothed_by_tool"] = smoothed;
        results.push_back(j);
        ctx.out << r.candidate_run << " vs " << r.baseline_run << ": speedup "
                << (r.speedup ? format_fixed(round_half_up(*r.speedup, 2), 2) + " (" + format_speedup(*r.speedup) + ")"
                              : std::string("none (baseline accuracy never reached)"))
                << '\n';
        plotted.push_back(std::move(cand));
    }
    plotted.push_back(base);
    json report = {{"baseline_run", base.run_id},
                   {"baseline_curve_kind", to_string(base.kind)},
                   {"baseline_smoothed_by_tool", base_smoothed},
                   {"window_edges", edges},
                   {"results", results}};
    if (!a.out.empty()) write_json(a.out, report);
    if (!a.plot.empty()) write_file_atomic(a.plot, render_curves_svg(plotted, "Learning curves"));
    return 0;
}

int cmd_analyze_frontier(const Context& ctx, const AnalyzeArgs& a) {
    std::vector<ParetoPoint> pts;
    for (const auto& in : a.inputs) {
        auto more = parse_points_csv(read_file(in));
        pts.insert(pts.end(), more.begin(), more.end());
    }
    const auto front = pareto_frontier(pts);
    json arr = json::array();
    for (const auto& p : front) {
        arr.push_back({{"cost", p.cost}, {"accuracy", p.accuracy}, {"label", p.label}});
        ctx.out << p.label << '\n';
    }
    if (!a.out.empty()) write_json(a.out, json{{"points", pts.size()}, {"frontier", arr}});
    if (!a.plot.empty()) write_file_atomic(a.plot, render_frontier_svg(pts, front, "Pareto frontier"));
    return 0;
}

int cmd_analyze_tables(const Context& ctx, const AnalyzeArgs& a) {
    BenchmarkTable t0, t5;
    for (const auto& in : a.inputs) {
        for (const auto& [k, v] : read_table_csv(in).rows) {
            if (k.shots == 0) t0.rows[k] = v;
            else if (k.shots == 5) t5.rows[k] = v;
            else fail(ErrorCode::SchemaViolation, in + " holds already-averaged rows");
        }
    }
    const BenchmarkTable avg = average_shots(t0, t5);
    json rows = json::array();
    for (const auto& [k, v] : avg.rows) {
        if (k.task != kAvgTask) continue;
        rows.push_back({{"dataset", k.dataset}, {"scale", k.scale}, {"avg", round_half_up(v, 1)}, {"avg_raw", v}});
    }
    json deltas = json::array();
    for (const auto& d : a.deltas) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) fail(ErrorCode::InvalidArgument, "--delta expects A:B, got '" + d + "'");
        const std::string da = d.substr(0, colon), db = d.substr(colon + 1);
        for (const auto& sd : delta_vs_baseline(avg, da, db)) {
            deltas.push_back({{"a", da}, {"b", db}, {"scale", sd.scale}, {"avg_a", sd.avg_a}, {"avg_b", sd.avg_b},
                              {"delta", sd.delta}, {"display", format_delta(sd.delta) + "pp"}});
            ctx.out << da << " vs " << db << " @" << sd.scale << ": " << format_delta(sd.delta) << "pp\n";
        }
    }
    if (!a.table_out.empty()) write_file_atomic(a.table_out, to_csv(avg));
    if (!a.out.empty()) write_json(a.out, json{{"averages", rows}, {"deltas", deltas}});
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx{0, "warn", 0, out, err};
    CLI::App app{"Synthetic pretraining data pipeline", "synthpipe"};
    app.require_subcommand(1);
    app.add_option("--seed", ctx.seed, "Entropy source for every seeded step")->capture_default_str();
    app.add_option("--log-level", ctx.log_level, "error, warn, info or debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
        ->capture_default_str();
    app.add_option("--jobs", ctx.jobs, "Cap on worker threads (0: no cap)")->capture_default_str();

    IngestArgs ia;
    auto* ingest = app.add_subcommand("ingest", "Read JSONL documents and write a sharded corpus");
    ingest->add_option("--in", ia.inputs, "JSONL input file (.gz allowed); repeatable")->required();
    ingest->add_option("--out", ia.out, "Output directory")->required();
    ingest->add_option("--name", ia.name, "Corpus name")->capture_default_str();
    ingest->add_option("--tier", ia.tier, "Quality tier for lines without one: hq, lq, unknown");
    ingest->add_option("--source", ia.source, "Source for lines without one (default: corpus name)");
    ingest->add_flag("--strict", ia.strict, "Fail on the first malformed line");
    ingest->add_flag("--gzip", ia.gzip, "Gzip the output shards");
    ingest->add_option("--max-shard-tokens", ia.max_shard_tokens, "Token limit per shard")->capture_default_str();

    SplitArgs sa;
    auto* split = app.add_subcommand("split", "Split documents at the sentence boundary nearest their midpoint");
    split->add_option("--corpus", sa.corpus, "Corpus directory, manifest or JSONL file")->required();
    split->add_option("--out", sa.out, "Output directory")->required();
    split->add_option("--keep", sa.keep, "Half to keep: first or second")->capture_default_str();
    split->add_option("--name", sa.name, "Name of the half corpus");
    split->add_option("--max-shard-tokens", sa.max_shard_tokens, "Token limit per shard")->capture_default_str();

    SynthArgs ya;
    auto* synth = app.add_subcommand("synthesize", "Rephrase a corpus through a generation backend");
    synth->add_option("--corpus", ya.corpus, "Source corpus")->required();
    synth->add_option("--out", ya.out, "Output directory (resumable)")->required();
    synth->add_option("--ensemble", ya.ensemble, "Strategy ensemble JSON");
    synth->add_option("--strategy", ya.strategy, "Single strategy instead of an ensemble (default qa_rephrase)");
    synth->add_option("--backend-config", ya.backend, "Backend config JSON (default: mock)");
    synth->add_option("--strategies", ya.strategies, "Extra strategy pack JSON");
    synth->add_option("--name", ya.name, "Output corpus name");
    synth->add_option("--docs-per-shard", ya.docs_per_shard, "Checkpoint granularity")->capture_default_str();

    StyleArgs sta;
    auto* style = app.add_subcommand("style", "Conversational-style classification");
    style->require_subcommand(1);
    auto* audit = style->add_subcommand("audit", "Estimate the conversational fraction from a seeded sample");
    audit->add_option("--corpus", sta.corpus, "Corpus to audit")->required();
    audit->add_option("--method", sta.method, "llm, heuristic or owt")->capture_default_str();
    audit->add_option("--sample", sta.sample, "Sample size")->capture_default_str();
    audit->add_option("--backend-config", sta.backend, "Backend config for --method llm (default: mock)");
    audit->add_option("--out", sta.out, "Output JSON (default: stdout)");
    auto* label = style->add_subcommand("label", "Label every document; writes JSONL verdicts");
    label->add_option("--corpus", sta.corpus, "Corpus to label")->required();
    label->add_option("--method", sta.method, "llm, heuristic or owt")->capture_default_str();
    label->add_option("--backend-config", sta.backend, "Backend config for --method llm (default: mock)");
    label->add_option("--out", sta.out, "Output JSONL (default: stdout)");

    MixArgs ma;
    auto* mix = app.add_subcommand("mix", "Build token-budgeted mixtures");
    mix->require_subcommand(0, 1);
    mix->add_option("--spec", ma.spec, "Mixture spec JSON");
    mix->add_option("--corpus", ma.corpora, "Component corpus as [name=]path; repeatable");
    mix->add_option("--out", ma.out, "Output directory");
    mix->add_option("--verdicts", ma.verdicts, "JSONL verdicts for upsampling");
    mix->add_option("--style-method", ma.style_method, "Labeler when no --verdicts are given")->capture_default_str();
    mix->add_option("--backend-config", ma.backend, "Backend config for --style-method llm");
    mix->add_option("--max-shard-tokens", ma.max_shard_tokens, "Token limit per shard")->capture_default_str();
    mix->add_flag("--gzip", ma.gzip, "Gzip the output shards");

    Rq2Args r2;
    auto* rq2 = mix->add_subcommand("rq2", "Full, repeated-half and continuation-extended corpora");
    rq2->add_option("--corpus", r2.corpus, "Source corpus")->required();
    rq2->add_option("--budget", r2.budget, "Token budget")->required();
    rq2->add_option("--out", r2.out, "Output directory")->required();
    rq2->add_option("--keep", r2.keep, "Half to keep: first or second")->capture_default_str();
    rq2->add_option("--max-epochs", r2.max_epochs, "Repetition cap")->capture_default_str();
    rq2->add_option("--backend-config", r2.backend, "Backend config (default: mock)");
    rq2->add_option("--strategies", r2.strategies, "Extra strategy pack JSON");
    rq2->add_option("--docs-per-shard", r2.docs_per_shard, "Synthesis checkpoint granularity")->capture_default_str();
    rq2->add_option("--max-shard-tokens", r2.max_shard_tokens, "Token limit per shard")->capture_default_str();

    Rq3Args r3;
    auto* rq3 = mix->add_subcommand("rq3", "HQ web mixed with HQ synth, LQ synth or LQ web");
    rq3->add_option("--hq", r3.hq, "High-quality corpus")->required();
    rq3->add_option("--lq", r3.lq, "Low-quality corpus")->required();
    rq3->add_option("--budget", r3.budget, "Token budget")->required();
    rq3->add_option("--out", r3.out, "Output directory")->required();
    rq3->add_option("--ensemble", r3.ensemble, "Strategy ensemble JSON");
    rq3->add_option("--strategy", r3.strategy, "Single strategy (default qa_rephrase)");
    rq3->add_option("--max-epochs", r3.max_epochs, "Repetition cap")->capture_default_str();
    rq3->add_option("--backend-config", r3.backend, "Backend config (default: mock)");
    rq3->add_option("--strategies", r3.strategies, "Extra strategy pack JSON");
    rq3->add_option("--docs-per-shard", r3.docs_per_shard, "Synthesis checkpoint granularity")->capture_default_str();
    rq3->add_option("--max-shard-tokens", r3.max_shard_tokens, "Token limit per shard")->capture_default_str();

    ManifestArgs mf;
    auto* manifest = app.add_subcommand("manifest", "Experiment manifests");
    manifest->require_subcommand(1);
    auto* memit = manifest->add_subcommand("emit", "Write a builtin experiment manifest");
    memit->add_option("--id", mf.id, "Experiment id, e.g. rq2_continuation");
    memit->add_flag("--all", mf.all, "Emit every builtin manifest as a JSON array");
    memit->add_option("--scale", mf.scale, "Budget scale factor in (0, 1]")->capture_default_str();
    memit->add_option("--ensemble", mf.ensemble, "Strategy ensemble JSON to attach");
    memit->add_option("--out", mf.out, "Output JSON (default: stdout)");
    auto* mval = manifest->add_subcommand("validate", "Check a manifest against available corpora and backends");
    mval->add_option("--manifest", mf.manifest, "Manifest JSON")->required();
    mval->add_option("--env", mf.env, "Environment JSON {corpora, strategies, backends}");
    mval->add_option("--corpus", mf.corpora, "Available corpus as [name=]path; repeatable");
    mval->add_option("--backend-config", mf.backends, "Available backend config; repeatable");
    mval->add_option("--strategies", mf.strategies, "Extra strategy pack JSON");
    mval->add_option("--out", mf.out, "Findings JSON (default: stdout)");

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Learning-curve and benchmark analysis");
    analyze->require_subcommand(1);
    auto* speed = analyze->add_subcommand("speedup", "Tokens-to-baseline-accuracy speedups");
    speed->add_option("--in", an.inputs, "Candidate curve CSV; repeatable")->required();
    speed->add_option("--baseline", an.baseline, "Baseline curve CSV")->required();
    speed->add_option("--smooth-edges", an.edges, "Comma-separated window edges for raw curves");
    speed->add_option("--out", an.out, "Report JSON");
    speed->add_option("--plot", an.plot, "SVG line chart");
    auto* front = analyze->add_subcommand("frontier", "Pareto frontier of cost,accuracy,label points");
    front->add_option("--in", an.inputs, "Points CSV; repeatable")->required();
    front->add_option("--out", an.out, "Report JSON");
    front->add_option("--plot", an.plot, "SVG scatter chart");
    auto* tables = analyze->add_subcommand("tables", "Average 0-shot and 5-shot tables");
    tables->add_option("--in", an.inputs, "Table CSV with 0-shot and/or 5-shot rows; repeatable")->required();
    tables->add_option("--delta", an.deltas, "Dataset pair A:B for per-scale deltas; repeatable");
    tables->add_option("--table-out", an.table_out, "Averaged table CSV");
    tables->add_option("--out", an.out, "Report JSON");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << json{{"level", "error"}, {"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(ctx, ia);
        if (*split) return cmd_split(ctx, sa);
        if (*synth) return cmd_synthesize(ctx, ya);
        if (*audit) return cmd_style_audit(ctx, sta);
        if (*label) return cmd_style_label(ctx, sta);
        if (*rq2) return cmd_rq2(ctx, r2);
        if (*rq3) return cmd_rq3(ctx, r3);
        if (*mix) {
            if (ma.spec.empty() || ma.out.empty()) {
                err << json{{"level", "error"},
                            {"error", "UsageError"},
                            {"message", "mix needs --spec and --out, or one of the rq2/rq3 subcommands"}}
                           .dump()
                    << '\n';
                return 2;
            }
            return cmd_mix(ctx, ma);
        }
        if (*memit) {
            if (mf.id.empty() == !mf.all) {
                err << json{{"level", "error"}, {"error", "UsageError"}, {"message", "give exactly one of --id, --all"}}
                           .dump()
                    << '\n';
                return 2;
            }
            return cmd_manifest_emit(ctx, mf);
        }
        if (*mval) return cmd_manifest_validate(ctx, mf);
        if (*speed) return cmd_analyze_speedup(ctx, an);
        if (*front) return cmd_analyze_frontier(ctx, an);
        if (*tables) return cmd_analyze_tables(ctx, an);
    } catch (const PipelineError& e) {
        err << json{{"level", "error"}, {"error", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << json{{"level", "error"}, {"error", "InternalError"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 2;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace synthpipe
