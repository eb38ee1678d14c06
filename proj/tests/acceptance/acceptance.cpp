// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "synthpipe/analysis.hpp"
#include "synthpipe/cli.hpp"
#include "synthpipe/error.hpp"
#include "synthpipe/mixture.hpp"
#include "synthpipe/prompts.hpp"
#include "synthpipe/segmentation.hpp"
#include "synthpipe/style.hpp"

using namespace synthpipe;
using fixtures::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects the reasons a criterion failed.
struct Check {
    std::vector<std::string> problems;
    void expect(bool ok, const std::string& what) {
        if (!ok && problems.size() < 20) problems.push_back(what);
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, const std::string& title, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.problems.push_back(std::string("exception: ") + e.what());
    }
    const bool pass = c.problems.empty();
    g_failures += !pass;
    std::printf("%s criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", id, title.c_str(), seconds_since(t0));
    for (const auto& p : c.problems) std::printf("    - %s\n", p.c_str());
    std::fflush(stdout);
}

std::string fmt(double v, int decimals = 4) { return format_fixed(v, decimals); }

// ---- 1 ---------------------------------------------------------------------

void speedup(Check& c) {
    const auto t0 = Clock::now();
    TempDir dir;
    write_file_atomic(dir / "beyondweb.csv",
                      "tokens,accuracy\n0,40\n23200000000,56.6\n66200000000,61.1\n180000000000,63.7\n");
    write_file_atomic(dir / "rpj.csv", "tokens,accuracy\n0,30\n90000000000,50.2\n180000000000,56.6\n");
    write_file_atomic(dir / "nemotron.csv", "tokens,accuracy\n0,35\n90000000000,57.4\n180000000000,61.1\n");
    struct Case {
        std::string baseline;
        double expected;
        std::string display;
    };
    for (const Case& k : {Case{"rpj", 7.76, "7.7×"}, Case{"nemotron", 2.72, "2.7×"}}) {
        std::ostringstream out, err;
        const int code = run_cli({"analyze", "speedup", "--in", (dir / "beyondweb.csv").string(), "--baseline",
                                  (dir / (k.baseline + ".csv")).string(), "--out",
                                  (dir / (k.baseline + ".json")).string()},
                                 out, err);
        c.expect(code == 0, "analyze speedup exit " + std::to_string(code) + ": " + err.str());
        if (code != 0) continue;
        const auto r = json::parse(read_file(dir / (k.baseline + ".json"))).at("results").at(0);
        const double s = r.at("speedup").get<double>();
        c.expect(std::abs(s - k.expected) <= 0.01, k.baseline + " speedup " + fmt(s));
        c.expect(r.at("speedup_display") == k.display, k.baseline + " display " + r.at("speedup_display").dump());
        c.expect(out.str().find(k.display) != std::string::npos, "stdout lacks " + k.display);
        std::printf("    %s", out.str().c_str());
    }
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 1.0, "runtime " + fmt(elapsed, 3) + "s");
}

// ---- 2 ---------------------------------------------------------------------

void tables(Check& c) {
    const auto data = fixtures::data_dir();
    const auto t0 = read_table_csv(data / "table_0shot.csv");
    const auto t5 = read_table_csv(data / "table_5shot.csv");
    const auto printed = read_table_csv(data / "table_avg.csv");
    const auto avg = average_shots(t0, t5);
    c.expect(avg.rows.size() == printed.rows.size(), "row count " + std::to_string(avg.rows.size()) + " vs " +
                                                         std::to_string(printed.rows.size()));
    std::size_t cells = 0;
    for (const auto& [key, value] : printed.rows) {
        const double got = avg.at(key.dataset, key.scale, key.task, key.shots);
        ++cells;
        c.expect(std::abs(got - value) <= 0.05 + 1e-9,
                 key.dataset + " " + key.scale + " " + key.task + ": " + fmt(got) + " vs printed " + fmt(value, 1));
    }
    c.expect(round_half_up(avg.at("BeyondWeb", "8b", "Avg.", kShotsAveraged)) == 63.7, "BeyondWeb 8b Avg");
    c.expect(round_half_up(avg.at("RPJ", "8b", "Avg.", kShotsAveraged)) == 56.6, "RPJ 8b Avg");
    std::printf("    %zu shot-averaged cells compared\n", cells);

    const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
        {"Nemotron-Synth", {"+3.1", "+2.0", "+2.6"}}, {"RPJ", {"+6.7", "+7.3", "+7.1"}}};
    for (const auto& [baseline, want] : expected) {
        const auto d = delta_vs_baseline(printed, "BeyondWeb", baseline);
        c.expect(d.size() == want.size(), "delta scales for " + baseline);
        for (std::size_t i = 0; i < std::min(d.size(), want.size()); ++i)
            c.expect(format_delta(d[i].delta) == want[i],
                     "vs " + baseline + " @" + d[i].scale + ": " + format_delta(d[i].delta) + " expected " + want[i]);
        std::printf("    vs %s:", baseline.c_str());
        for (const auto& s : d) std::printf(" %s %s", s.scale.c_str(), format_delta(s.delta).c_str());
        const auto r = delta_vs_baseline(avg, "BeyondWeb", baseline);
        std::printf("  (recomputed from shot tables:");
        for (const auto& s : r) std::printf(" %s %s", s.scale.c_str(), format_delta(s.delta).c_str());
        std::printf(")\n");
    }
}

// ---- 3 ---------------------------------------------------------------------

void rq2(Check& c) {
    const auto t0 = Clock::now();
    auto source = make_corpus("toy", fixtures::toy_documents(7, {.docs = 500}));
    TempDir work;
    GenerationEngine engine(fixtures::fast_config(8));
    const std::int64_t budget = source.total_tokens;
    auto r = build_rq2_corpora(source, budget, engine, builtin_registry(), work.path(), {.seed = 7});

    const double epochs = r.repeat2x.report.components.at(0).epochs;
    c.expect(std::abs(epochs - 2.0) <= 0.02, "repeat2x epochs " + fmt(epochs));
    std::printf("    budget %lld, kept half %lld tokens, repeat2x epochs %s\n", static_cast<long long>(budget),
                static_cast<long long>(r.kept_half.corpus.total_tokens), fmt(epochs).c_str());

    std::set<std::string> kept;
    for (const auto& d : r.kept_half.corpus.documents()) kept.insert(d.id);
    std::int64_t synthetic = 0, closed = 0;
    for (const auto& d : r.synthetic_extension.corpus.documents()) {
        if (d.source != "synthetic") continue;
        ++synthetic;
        closed += d.meta.contains("source_doc_id") && kept.count(d.meta.at("source_doc_id"));
    }
    c.expect(synthetic > 0, "no synthetic documents in extension");
    c.expect(closed == synthetic, "closure " + std::to_string(closed) + "/" + std::to_string(synthetic));
    std::printf("    provenance closure %lld/%lld\n", static_cast<long long>(closed), static_cast<long long>(synthetic));

    for (const auto* m : {&r.full, &r.repeat2x, &r.synthetic_extension}) {
        const auto gap = std::abs(m->report.total_tokens - budget);
        c.expect(gap <= m->report.max_doc_tokens, m->corpus.name + " misses budget by " + std::to_string(gap));
    }
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 30.0, "runtime " + fmt(elapsed, 2) + "s");
}

// ---- 4 ---------------------------------------------------------------------

CorpusHandle random_sized(std::mt19937_64& rng, const std::string& name, std::size_t docs, std::int64_t max_tokens) {
    std::vector<std::int64_t> sizes(docs);
    for (auto& s : sizes) s = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_tokens));
    return make_corpus(name, fixtures::sized_documents(sizes, name));
}

void mixture(Check& c) {
    int runs = 0;
    double worst = 0.0;
    for (std::int64_t budget : {10'000, 100'000}) {
        for (double w : {0.6, 0.5}) {
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(budget));
                CorpusMap src;
                const auto docs = static_cast<std::size_t>(budget / 50 * 2);
                src.emplace("web", random_sized(rng, "web", docs, 100));
                src.emplace("synth", random_sized(rng, "synth", docs, 100));
                MixtureSpec spec{{{"web", w}, {"synth", 1.0 - w}}, budget, seed, RepetitionPolicy::forbid(), {}};
                const auto r = build_mixture(spec, src);
                const double B = static_cast<double>(budget);
                const double slack = static_cast<double>(r.report.max_doc_tokens) / B;
                for (const auto& comp : r.report.components) {
                    const double realized = static_cast<double>(comp.realized_tokens) / B;
                    const double err = std::abs(realized - comp.target_fraction);
                    worst = std::max(worst, err / slack);
                    c.expect(err <= slack + 1e-12, "budget " + std::to_string(budget) + " w " + fmt(w, 1) + " seed " +
                                                       std::to_string(seed) + " " + comp.corpus + " off by " +
                                                       fmt(err, 6));
                }
                ++runs;
            }
        }
    }
    std::printf("    %d mixtures, worst error %s of maxdoc/budget\n", runs, fmt(worst, 3).c_str());

    std::mt19937_64 rng(4242);
    int compared = 0;
    for (int t = 0; t < 400; ++t) {
        const std::size_t k = 1 + rng() % 3;
        CorpusMap src;
        MixtureSpec spec;
        spec.seed = rng();
        spec.repetition = rng() % 2 ? RepetitionPolicy::allow_up_to(1.0 + static_cast<double>(rng() % 30) / 10.0)
                                    : RepetitionPolicy::forbid();
        double sum = 0;
        std::vector<double> raw(k);
        for (auto& x : raw) sum += (x = 1.0 + static_cast<double>(rng() % 9));
        std::int64_t smallest = std::numeric_limits<std::int64_t>::max();
        for (std::size_t i = 0; i < k; ++i) {
            const std::string name = "c" + std::to_string(i);
            spec.components.push_back({name, raw[i] / sum});
            src.emplace(name, random_sized(rng, name, 1 + rng() % 50, 30));
            smallest = std::min(smallest, src.at(name).total_tokens);
        }
        spec.total_token_budget = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(2 * smallest + 1));
        MixtureResult r;
        try {
            r = build_mixture(spec, src);
        } catch (const PipelineError&) {
            continue;
        }
        c.expect(fixtures::emitted_multiset(r) == fixtures::reference_mixture(spec, src),
                 "reference sampler mismatch in trial " + std::to_string(t));
        ++compared;
    }
    c.expect(compared >= 100, "only " + std::to_string(compared) + " reference comparisons");
    std::printf("    %d corpora of <= 50 docs matched the reference sampler\n", compared);
}

// ---- 5 ---------------------------------------------------------------------

void midpoint(Check& c) {
    std::mt19937_64 rng(5);
    int agree = 0;
    for (int t = 0; t < 1000; ++t) {
        Document d;
        d.id = "m" + std::to_string(t);
        d.text = fixtures::random_text(rng, 2 + static_cast<int>(rng() % 20), 1, 25);
        d.token_count = count_tokens(d.text);
        std::vector<std::int64_t> lens;
        for (const auto& s : split_sentences(d.text)) lens.push_back(s.token_count);
        std::int64_t total = 0;
        for (auto l : lens) total += l;
        std::size_t best = 0;
        std::int64_t best_gap = std::numeric_limits<std::int64_t>::max(), cum = 0;
        for (std::size_t b = 1; b < lens.size(); ++b) {
            cum += lens[b - 1];
            const std::int64_t gap = std::abs(2 * cum - total);
            if (gap < best_gap) best_gap = gap, best = b;
        }
        const auto split = split_at_midpoint(d);
        const bool ok = midpoint_boundary(lens) == best && split.boundary_index == best;
        agree += ok;
        c.expect(ok, d.id + ": chose " + std::to_string(split.boundary_index) + ", enumeration " + std::to_string(best));
    }
    std::printf("    %d/1000 boundaries optimal\n", agree);
}

// ---- 6 ---------------------------------------------------------------------

CorpusHandle planted_corpus(std::size_t n, std::size_t positives, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> pos(n, false);
    for (std::size_t i = 0; i < positives; ++i) pos[order[i]] = true;
    std::vector<Document> docs;
    for (std::size_t i = 0; i < n; ++i) {
        Document d;
        d.id = "p" + std::to_string(i);
        d.text = "Some text here.";
        d.token_count = 3;
        d.style_labels = {pos[i] ? "FAQ" : "News Article"};
        docs.push_back(std::move(d));
    }
    return make_corpus("planted", std::move(docs));
}

void conversational(Check& c) {
    GenerationEngine engine(fixtures::fast_config(8));
    std::vector<Document> docs;
    for (const auto& ex : conversational_examples()) {
        Document d;
        d.id = "ex" + std::to_string(docs.size());
        d.text = std::string(ex.text);
        d.token_count = count_tokens(d.text);
        docs.push_back(std::move(d));
    }
    const auto llm = classify_batch(docs, StyleMethod::llm, &engine);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const int want = conversational_examples()[i].label;
        c.expect(classify_conversational(docs[i], StyleMethod::heuristic).label == want, "heuristic on " + docs[i].id);
        c.expect(llm[i].label == want, "llm on " + docs[i].id);
    }

    const std::vector<std::string> others = {"News Article", "Story", "Tutorial", "Product Page", "Review", ""};
    for (auto cat : conversational_owt_categories()) {
        Document d;
        d.id = "owt";
        d.text = "x";
        d.style_labels = {std::string(cat)};
        c.expect(classify_conversational(d, StyleMethod::owt_label).label == 1, "owt " + std::string(cat));
    }
    for (const auto& cat : others) {
        Document d;
        d.id = "owt";
        d.text = "x";
        d.style_labels = {cat};
        c.expect(classify_conversational(d, StyleMethod::owt_label).label == 0, "owt '" + cat + "'");
    }

    const std::size_t n = 50'000, positives = 1'835;
    const double p = static_cast<double>(positives) / n;
    const auto corpus = planted_corpus(n, positives, 36);
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
        sum += estimate_fraction(corpus, StyleMethod::owt_label, 10'000, seed).fraction;
    const double mean = sum / 100.0;
    c.expect(std::abs(p - 0.0367) < 1e-12, "planted p " + fmt(p, 6));
    c.expect(std::abs(mean - p) <= 0.005, "estimator mean " + fmt(mean, 5));
    std::printf("    estimator mean %s over 100 seeds (p = %s)\n", fmt(mean, 5).c_str(), fmt(p, 4).c_str());
}

// ---- 7 ---------------------------------------------------------------------

void engine_robustness(Check& c) {
    using fixtures::ScriptedBackend;
    using Outcome = ScriptedBackend::Outcome;
    std::vector<PromptJob> jobs;
    for (std::size_t i = 0; i < 64; ++i) jobs.push_back({"d" + std::to_string(i), "qa", "prompt " + std::to_string(i), {}});
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto b = std::make_shared<ScriptedBackend>([seed](std::size_t i, int a) {
            return static_cast<Outcome>(keyed_hash64(seed, std::to_string(i) + "/" + std::to_string(a)) % 5);
        });
        const auto cfg = fixtures::fast_config(1 + static_cast<int>(seed % 8), static_cast<int>(seed % 4));
        const auto r = GenerationEngine(cfg, b).run(jobs);
        c.expect(r.size() == jobs.size(), "schedule " + std::to_string(seed) + ": " + std::to_string(r.size()) + " records");
        for (std::size_t i = 0; i < std::min(r.size(), jobs.size()); ++i)
            c.expect(r[i].source_doc_id == jobs[i].source_doc_id, "record order, schedule " + std::to_string(seed));
    }

    auto corpus = make_corpus("toy", fixtures::toy_documents(70, {.docs = 80}));
    const StrategyEnsemble ens{{{"summarize", 0.3}, {"continue", 0.3}, {"qa_rephrase", 0.4}}, 7};
    TempDir a, b, interrupted;
    GenerationEngine e1(fixtures::fast_config(1)), e8(fixtures::fast_config(8));
    synthesize_corpus(corpus, builtin_registry(), ens, e1, a.path(), {.docs_per_shard = 8});
    synthesize_corpus(corpus, builtin_registry(), ens, e8, b.path(), {.docs_per_shard = 8});
    const auto ta = fixtures::tree_contents(a.path());
    c.expect(ta == fixtures::tree_contents(b.path()), "max_in_flight 1 vs 8 artifacts differ");

    SynthesisOptions stop{.docs_per_shard = 8, .stop_after = [](std::size_t done) { return done == 4; }};
    auto partial = synthesize_corpus(corpus, builtin_registry(), ens, e8, interrupted.path(), stop);
    c.expect(!partial.report.complete, "interrupted run reports complete");
    synthesize_corpus(corpus, builtin_registry(), ens, e8, interrupted.path(), {.docs_per_shard = 8});
    c.expect(fixtures::tree_contents(interrupted.path()) == ta, "resumed artifacts differ from uninterrupted run");
    std::printf("    50 failure schedules, %zu artifact files compared\n", ta.size());
}

// ---- 8 ---------------------------------------------------------------------

void goldens(Check& c) {
    const auto g = fixtures::data_dir() / "goldens";
    const auto sum = fixtures::slurp(g / "summarize_instruction.txt");
    const auto cont = fixtures::slurp(g / "continue_instruction.txt");
    const auto conv = fixtures::slurp(g / "conversational_prompt.txt");
    c.expect(!sum.empty() && !cont.empty() && !conv.empty(), "golden files missing");
    const auto& reg = builtin_registry();
    c.expect(reg.get("summarize").template_text == sum + "\n\n" + std::string(kDocumentPlaceholder),
             "summarize template");
    c.expect(reg.get("continue").template_text == cont + "\n\n" + std::string(kDocumentPlaceholder), "continue template");
    Document d;
    d.id = "g";
    d.text = "The cat sat.";
    d.token_count = 3;
    c.expect(render_prompt(reg, "summarize", d) == sum + "\n\nThe cat sat.", "rendered summarize prompt");
    c.expect(conv == kConversationalPrompt, "classification prompt");
    int found = 0;
    for (const auto& ex : conversational_examples()) found += conv.find(ex.text) != std::string::npos;
    c.expect(found == 8, std::to_string(found) + "/8 examples in classification prompt");
    c.expect(render_classification_prompt("T") == conv + "\nT", "rendered classification prompt");
}

// ---- 9 ---------------------------------------------------------------------

int sh(const std::string& cmd) {
    const int s = std::system(cmd.c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

void end_to_end(Check& c) {
    const auto t0 = Clock::now();
    const std::string bin = SYNTHPIPE_CLI_PATH;
    const auto data = fixtures::data_dir();
    TempDir run_a, run_b;
    const auto toy = fixtures::toy_documents(7, {.docs = 500});
    const auto input = fixtures::to_jsonl(toy);
    const std::string budget = std::to_string(make_corpus("toy", toy).total_tokens);
    for (const TempDir* run : {&run_a, &run_b}) {
        const fs::path root = run->path();
        const std::string r = root.string();
        write_file_atomic(root / "input" / "toy.jsonl", input);
        write_file_atomic(root / "input" / "beyondweb.csv",
                          "tokens,accuracy\n0,40\n23200000000,56.6\n66200000000,61.1\n180000000000,63.7\n");
        write_file_atomic(root / "input" / "rpj.csv", "tokens,accuracy\n0,30\n180000000000,56.6\n");
        const std::string pre = bin + " --seed 7 ";
        const std::vector<std::string> steps = {
            pre + "ingest --in " + r + "/input/toy.jsonl --out " + r + "/out/corpus --name toy > " + r + "/out/ingest.txt",
            pre + "split --corpus " + r + "/out/corpus --out " + r + "/out/half > " + r + "/out/split.txt",
            pre + "mix rq2 --corpus " + r + "/out/corpus --budget " + budget + " --out " + r + "/out/rq2 > " + r + "/out/rq2.txt",
            pre + "style audit --corpus " + r + "/out/corpus --method heuristic --sample 200 --out " + r +
                "/out/audit.json > /dev/null",
            pre + "analyze speedup --in " + r + "/input/beyondweb.csv --baseline " + r + "/input/rpj.csv --out " + r +
                "/out/speedup.json --plot " + r + "/out/speedup.svg > " + r + "/out/speedup.txt",
            pre + "analyze tables --in " + (data / "table_0shot.csv").string() + " --in " +
                (data / "table_5shot.csv").string() + " --delta BeyondWeb:RPJ --table-out " + r +
                "/out/avg.csv --out " + r + "/out/tables.json > " + r + "/out/tables.txt",
        };
        fs::create_directories(root / "out");
        for (const auto& s : steps) {
            const int code = sh(s + " 2>> " + r + "/stderr.log");
            c.expect(code == 0, "exit " + std::to_string(code) + ": " + s);
            if (code != 0) return;
        }
    }
    const auto a = fixtures::tree_contents(run_a / "out");
    const auto b = fixtures::tree_contents(run_b / "out");
    for (const auto& [path, body] : a) {
        auto it = b.find(path);
        c.expect(it != b.end() && it->second == body, "differs: " + path);
    }
    c.expect(a.size() == b.size(), "file counts " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    c.expect(a.count("rq2/rq2_report.json") == 1, "rq2 report missing");
    std::printf("    %zu files byte-identical across two runs\n", a.size());
    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 120.0, "runtime " + fmt(elapsed, 1) + "s");
}

}  // namespace

int main() {
    report(1, "speedup arithmetic", speedup);
    report(2, "table aggregation and deltas", tables);
    report(3, "RQ2 construction on a 500-document toy corpus", rq2);
    report(4, "mixture fidelity", mixture);
    report(5, "midpoint-split optimality", midpoint);
    report(6, "conversational classification", conversational);
    report(7, "generation-engine robustness", engine_robustness);
    report(8, "verbatim prompt goldens", goldens);
    report(9, "end-to-end determinism", end_to_end);
    std::printf("%d of 9 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
