#pragma once

// Shared helpers for the unit and acceptance suites.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "synthpipe/analysis.hpp"
#include "synthpipe/corpus_io.hpp"
#include "synthpipe/fs_util.hpp"
#include "synthpipe/generation.hpp"
#include "synthpipe/hashing.hpp"
#include "synthpipe/mixture.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace synthpipe;

#ifndef SYNTHPIPE_TEST_DATA
#define SYNTHPIPE_TEST_DATA "tests/data"
#endif

inline fs::path data_dir() { return fs::path(SYNTHPIPE_TEST_DATA); }

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "synthpipe") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = {
        "river",  "stone",  "market", "garden", "light",  "window", "signal", "harbor", "forest", "copper",
        "engine", "letter", "winter", "silver", "bridge", "candle", "meadow", "pocket", "ladder", "orbit",
        "thread", "valley", "canvas", "mirror", "planet", "timber", "violet", "anchor", "basket", "cotton"};
    return words;
}

/// Text of `sentences` sentences, each [min_words, max_words] words long.
inline std::string random_text(std::mt19937_64& rng, int sentences, int min_words, int max_words) {
    const auto& v = vocabulary();
    std::string out;
    for (int s = 0; s < sentences; ++s) {
        const int n = min_words + static_cast<int>(rng() % static_cast<std::uint64_t>(max_words - min_words + 1));
        for (int w = 0; w < n; ++w) {
            std::string word = v[rng() % v.size()];
            if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
            if (!out.empty()) out += ' ';
            out += word;
        }
        out += '.';
    }
    return out;
}

struct ToyOptions {
    std::size_t docs = 500;
    int min_sentences = 8;
    int max_sentences = 16;
    int min_words = 4;
    int max_words = 12;
    std::string prefix = "doc";
    std::string source = "toy";
    QualityTier tier = QualityTier::unknown;
};

inline std::vector<Document> toy_documents(std::uint64_t seed, const ToyOptions& o = {}) {
    std::mt19937_64 rng(seed);
    std::vector<Document> docs;
    for (std::size_t i = 0; i < o.docs; ++i) {
        const int s = o.min_sentences +
                      static_cast<int>(rng() % static_cast<std::uint64_t>(o.max_sentences - o.min_sentences + 1));
        Document d;
        d.id = o.prefix + std::to_string(i);
        d.text = random_text(rng, s, o.min_words, o.max_words);
        d.source = o.source;
        d.quality_tier = o.tier;
        d.token_count = count_tokens(d.text);
        docs.push_back(std::move(d));
    }
    return docs;
}

/// One document per entry of `token_counts`, each a single sentence.
inline std::vector<Document> sized_documents(const std::vector<std::int64_t>& token_counts,
                                             const std::string& prefix) {
    std::vector<Document> docs;
    for (std::size_t i = 0; i < token_counts.size(); ++i) {
        Document d;
        d.id = prefix + std::to_string(i);
        for (std::int64_t w = 0; w < token_counts[i]; ++w) d.text += (w ? " w" : "W") + std::to_string(w);
        d.source = prefix;
        d.token_count = token_counts[i];
        docs.push_back(std::move(d));
    }
    return docs;
}

inline std::string to_jsonl(const std::vector<Document>& docs) {
    std::string s;
    for (const auto& d : docs) s += to_jsonl_line(d) + "\n";
    return s;
}

/// Every regular file under `root`, keyed by relative path.
inline std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return out;
}

// ---- reference mixture sampler ---------------------------------------------

struct Emitted {
    std::string corpus;
    std::string doc_id;
    std::int64_t epoch;
    auto operator<=>(const Emitted&) const = default;
};

/// Straight from the definition: component i walks its cycle of per-epoch
/// seeded permutations and emits the prefix whose token sum is closest to
/// budget * (w_1 + ... + w_i) minus what earlier components emitted (shortest
/// prefix on ties), limited to the allowed number of passes.
inline std::multiset<Emitted> reference_mixture(const MixtureSpec& spec, const CorpusMap& sources) {
    std::multiset<Emitted> out;
    double cum_weight = 0.0;
    std::int64_t emitted_before = 0;
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
        const auto& comp = spec.components[c];
        const CorpusHandle& corpus = sources.at(comp.corpus);
        const auto& docs = corpus.documents();
        cum_weight += comp.weight;
        const double cum_target = c + 1 == spec.components.size() ? static_cast<double>(spec.total_token_budget)
                                                                   : cum_weight * spec.total_token_budget;
        const double target = cum_target - static_cast<double>(emitted_before);

        const std::int64_t passes =
            spec.repetition.allow ? static_cast<std::int64_t>(std::ceil(spec.repetition.max_epochs)) + 1 : 1;
        std::vector<std::pair<std::size_t, std::int64_t>> cycle;  // (doc index, epoch)
        for (std::int64_t e = 0; e < passes; ++e) {
            std::vector<std::size_t> perm(docs.size());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
            std::mt19937_64 rng(derive_seed(spec.seed, "mixture/" + comp.corpus + "/epoch=" + std::to_string(e)));
            for (std::size_t i = perm.size(); i > 1; --i) {
                const std::uint64_t limit =
                    std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % i;
                std::uint64_t x;
                do x = rng();
                while (x >= limit);
                std::swap(perm[i - 1], perm[x % i]);
            }
            for (auto idx : perm) cycle.emplace_back(idx, e);
        }
        std::size_t best_k = 0;
        double best = std::abs(target);
        double sum = 0.0;
        for (std::size_t k = 1; k <= cycle.size(); ++k) {
            sum += static_cast<double>(docs[cycle[k - 1].first].token_count);
            if (std::abs(sum - target) < best) {
                best = std::abs(sum - target);
                best_k = k;
            }
        }
        for (std::size_t k = 0; k < best_k; ++k) {
            out.insert({comp.corpus, docs[cycle[k].first].id, cycle[k].second});
            emitted_before += docs[cycle[k].first].token_count;
        }
    }
    return out;
}

inline std::multiset<Emitted> emitted_multiset(const MixtureResult& r) {
    std::multiset<Emitted> out;
    for (const auto& p : r.provenance) out.insert({p.corpus, p.doc_id, p.epoch});
    return out;
}

// ---- scripted backend ------------------------------------------------------

/// Backend whose outcome per (request index, attempt) comes from a script.
/// Successful outputs are a pure function of the prompt.
class ScriptedBackend final : public Backend {
public:
    enum class Outcome { ok, fail, throw_error, empty, length_limit };
    using Script = std::function<Outcome(std::size_t index, int attempt)>;

    explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        int attempt;
        {
            std::lock_guard lock(mu_);
            attempt = ++attempts_[request.index];
            ++calls_;
        }
        const Outcome o = script_(request.index, attempt);
        CompletionResponse r;
        switch (o) {
            case Outcome::ok:
            case Outcome::length_limit:
                r.ok = true;
                r.text = "out-" + digest128_hex(request.prompt).substr(0, 12) + " reply words here";
                r.hit_length_limit = o == Outcome::length_limit;
                break;
            case Outcome::fail: r.error = "scripted failure"; break;
            case Outcome::throw_error: throw std::runtime_error("scripted exception");
            case Outcome::empty:
                r.ok = true;
                r.text = "   ";
                break;
        }
        return r;
    }

    int calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    Script script_;
    mutable std::mutex mu_;
    std::map<std::size_t, int> attempts_;
    int calls_ = 0;
};

inline BackendConfig fast_config(int max_in_flight = 4, int max_retries = 3, std::string id = "mock") {
    BackendConfig c;
    c.backend_id = std::move(id);
    c.max_in_flight = max_in_flight;
    c.max_retries = max_retries;
    c.backoff_base = std::chrono::milliseconds(0);
    c.backoff_cap = std::chrono::milliseconds(0);
    return c;
}

}  // namespace fixtures
