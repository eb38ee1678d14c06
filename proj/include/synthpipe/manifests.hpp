#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthpipe/mixture.hpp"
#include "synthpipe/prompts.hpp"

namespace synthpipe {

struct ExperimentManifest {
    std::string experiment_id;
    MixtureSpec mixture_spec;
    std::optional<StrategyEnsemble> strategy_ensemble;
    // Set when the synthetic share's ensemble has to come from the user.
    bool requires_ensemble = false;
    std::optional<std::string> backend_id;
    std::string model_scale;
    nlohmann::json train_hparams = nlohmann::json::object();
    nlohmann::json eval_protocol = nlohmann::json::object();

    bool operator==(const ExperimentManifest&) const = default;
};

nlohmann::json to_json(const ExperimentManifest& m);
/// Throws SchemaViolation.
ExperimentManifest manifest_from_json(const nlohmann::json& j);
ExperimentManifest load_manifest(const std::filesystem::path& path);

/// The fourteen evaluation tasks, in table column order.
const std::vector<std::string>& eval_tasks();

/// All builtin manifests with every token budget multiplied by scale_factor.
/// Throws InvalidArgument unless scale_factor is in (0, 1].
std::vector<ExperimentManifest> builtin_manifests(double scale_factor = 1.0);
/// Throws InvalidArgument for an unknown id.
ExperimentManifest builtin_manifest(std::string_view experiment_id, double scale_factor = 1.0);

struct ManifestEnvironment {
    std::map<std::string, std::int64_t, std::less<>> corpus_tokens;
    std::set<std::string, std::less<>> strategies;
    std::set<std::string, std::less<>> backends;
};

/// {"corpora": {"name": tokens}, "strategies": [...], "backends": [...]}.
ManifestEnvironment environment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ManifestEnvironment& env);

enum class FindingKind {
    unresolved_corpus,
    unresolved_strategy,
    unresolved_backend,
    missing_ensemble,
    ratio_sum,
    budget_conflict,
    invalid_value,
};

std::string_view to_string(FindingKind kind);

struct ManifestFinding {
    FindingKind kind;
    std::string subject;
    std::string message;
    std::optional<std::int64_t> required_tokens;
    std::optional<std::int64_t> available_tokens;
};

nlohmann::json to_json(const ManifestFinding& f);

/// Empty result means the manifest can be executed in env.
std::vector<ManifestFinding> validate_manifest(const ExperimentManifest& manifest, const ManifestEnvironment& env);

}  // namespace synthpipe
