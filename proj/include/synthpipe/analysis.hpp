#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace synthpipe {

// ---- learning curves -------------------------------------------------------

enum class CurveKind { raw, smoothed };

std::string_view to_string(CurveKind kind);

struct CurvePoint {
    std::int64_t tokens = 0;
    double accuracy = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
    std::string run_id;
    std::vector<CurvePoint> points;
    CurveKind kind = CurveKind::raw;
    bool operator==(const LearningCurve&) const = default;
};

/// Throws InvalidArgument for an empty curve or accuracy outside [0, 100],
/// UnsortedInput when tokens are not strictly increasing.
void validate(const LearningCurve& curve);

/// CSV with header "tokens,accuracy". An optional first line
/// "# kind: raw" or "# kind: smoothed" sets the curve kind.
LearningCurve parse_curve_csv(std::string_view text, std::string run_id);
/// run_id defaults to the file stem.
LearningCurve read_curve_csv(const std::filesystem::path& path);
std::string to_csv(const LearningCurve& curve);

/// Windows are (edges[i-1], edges[i]]. One output point per non-empty window,
/// placed at its right edge, holding the mean of the member accuracies.
/// Throws UnsortedInput for unsorted edges or checkpoints, InvalidArgument for
/// a checkpoint outside every window.
LearningCurve smooth_curve(const LearningCurve& checkpoints, const std::vector<std::int64_t>& window_edges);

/// Smallest t at which the piecewise-linear interpolant first reaches target.
std::optional<double> first_crossing(const LearningCurve& curve, double target);

struct SpeedupResult {
    std::string candidate_run;
    std::string baseline_run;
    double baseline_final_accuracy = 0.0;
    std::int64_t baseline_total_tokens = 0;
    std::optional<std::int64_t> crossing_tokens;
    std::optional<double> speedup;
    CurveKind candidate_kind = CurveKind::raw;
};

nlohmann::json to_json(const SpeedupResult& r);

/// target = baseline final accuracy; speedup = baseline final tokens / crossing.
/// A crossing at zero tokens has no finite speedup and reports none.
SpeedupResult speedup_to_baseline(const LearningCurve& candidate, const LearningCurve& baseline);

/// One decimal, truncated toward zero: 7.758 prints as "7.7×".
std::string format_speedup(double speedup);

// ---- Pareto frontier -------------------------------------------------------

struct ParetoPoint {
    double cost = 0.0;
    double accuracy = 0.0;
    std::string label;
    bool operator==(const ParetoPoint&) const = default;
};

/// Points not strictly dominated by another (cost <=, accuracy >=, one strict).
/// Of identical points only the first is kept. Input order is preserved.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points);

/// CSV "cost,accuracy,label".
std::vector<ParetoPoint> parse_points_csv(std::string_view text);

// ---- benchmark tables ------------------------------------------------------

/// Shots value of rows produced by average_shots; written as "avg" in CSV.
inline constexpr int kShotsAveraged = -1;
inline constexpr std::string_view kAvgTask = "Avg.";

struct BenchmarkKey {
    std::string dataset;
    std::string scale;
    std::string task;
    int shots = 0;
    auto operator<=>(const BenchmarkKey&) const = default;
};

struct BenchmarkTable {
    std::map<BenchmarkKey, double> rows;

    /// Throws InvalidArgument when absent.
    double at(std::string_view dataset, std::string_view scale, std::string_view task, int shots) const;
    std::vector<std::string> datasets() const;
    std::vector<std::string> scales() const;
    std::vector<std::string> tasks() const;
    bool operator==(const BenchmarkTable&) const = default;
};

/// CSV "dataset,scale,task,shots,accuracy". Throws SchemaViolation.
BenchmarkTable parse_table_csv(std::string_view text);
BenchmarkTable read_table_csv(const std::filesystem::path& path);
std::string to_csv(const BenchmarkTable& table);

/// Per-cell mean of the two tables. When both carry an "Avg." task it is
/// averaged like any other cell; otherwise the Avg. cell is the mean of the
/// per-task cell means. Cells are left unrounded. Throws KeyMismatch.
BenchmarkTable average_shots(const BenchmarkTable& table0, const BenchmarkTable& table5);

/// Half away from zero, guarded against binary representation error.
double round_half_up(double value, int decimals = 1);

struct ScaleDelta {
    std::string scale;
    double avg_a = 0.0;  // rounded to 1 decimal
    double avg_b = 0.0;
    double delta = 0.0;  // avg_a - avg_b, rounded to 1 decimal
};

/// Per scale, Avg.(a) - Avg.(b) on the shot-averaged table, each average taken
/// at its reported 1-decimal precision. Throws MissingScale.
std::vector<ScaleDelta> delta_vs_baseline(const BenchmarkTable& averaged, std::string_view dataset_a,
                                          std::string_view dataset_b);

/// "+2.6" / "-0.3" / "0.0".
std::string format_delta(double delta);

// ---- plots -----------------------------------------------------------------

/// Line chart, one polyline per curve, tokens on x.
std::string render_curves_svg(const std::vector<LearningCurve>& curves, std::string_view title);
/// Scatter of all points with frontier members highlighted.
std::string render_frontier_svg(const std::vector<ParetoPoint>& points, const std::vector<ParetoPoint>& frontier,
                                std::string_view title);

}  // namespace synthpipe
