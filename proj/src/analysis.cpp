#include "synthpipe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "synthpipe/error.hpp"
#include "synthpipe/fs_util.hpp"

namespace synthpipe {

using nlohmann::json;

namespace {

std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Comma-separated fields; a field may be wrapped in double quotes, with ""
// standing for a literal quote.
std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.emplace_back(strip(cur));
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

double parse_double(const std::string& s, std::string_view what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::SchemaViolation, "bad " + std::string(what) + " value '" + s + "'");
    }
}

std::int64_t parse_tokens(const std::string& s) {
    // Accepts plain integers and scientific notation such as 2.32e10.
    const double v = parse_double(s, "tokens");
    if (v < 0 || v > 9.2e18) fail(ErrorCode::SchemaViolation, "tokens out of range: " + s);
    return std::llround(v);
}

// Shortest round-tripping representation.
std::string num(double v) {
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

}  // namespace

std::string_view to_string(CurveKind kind) { return kind == CurveKind::raw ? "raw" : "smoothed"; }

void validate(const LearningCurve& curve) {
    if (curve.points.empty()) fail(ErrorCode::InvalidArgument, "curve " + curve.run_id + " has no points");
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const auto& p = curve.points[i];
        if (!(p.accuracy >= 0.0 && p.accuracy <= 100.0))
            fail(ErrorCode::InvalidArgument, "curve " + curve.run_id + ": accuracy out of [0, 100]");
        if (i > 0 && p.tokens <= curve.points[i - 1].tokens)
            fail(ErrorCode::UnsortedInput, "curve " + curve.run_id + ": tokens not strictly increasing at row " +
                                               std::to_string(i + 1));
    }
}

LearningCurve parse_curve_csv(std::string_view text, std::string run_id) {
    LearningCurve curve;
    curve.run_id = std::move(run_id);
    bool header = false;
    for (auto raw : split_lines(text)) {
        auto line = strip(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            auto body = strip(line.substr(1));
            if (body.starts_with("kind:")) {
                auto kind = strip(body.substr(5));
                if (kind == "raw") curve.kind = CurveKind::raw;
                else if (kind == "smoothed") curve.kind = CurveKind::smoothed;
                else fail(ErrorCode::SchemaViolation, "unknown curve kind '" + std::string(kind) + "'");
            }
            continue;
        }
        auto fields = split_csv(line);
        if (!header) {
            if (fields.size() != 2 || fields[0] != "tokens" || fields[1] != "accuracy")
                fail(ErrorCode::SchemaViolation, "curve header must be 'tokens,accuracy'");
            header = true;
            continue;
        }
        if (fields.size() != 2) fail(ErrorCode::SchemaViolation, "curve row needs 2 fields: " + std::string(line));
        curve.points.push_back({parse_tokens(fields[0]), parse_double(fields[1], "accuracy")});
    }
    if (!header) fail(ErrorCode::SchemaViolation, "curve " + curve.run_id + " has no header");
    validate(curve);
    return curve;
}

LearningCurve read_curve_csv(const std::filesystem::path& path) {
    return parse_curve_csv(read_file(path), path.stem().string());
}

std::string to_csv(const LearningCurve& curve) {
    std::string out = "# kind: " + std::string(to_string(curve.kind)) + "\ntokens,accuracy\n";
    for (const auto& p : curve.points) out += std::to_string(p.tokens) + "," + num(p.accuracy) + "\n";
    return out;
}

LearningCurve smooth_curve(const LearningCurve& checkpoints, const std::vector<std::int64_t>& edges) {
    if (edges.size() < 2) fail(ErrorCode::InvalidArgument, "need at least two window edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] <= edges[i - 1]) fail(ErrorCode::UnsortedInput, "window edges not strictly increasing");
    validate(checkpoints);

    LearningCurve out;
    out.run_id = checkpoints.run_id;
    out.kind = CurveKind::smoothed;
    std::size_t w = 1;
    double sum = 0.0;
    std::size_t n = 0;
    auto flush = [&] {
        if (n > 0) out.points.push_back({edges[w], sum / static_cast<double>(n)});
        sum = 0.0;
        n = 0;
    };
    for (const auto& p : checkpoints.points) {
        if (p.tokens <= edges.front() || p.tokens > edges.back())
            fail(ErrorCode::InvalidArgument, "checkpoint at " + std::to_string(p.tokens) + " is outside every window");
        while (p.tokens > edges[w]) {
            flush();
            ++w;
        }
        sum += p.accuracy;
        ++n;
    }
    flush();
    return out;
}

std::optional<double> first_crossing(const LearningCurve& curve, double target) {
    const auto& pts = curve.points;
    if (pts.empty()) return std::nullopt;
    if (pts[0].accuracy >= target) return static_cast<double>(pts[0].tokens);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto& a = pts[i - 1];
        const auto& b = pts[i];
        if (b.accuracy < target) continue;
        if (b.accuracy == target) return static_cast<double>(b.tokens);
        const long double frac = (static_cast<long double>(target) - a.accuracy) /
                                 (static_cast<long double>(b.accuracy) - a.accuracy);
        return static_cast<double>(a.tokens + frac * static_cast<long double>(b.tokens - a.tokens));
    }
    return std::nullopt;
}

SpeedupResult speedup_to_baseline(const LearningCurve& candidate, const LearningCurve& baseline) {
    validate(candidate);
    validate(baseline);
    SpeedupResult r;
    r.candidate_run = candidate.run_id;
    r.baseline_run = baseline.run_id;
    r.baseline_final_accuracy = baseline.points.back().accuracy;
    r.baseline_total_tokens = baseline.points.back().tokens;
    r.candidate_kind = candidate.kind;
    if (auto t = first_crossing(candidate, r.baseline_final_accuracy)) {
        // Tokens are whole; an interior crossing needs the next whole token.
        r.crossing_tokens = static_cast<std::int64_t>(std::ceil(*t - 1e-6));
        if (*r.crossing_tokens > 0)
            r.speedup = static_cast<double>(r.baseline_total_tokens) / static_cast<double>(*r.crossing_tokens);
    }
    return r;
}

std::string format_speedup(double speedup) {
    const double t = std::floor(speedup * 10.0 + 1e-9) / 10.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f×", t);
    return buf;
}

json to_json(const SpeedupResult& r) {
    json j = {{"candidate_run", r.candidate_run},
              {"baseline_run", r.baseline_run},
              {"baseline_final_accuracy", r.baseline_final_accuracy},
              {"baseline_total_tokens", r.baseline_total_tokens},
              {"candidate_curve_kind", to_string(r.candidate_kind)}};
    j["crossing_tokens"] = r.crossing_tokens ? json(*r.crossing_tokens) : json(nullptr);
    j["speedup"] = r.speedup ? json(*r.speedup) : json(nullptr);
    j["speedup_2dp"] = r.speedup ? json(round_half_up(*r.speedup, 2)) : json(nullptr);
    j["speedup_display"] = r.speedup ? json(format_speedup(*r.speedup)) : json(nullptr);
    return j;
}

// ---- Pareto ----------------------------------------------------------------

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
    std::vector<ParetoPoint> out;
    for (std::size_t j = 0; j < points.size(); ++j) {
        const auto& q = points[j];
        bool keep = true;
        for (std::size_t i = 0; i < points.size() && keep; ++i) {
            if (i == j) continue;
            const auto& p = points[i];
            const bool weak = p.cost <= q.cost && p.accuracy >= q.accuracy;
            const bool strict = p.cost < q.cost || p.accuracy > q.accuracy;
            if (weak && (strict || i < j)) keep = false;
        }
        if (keep) out.push_back(q);
    }
    return out;
}

std::vector<ParetoPoint> parse_points_csv(std::string_view text) {
    std::vector<ParetoPoint> out;
    bool header = false;
    for (auto raw : split_lines(text)) {
        auto line = strip(raw);
        if (line.empty() || line.front() == '#') continue;
        auto f = split_csv(line);
        if (!header) {
            if (f.size() != 3 || f[0] != "cost" || f[1] != "accuracy" || f[2] != "label")
                fail(ErrorCode::SchemaViolation, "points header must be 'cost,accuracy,label'");
            header = true;
            continue;
        }
        if (f.size() != 3) fail(ErrorCode::SchemaViolation, "points row needs 3 fields: " + std::string(line));
        out.push_back({parse_double(f[0], "cost"), parse_double(f[1], "accuracy"), f[2]});
    }
    if (!header) fail(ErrorCode::SchemaViolation, "points file has no header");
    return out;
}

// ---- tables ----------------------------------------------------------------

double BenchmarkTable::at(std::string_view dataset, std::string_view scale, std::string_view task, int shots) const {
    auto it = rows.find({std::string(dataset), std::string(scale), std::string(task), shots});
    if (it == rows.end()) {
        fail(ErrorCode::InvalidArgument, "no cell " + std::string(dataset) + "/" + std::string(scale) + "/" +
                                             std::string(task) + "/" + std::to_string(shots));
    }
    return it->second;
}

namespace {
template <typename F>
std::vector<std::string> distinct(const BenchmarkTable& t, F field) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& [k, v] : t.rows)
        if (seen.insert(field(k)).second) out.push_back(field(k));
    return out;
}
}  // namespace

std::vector<std::string> BenchmarkTable::datasets() const {
    return distinct(*this, [](const BenchmarkKey& k) { return k.dataset; });
}
std::vector<std::string> BenchmarkTable::scales() const {
    return distinct(*this, [](const BenchmarkKey& k) { return k.scale; });
}
std::vector<std::string> BenchmarkTable::tasks() const {
    return distinct(*this, [](const BenchmarkKey& k) { return k.task; });
}

BenchmarkTable parse_table_csv(std::string_view text) {
    BenchmarkTable t;
    bool header = false;
    std::size_t row = 0;
    for (auto raw : split_lines(text)) {
        ++row;
        auto line = strip(raw);
        if (line.empty() || line.front() == '#') continue;
        auto f = split_csv(line);
        if (!header) {
            if (f != std::vector<std::string>{"dataset", "scale", "task", "shots", "accuracy"})
                fail(ErrorCode::SchemaViolation, "table header must be 'dataset,scale,task,shots,accuracy'");
            header = true;
            continue;
        }
        if (f.size() != 5) fail(ErrorCode::SchemaViolation, "table row " + std::to_string(row) + " needs 5 fields");
        int shots;
        if (f[3] == "avg") shots = kShotsAveraged;
        else if (f[3] == "0") shots = 0;
        else if (f[3] == "5") shots = 5;
        else fail(ErrorCode::SchemaViolation, "shots must be 0, 5 or avg, got '" + f[3] + "'");
        const double acc = parse_double(f[4], "accuracy");
        if (!(acc >= 0.0 && acc <= 100.0)) fail(ErrorCode::SchemaViolation, "accuracy out of [0, 100]: " + f[4]);
        if (!t.rows.emplace(BenchmarkKey{f[0], f[1], f[2], shots}, acc).second)
            fail(ErrorCode::SchemaViolation, "duplicate table row " + std::to_string(row));
    }
    if (!header) fail(ErrorCode::SchemaViolation, "table has no header");
    return t;
}

BenchmarkTable read_table_csv(const std::filesystem::path& path) { return parse_table_csv(read_file(path)); }

std::string to_csv(const BenchmarkTable& table) {
    std::string out = "dataset,scale,task,shots,accuracy\n";
    for (const auto& [k, v] : table.rows) {
        out += csv_field(k.dataset) + "," + csv_field(k.scale) + "," + csv_field(k.task) + "," +
               (k.shots == kShotsAveraged ? std::string("avg") : std::to_string(k.shots)) + "," + num(v) + "\n";
    }
    return out;
}

BenchmarkTable average_shots(const BenchmarkTable& table0, const BenchmarkTable& table5) {
    auto strip_shots = [](const BenchmarkTable& t) {
        std::map<std::tuple<std::string, std::string, std::string>, double> m;
        for (const auto& [k, v] : t.rows) {
            if (!m.emplace(std::tuple{k.dataset, k.scale, k.task}, v).second)
                fail(ErrorCode::KeyMismatch, "table holds " + k.dataset + "/" + k.scale + "/" + k.task +
                                                 " under more than one shots value");
        }
        return m;
    };
    const auto a = strip_shots(table0);
    const auto b = strip_shots(table5);
    for (const auto& [k, v] : a) {
        if (!b.contains(k))
            fail(ErrorCode::KeyMismatch, "second table lacks " + std::get<0>(k) + "/" + std::get<1>(k) + "/" +
                                             std::get<2>(k));
    }
    for (const auto& [k, v] : b) {
        if (!a.contains(k))
            fail(ErrorCode::KeyMismatch, "first table lacks " + std::get<0>(k) + "/" + std::get<1>(k) + "/" +
                                             std::get<2>(k));
    }

    BenchmarkTable out;
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> task_means;
    std::set<std::pair<std::string, std::string>> has_avg;
    for (const auto& [k, v] : a) {
        const auto& [ds, scale, task] = k;
        const double mean = (v + b.at(k)) / 2.0;
        out.rows[{ds, scale, task, kShotsAveraged}] = mean;
        if (task == kAvgTask) {
            has_avg.insert({ds, scale});
        } else {
            auto& acc = task_means[{ds, scale}];
            acc.first += mean;
            acc.second += 1;
        }
    }
    for (const auto& [row, acc] : task_means) {
        if (!has_avg.contains(row))
            out.rows[{row.first, row.second, std::string(kAvgTask), kShotsAveraged}] = acc.first / acc.second;
    }
    return out;
}

double round_half_up(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double x = value * scale;
    const double r = x >= 0 ? std::floor(x + 0.5 + 1e-9) : -std::floor(-x + 0.5 + 1e-9);
    return r / scale;
}

std::vector<ScaleDelta> delta_vs_baseline(const BenchmarkTable& averaged, std::string_view dataset_a,
                                          std::string_view dataset_b) {
    auto avg_by_scale = [&](std::string_view ds) {
        std::map<std::string, double> m;
        for (const auto& [k, v] : averaged.rows)
            if (k.dataset == ds && k.task == kAvgTask) m[k.scale] = v;
        return m;
    };
    const auto a = avg_by_scale(dataset_a);
    const auto b = avg_by_scale(dataset_b);
    if (a.empty()) fail(ErrorCode::MissingScale, "no Avg. rows for " + std::string(dataset_a));
    std::vector<ScaleDelta> out;
    for (const auto& [scale, va] : a) {
        auto it = b.find(scale);
        if (it == b.end())
            fail(ErrorCode::MissingScale, std::string(dataset_b) + " has no Avg. at scale " + scale);
        ScaleDelta d;
        d.scale = scale;
        d.avg_a = round_half_up(va, 1);
        d.avg_b = round_half_up(it->second, 1);
        d.delta = round_half_up(d.avg_a - d.avg_b, 1);
        out.push_back(d);
    }
    for (const auto& [scale, vb] : b)
        if (!a.contains(scale)) fail(ErrorCode::MissingScale, std::string(dataset_a) + " has no Avg. at scale " + scale);
    return out;
}

std::string format_delta(double delta) {
    const double r = round_half_up(delta, 1);
    char buf[32];
    if (r == 0.0) return "0.0";
    std::snprintf(buf, sizeof(buf), "%+.1f", r);
    return buf;
}

// ---- SVG -------------------------------------------------------------------

namespace {

constexpr double kW = 640, kH = 400, kMargin = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};

std::string esc(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kMargin + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kW - 2 * kMargin); }
    double py(double y) const { return kH - kMargin - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kH - 2 * kMargin); }
};

std::string svg_open(std::string_view title, const Frame& f, std::string_view xlabel, std::string_view ylabel) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kW) + "\" height=\"" + fmt(kH) +
                    "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + esc(title) + "</text>\n";
    s += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kH - kMargin) + "\" x2=\"" + fmt(kW - kMargin) + "\" y2=\"" +
         fmt(kH - kMargin) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fmt(kMargin) + "\" y1=\"" + fmt(kMargin) + "\" x2=\"" + fmt(kMargin) + "\" y2=\"" +
         fmt(kH - kMargin) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt(kW / 2) + "\" y=\"" + fmt(kH - 10) + "\" text-anchor=\"middle\" font-size=\"12\">" +
         esc(xlabel) + "</text>\n";
    s += "<text x=\"15\" y=\"" + fmt(kH / 2) + "\" transform=\"rotate(-90 15 " + fmt(kH / 2) +
         ")\" text-anchor=\"middle\" font-size=\"12\">" + esc(ylabel) + "</text>\n";
    for (double t : {f.x0, f.x1}) {
        s += "<text x=\"" + fmt(f.px(t)) + "\" y=\"" + fmt(kH - kMargin + 15) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + num(t) + "</text>\n";
    }
    for (double t : {f.y0, f.y1}) {
        s += "<text x=\"" + fmt(kMargin - 5) + "\" y=\"" + fmt(f.py(t)) + "\" text-anchor=\"end\" font-size=\"10\">" +
             num(t) + "</text>\n";
    }
    return s;
}

}  // namespace

std::string render_curves_svg(const std::vector<LearningCurve>& curves, std::string_view title) {
    Frame f{0, 1, 0, 100};
    bool first = true;
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            const double x = static_cast<double>(p.tokens);
            if (first) f = {x, x, p.accuracy, p.accuracy};
            f.x0 = std::min(f.x0, x);
            f.x1 = std::max(f.x1, x);
            f.y0 = std::min(f.y0, p.accuracy);
            f.y1 = std::max(f.y1, p.accuracy);
            first = false;
        }
    }
    std::string s = svg_open(title, f, "tokens", "accuracy");
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        std::string pts;
        for (const auto& p : curves[i].points)
            pts += fmt(f.px(static_cast<double>(p.tokens))) + "," + fmt(f.py(p.accuracy)) + " ";
        if (!pts.empty()) pts.pop_back();
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
             "\"/>\n";
        s += "<text x=\"" + fmt(kW - kMargin + 5) + "\" y=\"" + fmt(kMargin + 14.0 * static_cast<double>(i)) +
             "\" font-size=\"10\" fill=\"" + color + "\">" + esc(curves[i].run_id) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string render_frontier_svg(const std::vector<ParetoPoint>& points, const std::vector<ParetoPoint>& frontier,
                                std::string_view title) {
    Frame f{0, 1, 0, 100};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (i == 0) f = {p.cost, p.cost, p.accuracy, p.accuracy};
        f.x0 = std::min(f.x0, p.cost);
        f.x1 = std::max(f.x1, p.cost);
        f.y0 = std::min(f.y0, p.accuracy);
        f.y1 = std::max(f.y1, p.accuracy);
    }
    std::string s = svg_open(title, f, "cost", "accuracy");
    for (const auto& p : points) {
        const bool on = std::find(frontier.begin(), frontier.end(), p) != frontier.end();
        s += "<circle cx=\"" + fmt(f.px(p.cost)) + "\" cy=\"" + fmt(f.py(p.accuracy)) + "\" r=\"" +
             (on ? "5" : "3") + "\" fill=\"" + (on ? "#d62728" : "#7f7f7f") + "\"/>\n";
        s += "<text x=\"" + fmt(f.px(p.cost) + 6) + "\" y=\"" + fmt(f.py(p.accuracy) - 6) + "\" font-size=\"10\">" +
             esc(p.label) + "</text>\n";
    }
    if (frontier.size() > 1) {
        std::vector<ParetoPoint> sorted = frontier;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const ParetoPoint& a, const ParetoPoint& b) { return a.cost < b.cost; });
        std::string pts;
        for (const auto& p : sorted) pts += fmt(f.px(p.cost)) + "," + fmt(f.py(p.accuracy)) + " ";
        pts.pop_back();
        s += "<polyline fill=\"none\" stroke=\"#d62728\" stroke-dasharray=\"4 2\" points=\"" + pts + "\"/>\n";
    }
    return s + "</svg>\n";
}

}  // namespace synthpipe
