#pragma once

// Execution consistency: per-step features, trace embeddings, similarity
// scoring, golden-trace monitoring and the binary evaluation harness.

#include <tracesmith/error.hpp>
#include <tracesmith/hash.hpp>
#include <tracesmith/io.hpp>
#include <tracesmith/trace_model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

namespace tracesmith {

inline constexpr std::size_t kEmbeddingDim = 768;

/// Threshold presets for a fine-tuned and an out-of-the-box encoder.
inline constexpr double kFineTunedThreshold = 0.811;
inline constexpr double kOutOfTheBoxThreshold = 0.998;

struct FeatureSequence {
    std::vector<std::string> items;
};

struct TraceEmbedding {
    std::vector<double> vector;
    bool degenerate = false;
};

inline FeatureSequence extract_features(const ExecutionTrace& trace) {
    if (trace.steps.empty()) throw Error(ErrorKind::EmptyTrace, "trace '" + trace.taskId + "' has no steps");
    FeatureSequence fs;
    fs.items.reserve(trace.steps.size());
    for (const auto& step : trace.steps) fs.items.push_back(canonical_step_text(step));
    return fs;
}

/// Maximal runs of [a-z0-9] after ASCII lowercasing.
inline std::vector<std::string> embedding_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        const char c = (raw >= 'A' && raw <= 'Z') ? static_cast<char>(raw - 'A' + 'a') : raw;
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur += c;
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace detail {

inline bool normalize(std::vector<double>& v) {
    double sq = 0;
    for (double x : v) sq += x * x;
    if (sq == 0) return false;
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
    return true;
}

}  // namespace detail

/// Signed feature hashing into 768 buckets, L2-normalized per step, mean
/// pooled over steps and normalized again.
inline TraceEmbedding embed_baseline(const FeatureSequence& fs) {
    if (fs.items.empty()) throw Error(ErrorKind::EmptyTrace, "empty feature sequence");
    std::vector<double> pooled(kEmbeddingDim, 0.0);
    std::vector<double> item(kEmbeddingDim);
    for (std::size_t i = 0; i < fs.items.size(); ++i) {
        std::fill(item.begin(), item.end(), 0.0);
        for (const auto& tok : embedding_tokens(fs.items[i])) {
            const std::uint64_t h = fnv1a64(tok);
            item[h % kEmbeddingDim] += (h >> 63) == 0 ? 1.0 : -1.0;
        }
        if (!detail::normalize(item)) throw Error(ErrorKind::DegenerateStep, "step " + std::to_string(i) + " hashes to the zero vector");
        for (std::size_t d = 0; d < kEmbeddingDim; ++d) pooled[d] += item[d];
    }
    const double n = static_cast<double>(fs.items.size());
    for (double& x : pooled) x /= n;
    TraceEmbedding e;
    e.degenerate = !detail::normalize(pooled);
    e.vector = std::move(pooled);
    return e;
}

/// Cosine similarity clamped into [0, 1].
inline double score(const TraceEmbedding& a, const TraceEmbedding& b) {
    if (a.degenerate || b.degenerate) throw Error(ErrorKind::DegenerateEmbedding, "zero-norm embedding");
    if (a.vector.size() != b.vector.size() || a.vector.empty()) {
        throw Error(ErrorKind::DegenerateEmbedding, "embedding dimensions differ");
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.vector.size(); ++i) {
        dot += a.vector[i] * b.vector[i];
        na += a.vector[i] * a.vector[i];
        nb += b.vector[i] * b.vector[i];
    }
    if (na == 0 || nb == 0) throw Error(ErrorKind::DegenerateEmbedding, "zero-norm embedding");
    const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(cos, 0.0, 1.0);
}

using TraceEmbedder = std::function<TraceEmbedding(const FeatureSequence&)>;

inline TraceEmbedder baseline_embedder() { return [](const FeatureSequence& fs) { return embed_baseline(fs); }; }

/// The text a service-side encoder sees for one trace.
inline std::string trace_text(const FeatureSequence& fs) {
    std::string out;
    for (std::size_t i = 0; i < fs.items.size(); ++i) {
        if (i) out += '\n';
        out += fs.items[i];
    }
    return out;
}

inline double consistency(const ExecutionTrace& a, const ExecutionTrace& b, const TraceEmbedder& embed) {
    return score(embed(extract_features(a)), embed(extract_features(b)));
}

// ---------------------------------------------------------------------------
// Model-judged consistency
// ---------------------------------------------------------------------------

inline std::string llm_score_prompt(const FeatureSequence& a, const FeatureSequence& b) {
    auto list = [](const FeatureSequence& fs) {
        std::string out;
        for (std::size_t i = 0; i < fs.items.size(); ++i) out += std::to_string(i + 1) + ". " + fs.items[i] + "\n";
        return out;
    };
    return "Two executions of the same web task are listed below, one step per line as g=<goal>|a=<action>|attrs=<element "
           "attributes>.\nRate how consistent they are. Judge functional equivalence: extra scrolls, redundant clicks or "
           "typing directly into a field without clicking it first do not matter; skipped, different or wrongly targeted "
           "actions do.\nReply with a single decimal number between 0 and 1, where 1 means fully consistent.\n"
           "<execution_1>\n" + list(a) + "</execution_1>\n<execution_2>\n" + list(b) + "</execution_2>\n";
}

/// First decimal number in `reply`, which must lie in [0, 1].
inline double parse_llm_score(std::string_view reply) {
    static const std::regex number(R"([-+]?(\d+(\.\d*)?|\.\d+))");
    const std::string s(reply);
    std::smatch m;
    if (!std::regex_search(s, m, number)) throw Error(ErrorKind::UnparsableScore, "no number in reply: " + s.substr(0, 80));
    const double v = std::stod(m[0].str());
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::UnparsableScore, "score out of range: " + m[0].str());
    return v;
}

inline double score_llm(const FeatureSequence& a, const FeatureSequence& b,
                        const std::function<std::string(const std::string&)>& complete) {
    if (!complete) throw Error(ErrorKind::ProviderError, "no completion provider configured");
    return parse_llm_score(complete(llm_score_prompt(a, b)));
}

// ---------------------------------------------------------------------------
// Monitoring
// ---------------------------------------------------------------------------

enum class Aggregation { Max, Mean };
enum class EmbedderKind { Baseline, Service };

struct ConsistencyConfig {
    double threshold = kFineTunedThreshold;
    Aggregation aggregation = Aggregation::Max;
    EmbedderKind embedder = EmbedderKind::Baseline;

    void validate() const {
        if (!(threshold >= 0.0 && threshold <= 1.0)) {
            throw Error(ErrorKind::InvalidConfig, "threshold must lie in [0, 1], got " + std::to_string(threshold));
        }
    }
};

enum class Verdict { Consistent, Inconsistent };

struct GoldenTrace {
    std::string id;
    ExecutionTrace trace;
};

struct ConsistencyReport {
    double score = 0;
    Verdict verdict = Verdict::Inconsistent;
    std::optional<std::string> nearestGoldenId;
    ConsistencyConfig config;
    std::vector<std::pair<std::string, double>> perGolden;
};

inline ConsistencyReport monitor(const ExecutionTrace& trace, const std::vector<GoldenTrace>& golden,
                                 const ConsistencyConfig& cfg, const TraceEmbedder& embed = baseline_embedder()) {
    cfg.validate();
    if (golden.empty()) throw Error(ErrorKind::EmptyGoldenSet, "no golden traces");
    const TraceEmbedding mine = embed(extract_features(trace));
    ConsistencyReport report;
    report.config = cfg;
    std::vector<double> scores;
    for (const auto& g : golden) {
        const double s = score(mine, embed(extract_features(g.trace)));
        report.perGolden.emplace_back(g.id, s);
        scores.push_back(s);
        // Ties go to the smallest id so the report does not depend on order.
        if (!report.nearestGoldenId || s > report.score || (s == report.score && g.id < *report.nearestGoldenId)) {
            report.score = s;
            report.nearestGoldenId = g.id;
        }
    }
    if (cfg.aggregation == Aggregation::Mean) {
        std::sort(scores.begin(), scores.end());
        double sum = 0;
        for (double s : scores) sum += s;
        report.score = sum / static_cast<double>(scores.size());
    }
    report.verdict = report.score >= cfg.threshold ? Verdict::Consistent : Verdict::Inconsistent;
    return report;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class PairLabel { Similar, Dissimilar };

struct LabeledPair {
    ExecutionTrace a;
    ExecutionTrace b;
    PairLabel label = PairLabel::Similar;
};

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct EvalMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    Confusion confusion;
};

/// Similar is the positive class; a pair is predicted similar when its
/// score reaches the threshold.
inline EvalMetrics metrics_at(const std::vector<double>& scores, const std::vector<PairLabel>& labels, double threshold) {
    if (scores.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs");
    EvalMetrics m;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] == PairLabel::Similar;
        if (predicted && actual) ++m.confusion.tp;
        else if (predicted) ++m.confusion.fp;
        else if (actual) ++m.confusion.fn;
        else ++m.confusion.tn;
    }
    const auto& c = m.confusion;
    const double total = static_cast<double>(scores.size());
    m.accuracy = static_cast<double>(c.tp + c.tn) / total;
    m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    // One division of exact counts, so equal F1 ratios compare equal and
    // threshold ties break by position only.
    m.f1 = c.tp ? static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn) : 0.0;
    return m;
}

struct ScoredPairs {
    std::vector<double> scores;
    std::vector<PairLabel> labels;
};

inline ScoredPairs score_pairs(const std::vector<LabeledPair>& pairs, const TraceEmbedder& embed) {
    ScoredPairs out;
    for (const auto& p : pairs) {
        out.scores.push_back(consistency(p.a, p.b, embed));
        out.labels.push_back(p.label);
    }
    return out;
}

inline EvalMetrics evaluate(const std::vector<LabeledPair>& pairs, const ConsistencyConfig& cfg,
                            const TraceEmbedder& embed = baseline_embedder()) {
    cfg.validate();
    if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs");
    const auto scored = score_pairs(pairs, embed);
    return metrics_at(scored.scores, scored.labels, cfg.threshold);
}

struct ThresholdChoice {
    double threshold = 0;
    EvalMetrics metrics;
};

/// Candidate thresholds are 0, 1 and the midpoints between adjacent distinct
/// scores; the best F1 wins, ties to the smallest threshold.
inline ThresholdChoice select_threshold(const std::vector<double>& scores, const std::vector<PairLabel>& labels) {
    if (scores.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs");
    const bool has_sim = std::find(labels.begin(), labels.end(), PairLabel::Similar) != labels.end();
    const bool has_dis = std::find(labels.begin(), labels.end(), PairLabel::Dissimilar) != labels.end();
    if (!has_sim || !has_dis) throw Error(ErrorKind::SingleClassDataset, "threshold selection needs both labels");

    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> candidates{0.0, 1.0};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back((sorted[i] + sorted[i + 1]) / 2);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    ThresholdChoice best;
    bool first = true;
    for (double t : candidates) {
        const EvalMetrics m = metrics_at(scores, labels, t);
        if (first || m.f1 > best.metrics.f1) {
            best = {t, m};
            first = false;
        }
    }
    return best;
}

inline ThresholdChoice select_threshold(const std::vector<LabeledPair>& pairs, const TraceEmbedder& embed = baseline_embedder()) {
    if (pairs.empty()) throw Error(ErrorKind::EmptyDataset, "no pairs");
    const auto scored = score_pairs(pairs, embed);
    return select_threshold(scored.scores, scored.labels);
}

/// Area under the ROC curve traced by sweeping the threshold over every
/// distinct score (trapezoidal, so tied scores count half).
inline double roc_auc(const std::vector<double>& scores, const std::vector<PairLabel>& labels) {
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), PairLabel::Similar));
    const auto neg = static_cast<double>(labels.size()) - pos;
    if (pos == 0 || neg == 0) throw Error(ErrorKind::SingleClassDataset, "AUC needs both labels");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double auc = 0, tp = 0, fp = 0, prev_tpr = 0, prev_fpr = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        while (k < order.size() && scores[order[k]] == s) {
            (labels[order[k]] == PairLabel::Similar ? tp : fp) += 1;
            ++k;
        }
        const double tpr = tp / pos, fpr = fp / neg;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return auc;
}

// ---------------------------------------------------------------------------
// Files: labeled pairs (JSON lines) and golden stores
// ---------------------------------------------------------------------------

struct PairRef {
    std::filesystem::path a;
    std::filesystem::path b;
    PairLabel label = PairLabel::Similar;
};

inline std::string_view to_string(PairLabel l) { return l == PairLabel::Similar ? "similar" : "dissimilar"; }

/// Paths inside the file are resolved relative to the file's directory.
inline std::vector<PairRef> load_pair_refs(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    std::vector<PairRef> out;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        const std::string at = path.string() + ":" + std::to_string(lineno);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::MalformedTrace, at + ": not a JSON object");
        if (!j.contains("a") || !j["a"].is_string() || !j.contains("b") || !j["b"].is_string()) {
            throw Error(ErrorKind::MalformedTrace, at + ": a and b must be paths");
        }
        const std::string label = j.value("label", "");
        if (label != "similar" && label != "dissimilar") throw Error(ErrorKind::MalformedTrace, at + ": bad label '" + label + "'");
        out.push_back({path.parent_path() / j["a"].get<std::string>(), path.parent_path() / j["b"].get<std::string>(),
                       label == "similar" ? PairLabel::Similar : PairLabel::Dissimilar});
    }
    return out;
}

inline std::vector<LabeledPair> load_pairs(const std::filesystem::path& path) {
    std::vector<LabeledPair> out;
    for (const auto& ref : load_pair_refs(path)) out.push_back({load_trace(ref.a), load_trace(ref.b), ref.label});
    return out;
}

struct GoldenStore {
    std::string taskId;
    std::vector<GoldenTrace> traces;
    ConsistencyConfig config;
};

inline GoldenStore load_golden_store(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    auto j = nlohmann::json::parse(io::read_file(manifest_path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::MalformedTrace, manifest_path.string() + ": not a JSON object");
    GoldenStore store;
    store.taskId = j.value("taskId", "");
    if (j.contains("threshold")) {
        if (!j["threshold"].is_number()) throw Error(ErrorKind::InvalidConfig, "manifest threshold must be a number");
        store.config.threshold = j["threshold"].get<double>();
    }
    const std::string agg = j.value("aggregation", "max");
    if (agg != "max" && agg != "mean") throw Error(ErrorKind::InvalidConfig, "manifest aggregation must be max or mean");
    store.config.aggregation = agg == "mean" ? Aggregation::Mean : Aggregation::Max;
    store.config.validate();
    if (!j.contains("traces") || !j["traces"].is_array()) throw Error(ErrorKind::MalformedTrace, "manifest traces must be an array");
    for (const auto& t : j["traces"]) {
        if (!t.is_string()) throw Error(ErrorKind::MalformedTrace, "manifest traces must be paths");
        const std::string rel = t.get<std::string>();
        store.traces.push_back({rel, load_trace(dir / rel)});
    }
    return store;
}

}  // namespace tracesmith
