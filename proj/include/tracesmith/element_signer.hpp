#pragma once

// Critical element identification: locate the recorded element on the
// current snapshot, derive a minimal stable attribute signature that matches
// it uniquely, and persist signatures as a per-task configuration.

#include <tracesmith/dom_snapshot.hpp>
#include <tracesmith/error.hpp>
#include <tracesmith/io.hpp>
#include <tracesmith/recorder_ingest.hpp>
#include <tracesmith/trace_model.hpp>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace tracesmith {

struct StabilityPolicy {
    std::vector<std::string> keyRanking{"data-testid", "aria-label", "name", "role", "type",
                                        "id", "placeholder", "title", "href"};
    std::set<std::string> volatileKeys{"class", "style"};
    /// Applied to each whitespace-separated token of an attribute value; any
    /// hit marks the attribute as session-generated.
    std::vector<std::string> dynamicValuePatterns{"[0-9a-fA-F]{8,}", "^[a-z]{2}-[A-Za-z0-9]{6,}$"};
    std::size_t redundancy = 2;
    std::size_t maxSubset = 4;
    std::size_t maxProviderRetries = 3;

    void validate() const {
        if (redundancy > maxSubset) throw Error(ErrorKind::InvalidConfig, "redundancy must not exceed maxSubset");
        for (const auto& p : dynamicValuePatterns) {
            try {
                std::regex re(p);
            } catch (const std::regex_error&) {
                throw Error(ErrorKind::InvalidConfig, "bad dynamic value pattern: " + p);
            }
        }
    }
};

inline StabilityPolicy policy_from_json(const nlohmann::json& j) {
    StabilityPolicy p;
    try {
        if (j.contains("keyRanking")) p.keyRanking = j["keyRanking"].get<std::vector<std::string>>();
        if (j.contains("volatileKeys")) {
            auto keys = j["volatileKeys"].get<std::vector<std::string>>();
            p.volatileKeys = {keys.begin(), keys.end()};
        }
        if (j.contains("dynamicValuePatterns")) p.dynamicValuePatterns = j["dynamicValuePatterns"].get<std::vector<std::string>>();
        if (j.contains("redundancy")) p.redundancy = j["redundancy"].get<std::size_t>();
        if (j.contains("maxSubset")) p.maxSubset = j["maxSubset"].get<std::size_t>();
        if (j.contains("maxProviderRetries")) p.maxProviderRetries = j["maxProviderRetries"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("policy: ") + e.what());
    }
    p.validate();
    return p;
}

enum class Provenance { Deterministic, Provider };

struct ElementSignature {
    AttributeMap attrs;
    std::optional<std::string> tag;
    std::size_t stepIndex = 0;
    Provenance provenance = Provenance::Deterministic;
    friend bool operator==(const ElementSignature&, const ElementSignature&) = default;
};

struct SignatureConfig {
    std::string taskId;
    std::map<std::size_t, ElementSignature> entries;
    std::size_t version = 1;
};

/// Optional model-backed help for the two steps deterministic search cannot
/// always finish. Returning nullopt means "no answer"; exceptions are
/// treated the same way by the signer.
class SignerProvider {
public:
    virtual ~SignerProvider() = default;
    /// HTML of the element on the page that best corresponds to `recorded`.
    virtual std::optional<std::string> match_element(const ElementQuery& recorded, const std::string& snapshot_html) = 0;
    /// A proposed attribute set identifying the element; `rejected` lists
    /// earlier proposals that failed the uniqueness check.
    virtual std::optional<AttributeMap> propose_signature(const std::string& element_html,
                                                          const std::vector<AttributeMap>& rejected) = 0;
};

/// Adapts any text-completion function into a SignerProvider.
class CompletionSignerProvider : public SignerProvider {
public:
    using Complete = std::function<std::string(const std::string& prompt)>;
    explicit CompletionSignerProvider(Complete complete) : complete_(std::move(complete)) {}

    std::optional<std::string> match_element(const ElementQuery& recorded, const std::string& snapshot_html) override {
        nlohmann::json rec = {{"tag", recorded.tag ? nlohmann::json(*recorded.tag) : nlohmann::json(nullptr)},
                              {"attributes", recorded.attributes}};
        const std::string prompt =
            "The element below was recorded during a demonstration, but its recorded selectors no longer match "
            "the current page. Find the element in the HTML snapshot that corresponds to it and reply with that "
            "single element's opening tag only.\n<recorded_element>\n" +
            rec.dump(2) + "\n</recorded_element>\n<html_snapshot>\n" + snapshot_html + "\n</html_snapshot>\n";
        const std::string reply = complete_(prompt);
        const auto open = reply.find('<');
        const auto close = reply.find('>', open == std::string::npos ? 0 : open);
        if (open == std::string::npos || close == std::string::npos) return std::nullopt;
        return reply.substr(open, close - open + 1);
    }

    std::optional<AttributeMap> propose_signature(const std::string& element_html,
                                                  const std::vector<AttributeMap>& rejected) override {
        std::string prompt =
            "Extract a small set of stable key-value attribute pairs that uniquely identify the element below on "
            "its page. Avoid values generated per session. Reply with one JSON object mapping attribute names to "
            "values.\n<element>\n" +
            element_html + "\n</element>\n";
        if (!rejected.empty()) {
            prompt += "These proposals matched more than one element and were rejected:\n";
            for (const auto& r : rejected) prompt += nlohmann::json(r).dump() + "\n";
        }
        const std::string reply = complete_(prompt);
        const auto open = reply.find('{');
        const auto close = reply.rfind('}');
        if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
        auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
        if (j.is_discarded() || !j.is_object()) return std::nullopt;
        AttributeMap out;
        for (const auto& [k, v] : j.items()) {
            if (!v.is_string()) return std::nullopt;
            out[detail::ascii_lower(k)] = v.get<std::string>();
        }
        return out;
    }

private:
    Complete complete_;
};

// ---------------------------------------------------------------------------
// Stage 1: presence verification
// ---------------------------------------------------------------------------

inline constexpr double kOverlapAcceptance = 0.5;

inline std::size_t verify_presence(const Snapshot& snap, const RecordedStep& step, const StabilityPolicy& policy,
                                   SignerProvider* provider = nullptr) {
    (void)policy;
    if (snap.empty()) throw Error(ErrorKind::ElementNotFound, "empty snapshot");
    if (auto hit = resolve_unique(snap, step.selectors)) return *hit;

    const ElementQuery recorded = recorded_element(step);
    if (provider) {
        try {
            if (auto html = provider->match_element(recorded, serialize_html(snap))) {
                const Snapshot proposal = parse_snapshot(*html);
                const Element& want = proposal.root();
                const auto m = count_matches(snap, want.attributes, want.tag);
                if (m.count == 1) return *m.first;
            }
        } catch (const Error&) {
            // A failed provider leaves the deterministic fallback in charge.
        }
    }
    if (recorded.tag || !recorded.attributes.empty()) {
        const auto ranked = rank_by_overlap(snap, recorded);
        if (!ranked.empty() && ranked.front().score >= kOverlapAcceptance) return ranked.front().index;
    }
    throw Error(ErrorKind::ElementNotFound, "step " + std::to_string(step.sourceIndex) + ": no selector, provider or overlap match");
}

// ---------------------------------------------------------------------------
// Stage 2: signature assignment
// ---------------------------------------------------------------------------

inline bool is_dynamic_value(const std::string& value, const StabilityPolicy& policy) {
    const auto tokens = detail::split_classes(value);
    for (const auto& pattern : policy.dynamicValuePatterns) {
        const std::regex re(pattern);
        for (const auto& tok : tokens) {
            if (std::regex_search(tok, re)) return true;
        }
    }
    return false;
}

/// Attributes eligible for a signature, ordered by the policy ranking with
/// unranked keys after it in bytewise order.
inline std::vector<std::pair<std::string, std::string>> signature_candidates(const Element& el, const StabilityPolicy& policy) {
    std::vector<std::pair<std::string, std::string>> out;
    auto eligible = [&](const std::string& k, const std::string& v) {
        return !policy.volatileKeys.count(k) && !is_dynamic_value(v, policy);
    };
    std::set<std::string> ranked(policy.keyRanking.begin(), policy.keyRanking.end());
    for (const auto& key : policy.keyRanking) {
        if (const std::string* v = el.attr(key); v && eligible(key, *v)) out.emplace_back(key, *v);
    }
    for (const auto& [k, v] : el.attributes) {
        if (!ranked.count(k) && eligible(k, v)) out.emplace_back(k, v);
    }
    return out;
}

/// The element's stable attributes as a map.
inline AttributeMap stable_attributes(const Element& el, const StabilityPolicy& policy) {
    AttributeMap out;
    for (auto& [k, v] : signature_candidates(el, policy)) out.emplace(k, v);
    return out;
}

namespace detail {

// Calls visit(indices) for every k-subset of [0, n) in lexicographic order
// until it returns true.
template <typename Visit>
bool for_each_combination(std::size_t n, std::size_t k, Visit&& visit) {
    if (k > n) return false;
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
        if (visit(idx)) return true;
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) return false;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace detail

inline ElementSignature assign_signature(const Snapshot& snap, std::size_t elem, const StabilityPolicy& policy,
                                         SignerProvider* provider = nullptr) {
    const Element& el = snap.at(elem);
    const auto candidates = signature_candidates(el, policy);
    const std::optional<std::string> tag = el.tag;

    auto unique_for_elem = [&](const AttributeMap& attrs) {
        if (attrs.empty()) return false;
        const auto m = count_matches(snap, attrs, tag);
        return m.count == 1 && *m.first == elem;
    };

    const std::size_t limit = std::min(policy.maxSubset, candidates.size());
    std::vector<std::size_t> accepted;
    for (std::size_t size = 1; size <= limit && accepted.empty(); ++size) {
        detail::for_each_combination(candidates.size(), size, [&](const std::vector<std::size_t>& idx) {
            AttributeMap attrs;
            for (std::size_t i : idx) attrs.insert(candidates[i]);
            if (!unique_for_elem(attrs)) return false;
            accepted = idx;
            return true;
        });
    }

    if (!accepted.empty()) {
        // Supersets of a unique set stay unique; pad with the next-ranked
        // candidates for drift tolerance.
        std::set<std::size_t> chosen(accepted.begin(), accepted.end());
        for (std::size_t i = 0; i < candidates.size() && chosen.size() < policy.redundancy; ++i) chosen.insert(i);
        ElementSignature sig;
        sig.tag = tag;
        for (std::size_t i : chosen) sig.attrs.insert(candidates[i]);
        return sig;
    }

    if (provider) {
        std::vector<AttributeMap> rejected;
        const std::string html = serialize_html(snap, elem);
        for (std::size_t attempt = 0; attempt < policy.maxProviderRetries; ++attempt) {
            std::optional<AttributeMap> proposal;
            try {
                proposal = provider->propose_signature(html, rejected);
            } catch (const Error&) {
                proposal.reset();
            }
            if (!proposal) continue;
            if (unique_for_elem(*proposal)) {
                ElementSignature sig;
                sig.tag = tag;
                sig.attrs = *proposal;
                sig.provenance = Provenance::Provider;
                return sig;
            }
            rejected.push_back(*proposal);
        }
    }
    throw Error(ErrorKind::NotUnique, "no attribute subset of size <= " + std::to_string(policy.maxSubset) +
                                          " identifies <" + el.tag + "> uniquely");
}

// ---------------------------------------------------------------------------
// Stage 3: configuration persistence
// ---------------------------------------------------------------------------

struct SignDiagnostic {
    std::size_t stepIndex;
    ErrorKind kind;
    std::string message;
};

struct SignResult {
    SignatureConfig config;
    std::vector<SignDiagnostic> diagnostics;
};

/// Signs every click/change step of `rec`. Keys are the steps' positions in
/// the recording as exported. Failing steps are reported, not fatal.
inline SignResult build_config(const DemoRecording& rec, const std::map<std::size_t, Snapshot>& snapshots,
                               const StabilityPolicy& policy, SignerProvider* provider = nullptr,
                               std::string taskId = {}) {
    policy.validate();
    SignResult out;
    out.config.taskId = taskId.empty() ? rec.title : std::move(taskId);
    for (const auto& step : rec.steps) {
        if (!step.interactive()) continue;
        const auto it = snapshots.find(step.sourceIndex);
        if (it == snapshots.end()) {
            out.diagnostics.push_back({step.sourceIndex, ErrorKind::PreconditionViolated, "no snapshot for step"});
            continue;
        }
        try {
            const std::size_t elem = verify_presence(it->second, step, policy, provider);
            ElementSignature sig = assign_signature(it->second, elem, policy, provider);
            sig.stepIndex = step.sourceIndex;
            out.config.entries.emplace(step.sourceIndex, std::move(sig));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::ElementNotFound && e.kind() != ErrorKind::NotUnique) throw;
            out.diagnostics.push_back({step.sourceIndex, e.kind(), e.detail()});
        }
    }
    return out;
}

/// Reads `snapshots.json` in `dir`: step index to snapshot file, relative
/// to `dir`.
inline std::map<std::size_t, Snapshot> load_snapshot_map(const std::filesystem::path& dir) {
    const auto manifest = dir / "snapshots.json";
    auto j = nlohmann::json::parse(io::read_file(manifest), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::UnparsableSnapshot, manifest.string() + ": expected an object");
    std::map<std::string, Snapshot> cache;
    std::map<std::size_t, Snapshot> out;
    for (const auto& [key, file] : j.items()) {
        std::size_t idx = 0;
        try {
            idx = std::stoul(key);
        } catch (const std::exception&) {
            throw Error(ErrorKind::UnparsableSnapshot, manifest.string() + ": key '" + key + "' is not a step index");
        }
        if (!file.is_string()) throw Error(ErrorKind::UnparsableSnapshot, manifest.string() + ": values must be file names");
        const std::string name = file.get<std::string>();
        auto it = cache.find(name);
        if (it == cache.end()) it = cache.emplace(name, load_snapshot(dir / name)).first;
        out.emplace(idx, it->second);
    }
    return out;
}

inline nlohmann::ordered_json config_to_json(const SignatureConfig& cfg) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::object();
    for (const auto& [idx, sig] : cfg.entries) {
        nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
        for (const auto& [k, v] : sig.attrs) attrs[k] = v;
        entries[std::to_string(idx)] = {
            {"tag", sig.tag ? nlohmann::ordered_json(*sig.tag) : nlohmann::ordered_json(nullptr)},
            {"attrs", attrs},
            {"provenance", sig.provenance == Provenance::Provider ? "provider" : "deterministic"}};
    }
    return {{"taskId", cfg.taskId}, {"version", cfg.version}, {"entries", entries}};
}

inline SignatureConfig config_from_json(const nlohmann::json& j) {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "signatures: " + what); };
    SignatureConfig cfg;
    if (!j.is_object()) bad("expected object");
    cfg.taskId = j.value("taskId", "");
    if (j.contains("version")) {
        if (!j["version"].is_number_unsigned()) bad("version must be a non-negative integer");
        cfg.version = j["version"].get<std::size_t>();
    }
    if (!j.contains("entries") || !j["entries"].is_object()) bad("entries must be an object");
    for (const auto& [key, e] : j["entries"].items()) {
        ElementSignature sig;
        try {
            sig.stepIndex = std::stoul(key);
        } catch (const std::exception&) {
            bad("entry key '" + key + "' is not a step index");
        }
        if (!e.is_object() || !e.contains("attrs") || !e["attrs"].is_object()) bad("entry " + key + " needs attrs");
        if (e.contains("tag") && e["tag"].is_string()) sig.tag = e["tag"].get<std::string>();
        for (const auto& [k, v] : e["attrs"].items()) {
            if (!v.is_string()) bad("entry " + key + " attr values must be strings");
            sig.attrs[k] = v.get<std::string>();
        }
        sig.provenance = e.value("provenance", "deterministic") == "provider" ? Provenance::Provider : Provenance::Deterministic;
        cfg.entries.emplace(sig.stepIndex, std::move(sig));
    }
    return cfg;
}

inline SignatureConfig load_config(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, path.string() + ": not valid JSON");
    return config_from_json(j);
}

/// Writes the config atomically. An existing file at `path` bumps the version.
inline SignatureConfig write_config(const std::filesystem::path& path, SignatureConfig cfg) {
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) {
        try {
            cfg.version = load_config(path).version + 1;
        } catch (const Error&) {
            cfg.version = 1;
        }
    } else {
        cfg.version = 1;
    }
    io::write_file_atomic(path, config_to_json(cfg).dump(2) + "\n", ErrorKind::ConfigWriteFailed);
    return cfg;
}

}  // namespace tracesmith
