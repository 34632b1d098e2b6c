#pragma once

// Core domain types shared by every module, the recorded-selector grammar
// and the canonical per-step text used by all embedders.

#include <tracesmith/error.hpp>
#include <tracesmith/io.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tracesmith {

/// Attribute maps are always bytewise sorted by key.
using AttributeMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Selectors
// ---------------------------------------------------------------------------

enum class SelectorScheme { Css, XPath, Aria, Text, Pierce };

inline std::string_view to_string(SelectorScheme scheme) {
    switch (scheme) {
    case SelectorScheme::Css: return "css";
    case SelectorScheme::XPath: return "xpath";
    case SelectorScheme::Aria: return "aria";
    case SelectorScheme::Text: return "text";
    case SelectorScheme::Pierce: return "pierce";
    }
    return "css";
}

struct Selector {
    SelectorScheme scheme = SelectorScheme::Css;
    std::string body;

    /// The recorder-format string this selector was parsed from.
    std::string raw() const {
        switch (scheme) {
        case SelectorScheme::Css: return body;
        case SelectorScheme::XPath: return "xpath/" + body;
        case SelectorScheme::Aria: return "aria/" + body;
        case SelectorScheme::Text: return "text/" + body;
        case SelectorScheme::Pierce: return "pierce/" + body;
        }
        return body;
    }

    friend bool operator==(const Selector&, const Selector&) = default;
};

/// One entry of a recorded `selectors` array: a chain where each selector is
/// evaluated inside the matches of the previous one.
using SelectorGroup = std::vector<Selector>;

inline Selector parse_selector(std::string_view raw) {
    if (raw.empty()) {
        throw Error(ErrorKind::EmptySelector, "selector string is empty");
    }
    static constexpr std::pair<std::string_view, SelectorScheme> kPrefixes[] = {
        {"aria/", SelectorScheme::Aria},
        {"xpath/", SelectorScheme::XPath},
        {"pierce/", SelectorScheme::Pierce},
        {"text/", SelectorScheme::Text},
    };
    Selector sel;
    sel.body = std::string(raw);
    for (const auto& [prefix, scheme] : kPrefixes) {
        if (raw.starts_with(prefix)) {
            sel.scheme = scheme;
            sel.body = std::string(raw.substr(prefix.size()));
            break;
        }
    }
    if (sel.body.empty()) {
        throw Error(ErrorKind::EmptySelector, "selector body is empty after prefix: " + std::string(raw));
    }
    return sel;
}

// ---------------------------------------------------------------------------
// Recorded demonstrations
// ---------------------------------------------------------------------------

enum class StepKind { SetViewport, Navigate, Click, Change, Scroll, Keypress, Other };

inline std::string_view to_string(StepKind kind) {
    switch (kind) {
    case StepKind::SetViewport: return "setViewport";
    case StepKind::Navigate: return "navigate";
    case StepKind::Click: return "click";
    case StepKind::Change: return "change";
    case StepKind::Scroll: return "scroll";
    case StepKind::Keypress: return "keyDown";
    case StepKind::Other: return "other";
    }
    return "other";
}

struct AssertedNavigation {
    std::string url;
    std::string title;
    friend bool operator==(const AssertedNavigation&, const AssertedNavigation&) = default;
};

struct Offset {
    double x = 0;
    double y = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

struct RecordedStep {
    StepKind kind = StepKind::Other;
    /// Position in the recording as exported, kept through filtering.
    std::size_t sourceIndex = 0;
    /// Recorder type string; meaningful for kind == Other.
    std::string typeName;
    std::optional<std::string> url;
    std::optional<std::string> value;
    std::vector<SelectorGroup> selectors;
    std::optional<Offset> offsets;
    std::vector<AssertedNavigation> assertedNavigations;
    /// The step object as read, key order preserved. Emission writes through it
    /// so recorder fields we do not model survive a round trip.
    nlohmann::ordered_json source;

    bool interactive() const { return kind == StepKind::Click || kind == StepKind::Change; }
};

struct DemoRecording {
    std::string title;
    std::vector<RecordedStep> steps;
};

struct TaskDefinition {
    std::string exampleDescription;
    std::string generalDescription;
};

// ---------------------------------------------------------------------------
// Execution traces
// ---------------------------------------------------------------------------

enum class Action { Navigate, Click, Type, Select, Scroll, Extract };

inline constexpr Action kAllActions[] = {Action::Navigate, Action::Click, Action::Type,
                                         Action::Select, Action::Scroll, Action::Extract};

inline std::string_view to_string(Action action) {
    switch (action) {
    case Action::Navigate: return "navigate";
    case Action::Click: return "click";
    case Action::Type: return "type";
    case Action::Select: return "select";
    case Action::Scroll: return "scroll";
    case Action::Extract: return "extract";
    }
    return "click";
}

inline std::optional<Action> parse_action(std::string_view text) {
    for (Action a : kAllActions) {
        if (to_string(a) == text) return a;
    }
    return std::nullopt;
}

struct StepFeature {
    std::string goal;
    Action action = Action::Click;
    AttributeMap attributes;
    friend bool operator==(const StepFeature&, const StepFeature&) = default;
};

struct ExecutionTrace {
    std::string taskId;
    std::vector<StepFeature> steps;
    std::map<std::string, std::string> meta;
    friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;
};

namespace detail {

inline void append_escaped(std::string& out, std::string_view text) {
    for (char c : text) {
        switch (c) {
        case '|': out += "%7C"; break;
        case ';': out += "%3B"; break;
        case '=': out += "%3D"; break;
        case '%': out += "%25"; break;
        default: out += c;
        }
    }
}

}  // namespace detail

/// `g=<goal>|a=<action>|attrs=<k1>=<v1>;<k2>=<v2>` with the four delimiter
/// characters percent-encoded inside free text. This is the byte contract
/// shared with the embedding service.
inline std::string canonical_step_text(const StepFeature& step) {
    std::string out = "g=";
    detail::append_escaped(out, step.goal);
    out += "|a=";
    out += to_string(step.action);
    out += "|attrs=";
    bool first = true;
    for (const auto& [key, value] : step.attributes) {
        if (!first) out += ';';
        first = false;
        detail::append_escaped(out, key);
        out += '=';
        detail::append_escaped(out, value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json trace_to_json(const ExecutionTrace& trace) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& step : trace.steps) {
        nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
        for (const auto& [k, v] : step.attributes) attrs[k] = v;
        steps.push_back({{"goal", step.goal}, {"action", std::string(to_string(step.action))}, {"attributes", attrs}});
    }
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : trace.meta) meta[k] = v;
    return {{"taskId", trace.taskId}, {"steps", steps}, {"meta", meta}};
}

inline std::string dump_trace(const ExecutionTrace& trace) { return trace_to_json(trace).dump(2) + "\n"; }

inline ExecutionTrace trace_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::MalformedTrace, what); };
    if (!j.is_object()) fail("$: expected object");
    ExecutionTrace trace;
    if (!j.contains("taskId") || !j["taskId"].is_string()) fail("$.taskId: expected string");
    trace.taskId = j["taskId"].get<std::string>();
    if (!j.contains("steps") || !j["steps"].is_array()) fail("$.steps: expected array");
    for (std::size_t i = 0; i < j["steps"].size(); ++i) {
        const auto& s = j["steps"][i];
        const std::string at = "$.steps[" + std::to_string(i) + "]";
        if (!s.is_object()) fail(at + ": expected object");
        StepFeature step;
        if (!s.contains("goal") || !s["goal"].is_string()) fail(at + ".goal: expected string");
        step.goal = s["goal"].get<std::string>();
        if (!s.contains("action") || !s["action"].is_string()) fail(at + ".action: expected string");
        auto action = parse_action(s["action"].get<std::string>());
        if (!action) fail(at + ".action: not in {navigate, click, type, select, scroll, extract}");
        step.action = *action;
        if (s.contains("attributes")) {
            if (!s["attributes"].is_object()) fail(at + ".attributes: expected object");
            for (const auto& [k, v] : s["attributes"].items()) {
                if (!v.is_string()) fail(at + ".attributes." + k + ": expected string");
                step.attributes[k] = v.get<std::string>();
            }
        }
        trace.steps.push_back(std::move(step));
    }
    if (j.contains("meta")) {
        if (!j["meta"].is_object()) fail("$.meta: expected object");
        for (const auto& [k, v] : j["meta"].items()) {
            if (!v.is_string()) fail("$.meta." + k + ": expected string");
            trace.meta[k] = v.get<std::string>();
        }
    }
    return trace;
}

inline ExecutionTrace parse_trace(std::string_view text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::MalformedTrace, "not valid JSON");
    return trace_from_json(j);
}

inline ExecutionTrace load_trace(const std::filesystem::path& path) { return parse_trace(io::read_file(path)); }

inline void save_trace(const std::filesystem::path& path, const ExecutionTrace& trace) {
    io::write_file_atomic(path, dump_trace(trace));
}

}  // namespace tracesmith
