#pragma once

// Demonstration learning: turn a recorded demonstration plus task texts into
// a parameterized standard operating procedure, either through the model
// prompt or through a deterministic offline generator, and bind parameters.

#include <tracesmith/error.hpp>
#include <tracesmith/io.hpp>
#include <tracesmith/recorder_ingest.hpp>
#include <tracesmith/sop_prompt_template.hpp>
#include <tracesmith/trace_model.hpp>

#include <json.hpp>

#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tracesmith {

struct SopTemplate {
    std::string task;
    std::map<std::string, std::string> inputParams;
    std::vector<std::string> steps;
    friend bool operator==(const SopTemplate&, const SopTemplate&) = default;
};

struct SopInstance {
    std::string task;
    std::vector<std::string> steps;
    std::map<std::string, std::string> params;
    friend bool operator==(const SopInstance&, const SopInstance&) = default;
};

enum class SopWarningKind { UnboundPlaceholder, UnusedParam, UnresolvedPlaceholder };

struct SopWarning {
    SopWarningKind kind;
    std::string name;
    friend bool operator==(const SopWarning&, const SopWarning&) = default;
};

inline std::string_view to_string(SopWarningKind k) {
    switch (k) {
    case SopWarningKind::UnboundPlaceholder: return "UnboundPlaceholder";
    case SopWarningKind::UnusedParam: return "UnusedParam";
    case SopWarningKind::UnresolvedPlaceholder: return "UnresolvedPlaceholder";
    }
    return "UnboundPlaceholder";
}

/// Placeholder names (`<ident>`) in order of first appearance.
inline std::vector<std::string> placeholders(std::string_view text) {
    static const std::regex re("<([A-Za-z][A-Za-z0-9_]*)>");
    std::vector<std::string> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const std::string name = (*it)[1].str();
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    return out;
}

inline std::vector<std::string> template_placeholders(const SopTemplate& tpl) {
    std::vector<std::string> out = placeholders(tpl.task);
    for (const auto& step : tpl.steps) {
        for (auto& name : placeholders(step)) {
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        }
    }
    return out;
}

/// Placeholders used without a parameter declaration, and declared
/// parameters no step uses.
inline std::vector<SopWarning> check_template(const SopTemplate& tpl) {
    std::vector<SopWarning> out;
    const auto used = template_placeholders(tpl);
    for (const auto& name : used) {
        if (!tpl.inputParams.count(name)) out.push_back({SopWarningKind::UnboundPlaceholder, name});
    }
    for (const auto& [name, _] : tpl.inputParams) {
        if (std::find(used.begin(), used.end(), name) == used.end()) out.push_back({SopWarningKind::UnusedParam, name});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

inline std::string build_prompt(const TaskDefinition& task, const DemoRecording& rec) {
    if (task.exampleDescription.empty()) throw Error(ErrorKind::PreconditionViolated, "example task description is empty");
    if (task.generalDescription.empty()) throw Error(ErrorKind::PreconditionViolated, "general task description is empty");
    const std::string replay = emit_recording(rec);
    const std::pair<std::string_view, const std::string*> subs[] = {
        {"<INPUT_TASK_DESCRIPTION_EXAMPLE>", &task.exampleDescription},
        {"<TEXT_REPLAY>", &replay},
        {"<INPUT_TASK_DESCRIPTION_GENERAL>", &task.generalDescription},
    };
    std::string out;
    std::string_view rest = kSopPromptTemplate;
    while (!rest.empty()) {
        const auto eol = rest.find('\n');
        std::string_view line = rest.substr(0, eol == std::string_view::npos ? rest.size() : eol);
        bool replaced = false;
        for (const auto& [token, value] : subs) {
            if (line == token) {
                out += *value;
                replaced = true;
                break;
            }
        }
        if (!replaced) out += line;
        if (eol == std::string_view::npos) break;
        out += '\n';
        rest.remove_prefix(eol + 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tagged SOP text
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string_view tag_body(std::string_view text, const std::string& name) {
    const std::string open = "<" + name + ">";
    const std::string close = "</" + name + ">";
    const auto b = text.find(open);
    if (b == std::string_view::npos) throw Error(ErrorKind::MissingTag, name);
    const auto e = text.find(close, b + open.size());
    if (e == std::string_view::npos) throw Error(ErrorKind::MissingTag, "/" + name);
    return text.substr(b + open.size(), e - b - open.size());
}

inline std::map<std::string, std::string> parse_param_json(const std::string& raw) {
    auto j = nlohmann::ordered_json::parse(raw, nullptr, false);
    if (j.is_discarded()) {
        // Models often echo the prompt's own example style with bare keys.
        static const std::regex bare_key(R"(([\{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:)");
        j = nlohmann::ordered_json::parse(std::regex_replace(raw, bare_key, "$1\"$2\":"), nullptr, false);
    }
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::BadParamJson, "input_param is not a JSON object");
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : j.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return out;
}

}  // namespace detail

struct ParsedSop {
    SopTemplate tpl;
    std::vector<SopWarning> warnings;
};

inline ParsedSop parse_sop_response(std::string_view text) {
    const std::string_view sop = detail::tag_body(text, "sop");
    ParsedSop out;
    out.tpl.task = detail::trim(detail::tag_body(sop, "task"));
    out.tpl.inputParams = detail::parse_param_json(detail::trim(detail::tag_body(sop, "input_param")));

    static const std::regex numbered(R"(^\s*(\d+)\.\s?(.*)$)");
    std::string_view body = detail::tag_body(sop, "instructions-step-by-step");
    while (!body.empty()) {
        const auto eol = body.find('\n');
        std::string line(body.substr(0, eol == std::string_view::npos ? body.size() : eol));
        body.remove_prefix(eol == std::string_view::npos ? body.size() : eol + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::smatch m;
        if (std::regex_match(line, m, numbered)) {
            out.tpl.steps.push_back(detail::trim(m[2].str()));
        } else if (!detail::trim(line).empty() && !out.tpl.steps.empty()) {
            out.tpl.steps.back() += "\n" + detail::trim(line);
        }
    }
    if (out.tpl.steps.empty()) throw Error(ErrorKind::EmptySteps, "no numbered steps in <instructions-step-by-step>");
    out.warnings = check_template(out.tpl);
    return out;
}

inline std::string emit_sop_tagged(const SopTemplate& tpl) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : tpl.inputParams) params[k] = v;
    std::string out = "<sop>\n<task>\n" + tpl.task + "\n</task>\n\n<input_param>\n" + params.dump(2) +
                      "\n</input_param>\n\n<instructions-step-by-step>\n";
    for (std::size_t i = 0; i < tpl.steps.size(); ++i) {
        std::string_view step = tpl.steps[i];
        std::string prefix = std::to_string(i + 1) + ". ";
        while (true) {
            const auto nl = step.find('\n');
            out += prefix + std::string(step.substr(0, nl)) + "\n";
            if (nl == std::string_view::npos) break;
            step.remove_prefix(nl + 1);
            prefix = "   ";
        }
    }
    out += "</instructions-step-by-step>\n</sop>\n";
    return out;
}

// ---------------------------------------------------------------------------
// sop.json
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json sop_to_json(const SopTemplate& tpl) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : tpl.inputParams) params[k] = v;
    return {{"task", tpl.task}, {"input_param", params}, {"steps", tpl.steps}};
}

inline SopTemplate sop_from_json(const nlohmann::json& j) {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::MalformedTrace, "sop.json: " + what); };
    if (!j.is_object()) bad("expected object");
    SopTemplate tpl;
    if (!j.contains("task") || !j["task"].is_string()) bad("task must be a string");
    tpl.task = j["task"].get<std::string>();
    if (j.contains("input_param")) {
        if (!j["input_param"].is_object()) throw Error(ErrorKind::BadParamJson, "input_param must be an object");
        for (const auto& [k, v] : j["input_param"].items()) tpl.inputParams[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    if (!j.contains("steps") || !j["steps"].is_array()) bad("steps must be an array");
    for (const auto& s : j["steps"]) {
        if (!s.is_string()) bad("steps must be strings");
        tpl.steps.push_back(s.get<std::string>());
    }
    if (tpl.steps.empty()) throw Error(ErrorKind::EmptySteps, "sop.json has no steps");
    return tpl;
}

/// Accepts either sop.json or the tagged text form.
inline SopTemplate load_sop(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    const std::string head = detail::trim(text.substr(0, 64));
    if (!head.empty() && head.front() == '{') {
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorKind::MalformedTrace, path.string() + ": not valid JSON");
        return sop_from_json(j);
    }
    return parse_sop_response(text).tpl;
}

inline nlohmann::ordered_json instance_to_json(const SopInstance& inst) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : inst.params) params[k] = v;
    return {{"task", inst.task}, {"params", params}, {"steps", inst.steps}};
}

inline SopInstance instance_from_json(const nlohmann::json& j) {
    SopInstance inst;
    try {
        inst.task = j.at("task").get<std::string>();
        inst.steps = j.at("steps").get<std::vector<std::string>>();
        if (j.contains("params")) inst.params = j["params"].get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedTrace, std::string("sop instance: ") + e.what());
    }
    return inst;
}

// ---------------------------------------------------------------------------
// Locator hints
//
// Offline SOP steps end with ` @locate{...}` carrying the source step index
// and the recorded selector groups, so the simulator can find the element
// without a model.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kLocateMarker = " @locate";

struct LocatorHint {
    std::size_t stepIndex = 0;
    std::vector<SelectorGroup> selectors;
};

inline std::string format_locator(const RecordedStep& step) {
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const auto& g : step.selectors) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& s : g) arr.push_back(s.raw());
        groups.push_back(std::move(arr));
    }
    return std::string(kLocateMarker) + nlohmann::ordered_json{{"step", step.sourceIndex}, {"selectors", groups}}.dump();
}

/// Splits a step into its human text and optional locator hint.
inline std::pair<std::string, std::optional<LocatorHint>> split_locator(const std::string& step) {
    const auto at = step.rfind(kLocateMarker);
    if (at == std::string::npos) return {step, std::nullopt};
    auto j = nlohmann::json::parse(step.substr(at + kLocateMarker.size()), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("step") || !j["step"].is_number_unsigned()) return {step, std::nullopt};
    LocatorHint hint;
    hint.stepIndex = j["step"].get<std::size_t>();
    try {
        for (const auto& g : j.value("selectors", nlohmann::json::array())) {
            SelectorGroup group;
            for (const auto& s : g) group.push_back(parse_selector(s.get<std::string>()));
            if (!group.empty()) hint.selectors.push_back(std::move(group));
        }
    } catch (const std::exception&) {
        return {step, std::nullopt};
    }
    return {step.substr(0, at), std::move(hint)};
}

// ---------------------------------------------------------------------------
// Offline generator
// ---------------------------------------------------------------------------

namespace detail {

inline std::string slugify(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!out.empty() && out.back() != '_') {
            out += '_';
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    if (out.empty() || !std::isalpha(static_cast<unsigned char>(out.front()))) out = "param_" + out;
    if (out.back() == '_') out.pop_back();
    return out;
}

inline bool contains_word(std::string_view haystack, std::string_view word) {
    if (word.empty()) return false;
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (auto pos = haystack.find(word); pos != std::string_view::npos; pos = haystack.find(word, pos + 1)) {
        const bool left = pos == 0 || !is_word(haystack[pos - 1]);
        const std::size_t end = pos + word.size();
        const bool right = end == haystack.size() || !is_word(haystack[end]);
        if (left && right) return true;
    }
    return false;
}

inline std::string human_label(const RecordedStep& step) {
    for (const auto& g : step.selectors) {
        for (const auto& s : g) {
            if (s.scheme != SelectorScheme::Aria) continue;
            const AriaQuery q = parse_aria(s.body);
            if (!q.name.empty()) return q.name;
        }
    }
    for (const auto& g : step.selectors) {
        for (const auto& s : g) {
            if (s.scheme == SelectorScheme::Text) return collapse_whitespace(s.body);
        }
    }
    const ElementQuery q = recorded_element(step);
    std::string label = q.tag.value_or("element");
    static const std::vector<std::string> ranking{"data-testid", "aria-label", "name", "role", "type",
                                                  "id", "placeholder", "title", "href"};
    for (const auto& key : ranking) {
        auto it = q.attributes.find(key);
        if (it != q.attributes.end()) return label + "[" + key + "=\"" + it->second + "\"]";
    }
    if (!q.attributes.empty()) {
        const auto& [k, v] = *q.attributes.begin();
        return label + "[" + k + "=\"" + v + "\"]";
    }
    return label;
}

}  // namespace detail

/// Deterministic SOP built straight from the filtered recording. Typed
/// values that also occur in the example task text become parameters.
inline SopTemplate generate_fallback_sop(const TaskDefinition& task, const DemoRecording& rec) {
    const auto nav = std::find_if(rec.steps.begin(), rec.steps.end(), [](const RecordedStep& s) { return s.kind == StepKind::Navigate; });
    if (nav == rec.steps.end()) throw Error(ErrorKind::NoNavigationStep, "recording has no navigate step");

    SopTemplate tpl;
    tpl.task = task.generalDescription.empty() ? task.exampleDescription : task.generalDescription;
    tpl.steps.push_back("Navigate to " + *nav->url);

    std::map<std::string, std::string> lifted;  // literal -> parameter name
    auto lift = [&](const std::string& literal, const std::string& label) {
        if (auto it = lifted.find(literal); it != lifted.end()) return it->second;
        std::string base = detail::slugify(label);
        std::string name = base;
        for (int n = 2; tpl.inputParams.count(name); ++n) name = base + "_" + std::to_string(n);
        tpl.inputParams[name] = "Value entered into '" + label + "' (example: " + literal + ")";
        lifted[literal] = name;
        return name;
    };
    auto parameterize = [&](const std::string& value, const std::string& label) {
        const std::string& example = task.exampleDescription;
        if (detail::contains_word(example, value)) return "<" + lift(value, label) + ">";
        std::string out;
        std::size_t i = 0;
        while (i < value.size()) {
            if (!std::isalnum(static_cast<unsigned char>(value[i]))) {
                out += value[i++];
                continue;
            }
            std::size_t j = i;
            while (j < value.size() && std::isalnum(static_cast<unsigned char>(value[j]))) ++j;
            const std::string token = value.substr(i, j - i);
            out += token.size() >= 3 && detail::contains_word(example, token) ? "<" + lift(token, label) + ">" : token;
            i = j;
        }
        return out;
    };

    for (auto it = rec.steps.begin(); it != rec.steps.end(); ++it) {
        const RecordedStep& step = *it;
        switch (step.kind) {
        case StepKind::Navigate:
            if (it != nav) tpl.steps.push_back("Navigate to " + *step.url);
            break;
        case StepKind::Click:
            tpl.steps.push_back("Click on the element '" + detail::human_label(step) + "'" + format_locator(step));
            break;
        case StepKind::Change: {
            const std::string label = detail::human_label(step);
            tpl.steps.push_back("Enter '" + parameterize(*step.value, label) + "' into '" + label + "'" + format_locator(step));
            break;
        }
        case StepKind::Keypress:
            if (step.value) tpl.steps.push_back("Press the '" + *step.value + "' key");
            break;
        case StepKind::SetViewport:
        case StepKind::Scroll:
        case StepKind::Other:
            break;
        }
    }
    return tpl;
}

/// Provider path: prompt, complete, parse.
inline ParsedSop generate_sop_with_provider(const TaskDefinition& task, const DemoRecording& rec,
                                            const std::function<std::string(const std::string&)>& complete) {
    return parse_sop_response(complete(build_prompt(task, rec)));
}

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

struct InstantiateResult {
    SopInstance instance;
    std::vector<SopWarning> warnings;
};

inline InstantiateResult instantiate(const SopTemplate& tpl, const std::map<std::string, std::string>& params, bool strict) {
    for (const auto& [k, v] : params) {
        if (v.empty()) throw Error(ErrorKind::PreconditionViolated, "parameter '" + k + "' has an empty value");
    }
    static const std::regex re("<([A-Za-z][A-Za-z0-9_]*)>");
    std::set<std::string> used;
    std::vector<std::string> unresolved;
    auto substitute = [&](const std::string& text) {
        std::string out;
        auto last = text.cbegin();
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
            const auto& m = *it;
            out.append(last, m[0].first);
            const std::string name = m[1].str();
            if (auto p = params.find(name); p != params.end()) {
                out += p->second;
                used.insert(name);
            } else {
                out += m[0].str();
                if (std::find(unresolved.begin(), unresolved.end(), name) == unresolved.end()) unresolved.push_back(name);
            }
            last = m[0].second;
        }
        out.append(last, text.cend());
        return out;
    };

    InstantiateResult res;
    res.instance.task = substitute(tpl.task);
    for (const auto& s : tpl.steps) res.instance.steps.push_back(substitute(s));
    res.instance.params = params;

    for (const auto& name : unresolved) {
        if (strict) throw Error(ErrorKind::UnresolvedPlaceholder, name);
        res.warnings.push_back({SopWarningKind::UnresolvedPlaceholder, name});
    }
    for (const auto& [name, _] : params) {
        if (used.count(name)) continue;
        if (strict) throw Error(ErrorKind::UnusedParam, name);
        res.warnings.push_back({SopWarningKind::UnusedParam, name});
    }
    return res;
}

}  // namespace tracesmith
