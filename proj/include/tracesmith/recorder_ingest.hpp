#pragma once

// Reading, writing and filtering browser-recorder demonstration exports.

#include <tracesmith/dom_snapshot.hpp>
#include <tracesmith/error.hpp>
#include <tracesmith/trace_model.hpp>

#include <json.hpp>

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tracesmith {

namespace detail {

inline StepKind step_kind_from_type(std::string_view type) {
    if (type == "setViewport") return StepKind::SetViewport;
    if (type == "navigate") return StepKind::Navigate;
    if (type == "click") return StepKind::Click;
    if (type == "change") return StepKind::Change;
    if (type == "scroll") return StepKind::Scroll;
    if (type == "keyDown") return StepKind::Keypress;
    return StepKind::Other;
}

[[noreturn]] inline void malformed(const std::string& path, const std::string& what) {
    throw Error(ErrorKind::MalformedRecording, path + ": " + what);
}

}  // namespace detail

inline DemoRecording parse_recording(std::string_view json_text) {
    using nlohmann::ordered_json;
    ordered_json doc = ordered_json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) detail::malformed("$", "not valid JSON");
    if (!doc.is_object()) detail::malformed("$", "expected object");

    DemoRecording rec;
    if (doc.contains("title")) {
        if (!doc["title"].is_string()) detail::malformed("$.title", "expected string");
        rec.title = doc["title"].get<std::string>();
    }
    if (!doc.contains("steps")) detail::malformed("$.steps", "missing");
    const auto& steps = doc["steps"];
    if (!steps.is_array()) detail::malformed("$.steps", "expected array");
    if (steps.empty()) detail::malformed("$.steps", "empty");

    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        const std::string at = "$.steps[" + std::to_string(i) + "]";
        if (!s.is_object()) detail::malformed(at, "expected object");
        if (!s.contains("type") || !s["type"].is_string()) detail::malformed(at + ".type", "expected string");

        RecordedStep step;
        step.sourceIndex = i;
        step.typeName = s["type"].get<std::string>();
        step.kind = detail::step_kind_from_type(step.typeName);
        step.source = s;

        if (s.contains("url")) {
            if (!s["url"].is_string()) detail::malformed(at + ".url", "expected string");
            step.url = s["url"].get<std::string>();
        }
        if (s.contains("value")) {
            if (!s["value"].is_string()) detail::malformed(at + ".value", "expected string");
            step.value = s["value"].get<std::string>();
        } else if (step.kind == StepKind::Keypress && s.contains("key") && s["key"].is_string()) {
            step.value = s["key"].get<std::string>();
        }
        if (s.contains("selectors")) {
            const auto& groups = s["selectors"];
            if (!groups.is_array()) detail::malformed(at + ".selectors", "expected array");
            for (std::size_t g = 0; g < groups.size(); ++g) {
                const std::string gat = at + ".selectors[" + std::to_string(g) + "]";
                SelectorGroup group;
                if (groups[g].is_string()) {
                    group.push_back(parse_selector(groups[g].get<std::string>()));
                } else if (groups[g].is_array()) {
                    for (std::size_t k = 0; k < groups[g].size(); ++k) {
                        if (!groups[g][k].is_string()) detail::malformed(gat + "[" + std::to_string(k) + "]", "expected string");
                        try {
                            group.push_back(parse_selector(groups[g][k].get<std::string>()));
                        } catch (const Error& e) {
                            detail::malformed(gat + "[" + std::to_string(k) + "]", e.detail());
                        }
                    }
                } else {
                    detail::malformed(gat, "expected array or string");
                }
                if (group.empty()) detail::malformed(gat, "empty selector group");
                step.selectors.push_back(std::move(group));
            }
        }
        if (s.contains("offsetX") || s.contains("offsetY")) {
            Offset off;
            if (s.contains("offsetX")) {
                if (!s["offsetX"].is_number()) detail::malformed(at + ".offsetX", "expected number");
                off.x = s["offsetX"].get<double>();
            }
            if (s.contains("offsetY")) {
                if (!s["offsetY"].is_number()) detail::malformed(at + ".offsetY", "expected number");
                off.y = s["offsetY"].get<double>();
            }
            step.offsets = off;
        }
        if (s.contains("assertedEvents")) {
            const auto& events = s["assertedEvents"];
            if (!events.is_array()) detail::malformed(at + ".assertedEvents", "expected array");
            for (std::size_t e = 0; e < events.size(); ++e) {
                const auto& ev = events[e];
                if (!ev.is_object()) detail::malformed(at + ".assertedEvents[" + std::to_string(e) + "]", "expected object");
                if (ev.value("type", "") != "navigation") continue;
                step.assertedNavigations.push_back({ev.value("url", ""), ev.value("title", "")});
            }
        }

        if (step.kind == StepKind::Navigate && !step.url) detail::malformed(at + ".url", "navigate step requires url");
        if (step.kind == StepKind::Change && !step.value) detail::malformed(at + ".value", "change step requires value");
        if (step.interactive() && step.selectors.empty()) detail::malformed(at + ".selectors", "interactive step requires selectors");
        rec.steps.push_back(std::move(step));
    }
    // Written by filtered exports so indices keep pointing at the original demo.
    if (doc.contains("sourceIndices")) {
        const auto& idx = doc["sourceIndices"];
        if (!idx.is_array() || idx.size() != rec.steps.size()) detail::malformed("$.sourceIndices", "expected one index per step");
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (!idx[i].is_number_unsigned()) detail::malformed("$.sourceIndices[" + std::to_string(i) + "]", "expected unsigned integer");
            rec.steps[i].sourceIndex = idx[i].get<std::size_t>();
        }
    }
    return rec;
}

inline nlohmann::ordered_json step_to_json(const RecordedStep& step) {
    using nlohmann::ordered_json;
    ordered_json out = step.source.is_object() ? step.source : ordered_json::object();
    out["type"] = step.typeName.empty() ? std::string(to_string(step.kind)) : step.typeName;
    if (step.url) out["url"] = *step.url;
    if (step.value && step.kind != StepKind::Keypress) out["value"] = *step.value;
    if (!step.selectors.empty() || out.contains("selectors")) {
        ordered_json groups = ordered_json::array();
        for (const auto& g : step.selectors) {
            ordered_json arr = ordered_json::array();
            for (const auto& s : g) arr.push_back(s.raw());
            groups.push_back(std::move(arr));
        }
        out["selectors"] = std::move(groups);
    }
    if (step.offsets) {
        // Keep the source number as written (11 stays 11, not 11.0) when unchanged.
        auto put = [&](const char* key, double v) {
            if (!(out.contains(key) && out[key].is_number() && out[key].get<double>() == v)) out[key] = v;
        };
        put("offsetY", step.offsets->y);
        put("offsetX", step.offsets->x);
    }
    if (!step.assertedNavigations.empty() && !out.contains("assertedEvents")) {
        ordered_json events = ordered_json::array();
        for (const auto& nav : step.assertedNavigations) {
            events.push_back({{"type", "navigation"}, {"url", nav.url}, {"title", nav.title}});
        }
        out["assertedEvents"] = std::move(events);
    }
    return out;
}

inline nlohmann::ordered_json recording_to_json(const DemoRecording& rec, bool keep_indices = false) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& s : rec.steps) steps.push_back(step_to_json(s));
    nlohmann::ordered_json out{{"title", rec.title}, {"steps", std::move(steps)}};
    if (keep_indices) {
        out["sourceIndices"] = nlohmann::ordered_json::array();
        for (const auto& s : rec.steps) out["sourceIndices"].push_back(s.sourceIndex);
    }
    return out;
}

/// Recorder-format JSON, four-space indented like the browser's own export.
/// `keep_indices` adds a top-level sourceIndices array for filtered exports.
inline std::string emit_recording(const DemoRecording& rec, bool keep_indices = false) {
    return recording_to_json(rec, keep_indices).dump(4);
}

/// What the recorded selectors reveal about the target element: tag and
/// attribute values from the last compound of each CSS and XPath selector.
inline ElementQuery recorded_element(const RecordedStep& step) {
    ElementQuery q;
    auto put = [&](const std::string& k, const std::string& v) { q.attributes.emplace(k, v); };
    for (const auto& group : step.selectors) {
        const Selector& sel = group.back();
        try {
            if (sel.scheme == SelectorScheme::Css || sel.scheme == SelectorScheme::Pierce) {
                const CssComplex css = parse_css(sel.body);
                const CssCompound& last = css.compounds.back();
                if (last.tag && !q.tag) q.tag = last.tag;
                if (last.ids.size() == 1) put("id", last.ids.front());
                if (!last.classes.empty()) {
                    std::string joined;
                    for (const auto& c : last.classes) joined += (joined.empty() ? "" : " ") + c;
                    put("class", joined);
                }
                for (const auto& a : last.attrs) {
                    if (a.value) put(a.name, *a.value);
                }
            } else if (sel.scheme == SelectorScheme::XPath) {
                const auto steps = parse_xpath(sel.body);
                const XPathStep& last = steps.back();
                if (last.name && !q.tag) q.tag = last.name;
                for (const auto& p : last.predicates) {
                    if (p.value) put(p.attr, *p.value);
                }
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnsupportedSelector) throw;
        }
    }
    return q;
}

enum class DropReason { Captcha, PopupClose, NonInteractable, ViewportOnly };

inline std::string_view to_string(DropReason r) {
    switch (r) {
    case DropReason::Captcha: return "captcha";
    case DropReason::PopupClose: return "popupClose";
    case DropReason::NonInteractable: return "nonInteractable";
    case DropReason::ViewportOnly: return "viewportOnly";
    }
    return "captcha";
}

struct DroppedStep {
    std::size_t stepIndex;
    DropReason reason;
    friend bool operator==(const DroppedStep&, const DroppedStep&) = default;
};

struct IngestReport {
    /// Kept steps, in source order.
    DemoRecording recording;
    /// Source positions of the kept steps.
    std::vector<std::size_t> keptIndices;
    std::vector<DroppedStep> dropped;
};

namespace detail {

struct ChainLink {
    std::optional<std::string> tag;
    std::string role;
    std::set<std::string> tokens;
};

inline void add_tokens(std::set<std::string>& out, std::string_view text) {
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(cur);
}

inline std::vector<ChainLink> chain_links(const SelectorGroup& group) {
    std::vector<ChainLink> links;
    for (const auto& sel : group) {
        try {
            if (sel.scheme == SelectorScheme::Css || sel.scheme == SelectorScheme::Pierce) {
                for (const auto& c : parse_css(sel.body).compounds) {
                    ChainLink link;
                    link.tag = c.tag;
                    for (const auto& id : c.ids) add_tokens(link.tokens, id);
                    for (const auto& cls : c.classes) add_tokens(link.tokens, cls);
                    for (const auto& a : c.attrs) {
                        if (!a.value) continue;
                        if (a.name == "role") link.role = *a.value;
                        else add_tokens(link.tokens, *a.value);
                    }
                    links.push_back(std::move(link));
                }
            } else if (sel.scheme == SelectorScheme::XPath) {
                for (const auto& st : parse_xpath(sel.body)) {
                    ChainLink link;
                    link.tag = st.name;
                    for (const auto& p : st.predicates) {
                        if (!p.value) continue;
                        if (p.attr == "role") link.role = *p.value;
                        else add_tokens(link.tokens, *p.value);
                    }
                    links.push_back(std::move(link));
                }
            } else if (sel.scheme == SelectorScheme::Aria) {
                const AriaQuery q = parse_aria(sel.body);
                ChainLink link;
                link.role = q.role.value_or("");
                add_tokens(link.tokens, q.name);
                links.push_back(std::move(link));
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnsupportedSelector) throw;
        }
    }
    return links;
}

inline bool is_popup_close(const RecordedStep& step) {
    for (const auto& group : step.selectors) {
        const auto links = chain_links(group);
        if (links.size() < 2) continue;
        const ChainLink& target = links.back();
        const bool button = target.role == "button" || (target.role.empty() && target.tag == "button");
        const bool closing = target.tokens.count("close") || target.tokens.count("dismiss");
        if (!button || !closing) continue;
        for (std::size_t k = 0; k + 1 < links.size(); ++k) {
            if (links[k].role == "dialog" || links[k].role == "alertdialog" || links[k].tag == "dialog") return true;
        }
    }
    return false;
}

inline bool mentions_captcha(const RecordedStep& step) {
    static constexpr std::string_view kTokens[] = {"captcha", "recaptcha", "hcaptcha"};
    auto hit = [](std::string_view text) {
        const std::string low = ascii_lower(text);
        for (auto t : kTokens) {
            if (low.find(t) != std::string::npos) return true;
        }
        return false;
    };
    for (const auto& group : step.selectors) {
        for (const auto& sel : group) {
            if (hit(sel.body)) return true;
        }
    }
    for (const auto& [k, v] : recorded_element(step).attributes) {
        if (hit(k) || hit(v)) return true;
    }
    return false;
}

inline bool targets_page_background(const RecordedStep& step) {
    // Every CSS selector of the step must name bare body/html.
    bool any = false;
    for (const auto& group : step.selectors) {
        const Selector& sel = group.back();
        if (sel.scheme != SelectorScheme::Css && sel.scheme != SelectorScheme::Pierce) continue;
        try {
            const CssComplex css = parse_css(sel.body);
            const CssCompound& last = css.compounds.back();
            if (!(last.tag && (*last.tag == "body" || *last.tag == "html") && last.ids.empty() && last.classes.empty() &&
                  last.attrs.empty()))
                return false;
            any = true;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnsupportedSelector) throw;
            return false;
        }
    }
    return any;
}

}  // namespace detail

/// Drops steps a procedure should not contain: CAPTCHA solving, pop-up
/// dismissal, clicks on the page background, and viewport setup.
inline IngestReport filter_irrelevant(const DemoRecording& rec) {
    IngestReport report;
    report.recording.title = rec.title;
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        const RecordedStep& step = rec.steps[i];
        std::optional<DropReason> reason;
        if (step.kind == StepKind::SetViewport) {
            reason = DropReason::ViewportOnly;
        } else if (detail::mentions_captcha(step)) {
            reason = DropReason::Captcha;
        } else if (step.kind == StepKind::Click && detail::targets_page_background(step)) {
            reason = DropReason::NonInteractable;
        } else if (step.kind == StepKind::Click && detail::is_popup_close(step)) {
            reason = DropReason::PopupClose;
        }
        if (reason) {
            report.dropped.push_back({i, *reason});
        } else {
            report.recording.steps.push_back(step);
            report.keptIndices.push_back(i);
        }
    }
    return report;
}

inline nlohmann::ordered_json ingest_report_to_json(const IngestReport& report) {
    nlohmann::ordered_json dropped = nlohmann::ordered_json::array();
    for (const auto& d : report.dropped) {
        dropped.push_back({{"stepIndex", d.stepIndex}, {"reason", std::string(to_string(d.reason))}});
    }
    return {{"recording", recording_to_json(report.recording)}, {"keptIndices", report.keptIndices}, {"dropped", dropped}};
}

}  // namespace tracesmith
