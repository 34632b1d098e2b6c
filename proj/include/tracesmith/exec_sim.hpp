#pragma once

// Offline stand-in for the browser: runs an SOP instance over a fixture site
// (HTML snapshots plus a transition table) and emits an execution trace.
// Also produces perturbed variants of traces for consistency testing.

#include <tracesmith/dom_snapshot.hpp>
#include <tracesmith/element_signer.hpp>
#include <tracesmith/error.hpp>
#include <tracesmith/hash.hpp>
#include <tracesmith/io.hpp>
#include <tracesmith/recorder_ingest.hpp>
#include <tracesmith/sop_engine.hpp>
#include <tracesmith/trace_model.hpp>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace tracesmith {

/// Simulation failure tied to one SOP step.
class SimulationError : public Error {
public:
    SimulationError(ErrorKind kind, std::size_t step, const std::string& detail)
        : Error(kind, "step " + std::to_string(step) + ": " + detail), stepIndex(step) {}
    std::size_t stepIndex;
};

struct AttributeMatch {
    std::optional<std::string> tag;
    AttributeMap attrs;
};

using TransitionMatch = std::variant<AttributeMatch, Selector>;

struct Transition {
    std::string page;
    TransitionMatch match;
    Action action = Action::Click;
    std::optional<std::string> value;
    std::string next;
};

struct FixtureSite {
    std::map<std::string, std::filesystem::path> pages;
    std::map<std::string, Snapshot> snapshots;
    std::string initial;
    std::vector<Transition> transitions;
};

/// URL a page declares through `data-url` on its root element.
inline std::optional<std::string> page_url(const Snapshot& snap) {
    if (snap.empty()) return std::nullopt;
    const Element& root = snap.root();
    if (const std::string* u = root.attr("data-url")) return *u;
    if (root.tag == "#document") {
        for (std::size_t c : root.children) {
            if (const std::string* u = snap.at(c).attr("data-url")) return *u;
        }
    }
    return std::nullopt;
}

inline void validate_site(const FixtureSite& site) {
    if (!site.pages.count(site.initial)) throw Error(ErrorKind::InvalidSite, "initial page '" + site.initial + "' is not a page");
    for (std::size_t i = 0; i < site.transitions.size(); ++i) {
        const auto& t = site.transitions[i];
        if (!site.pages.count(t.page)) throw Error(ErrorKind::InvalidSite, "transition " + std::to_string(i) + ": unknown page '" + t.page + "'");
        if (!site.pages.count(t.next)) throw Error(ErrorKind::InvalidSite, "transition " + std::to_string(i) + ": unknown next '" + t.next + "'");
    }
}

inline FixtureSite site_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorKind::InvalidSite, "site must be a JSON object");
    FixtureSite site;
    try {
        for (const auto& [id, rel] : j.at("pages").items()) site.pages[id] = base_dir / rel.get<std::string>();
        site.initial = j.at("initial").get<std::string>();
        for (const auto& t : j.at("transitions")) {
            Transition tr;
            tr.page = t.at("page").get<std::string>();
            tr.next = t.at("next").get<std::string>();
            const auto verb = parse_action(t.at("action").get<std::string>());
            if (!verb) throw Error(ErrorKind::InvalidSite, "unknown action '" + t.at("action").get<std::string>() + "'");
            tr.action = *verb;
            if (t.contains("value") && !t["value"].is_null()) tr.value = t["value"].get<std::string>();
            const auto& m = t.at("match");
            if (m.contains("selector")) {
                tr.match = parse_selector(m["selector"].get<std::string>());
            } else {
                AttributeMatch am;
                if (m.contains("tag") && !m["tag"].is_null()) am.tag = m["tag"].get<std::string>();
                am.attrs = m.value("attrs", AttributeMap{});
                if (am.attrs.empty() && !am.tag) throw Error(ErrorKind::InvalidSite, "transition match is empty");
                tr.match = std::move(am);
            }
            site.transitions.push_back(std::move(tr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidSite, e.what());
    }
    validate_site(site);
    for (const auto& [id, path] : site.pages) site.snapshots.emplace(id, load_snapshot(path));
    return site;
}

inline FixtureSite load_site(const std::filesystem::path& path) {
    auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::InvalidSite, path.string() + ": not JSON");
    return site_from_json(j, path.parent_path());
}

inline bool transition_matches(const Snapshot& snap, std::size_t el, const TransitionMatch& match) {
    if (const auto* am = std::get_if<AttributeMatch>(&match)) return element_matches(snap.at(el), am->attrs, am->tag);
    const auto hits = resolve_selector(snap, std::get<Selector>(match));
    return std::find(hits.begin(), hits.end(), el) != hits.end();
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

namespace detail {

struct StepIntent {
    Action verb = Action::Click;
    bool needsElement = true;
    bool keypress = false;
    std::optional<std::string> value;
};

inline std::optional<StepIntent> intent_of(const std::string& text, bool has_hint) {
    static const std::regex enter(R"(^Enter '([\s\S]*)' into '[\s\S]*'$)");
    static const std::regex press(R"(^Press the '([\s\S]*)' key$)");
    std::smatch m;
    if (std::regex_match(text, m, enter)) return StepIntent{Action::Type, true, false, m[1].str()};
    if (std::regex_match(text, m, press)) return StepIntent{Action::Type, true, true, m[1].str()};
    if (text.rfind("Scroll", 0) == 0) return StepIntent{Action::Scroll, false, false, std::nullopt};
    if (text.rfind("Extract", 0) == 0 && !has_hint) return StepIntent{Action::Extract, false, false, std::nullopt};
    if (text.rfind("Select", 0) == 0 || text.rfind("Click", 0) == 0 || has_hint) return StepIntent{Action::Click, true, false, std::nullopt};
    return std::nullopt;
}

}  // namespace detail

/// Executes `sop` step by step. Targets resolve through the signature
/// config, then the selectors carried in the step's locator hint, then
/// attribute overlap with the recorded element.
inline ExecutionTrace run(const SopInstance& sop, const FixtureSite& site, const SignatureConfig* config = nullptr,
                          const StabilityPolicy& policy = {}) {
    validate_site(site);
    ExecutionTrace trace;
    trace.taskId = config && !config->taskId.empty() ? config->taskId : detail::slugify(sop.task);
    std::string page = site.initial;
    std::optional<std::size_t> last_element;

    for (std::size_t i = 0; i < sop.steps.size(); ++i) {
        auto [text, hint] = split_locator(sop.steps[i]);
        const Snapshot& snap = site.snapshots.at(page);

        static constexpr std::string_view kNav = "Navigate to ";
        if (text.rfind(kNav, 0) == 0) {
            const std::string url = detail::trim(text.substr(kNav.size()));
            auto target = std::find_if(site.snapshots.begin(), site.snapshots.end(),
                                       [&](const auto& kv) { return page_url(kv.second) == url; });
            if (target == site.snapshots.end()) throw Error(ErrorKind::BadNavigation, url);
            page = target->first;
            last_element.reset();
            trace.steps.push_back({text, Action::Navigate, {{"url", url}}});
            continue;
        }

        const auto intent = detail::intent_of(text, hint.has_value());
        if (!intent) throw SimulationError(ErrorKind::ElementUnresolvable, i, "no way to locate a target for '" + text + "'");
        if (!intent->needsElement) {
            trace.steps.push_back({text, intent->verb, {}});
            continue;
        }

        std::optional<std::size_t> el;
        const ElementSignature* sig = nullptr;
        if (hint && config) {
            if (auto it = config->entries.find(hint->stepIndex); it != config->entries.end()) {
                sig = &it->second;
                const auto m = count_matches(snap, sig->attrs, sig->tag);
                if (m.count == 1) el = m.first;
            }
        }
        if (!el && hint) el = resolve_unique(snap, hint->selectors);
        if (!el && hint) {
            RecordedStep probe;
            probe.selectors = hint->selectors;
            const ElementQuery recorded = recorded_element(probe);
            if (recorded.tag || !recorded.attributes.empty()) {
                const auto ranked = rank_by_overlap(snap, recorded);
                if (!ranked.empty() && ranked.front().score >= kOverlapAcceptance) el = ranked.front().index;
            }
        }
        if (!el && intent->keypress) el = last_element;
        if (!el) throw SimulationError(ErrorKind::ElementUnresolvable, i, "'" + text + "' not found on page '" + page + "'");

        Action verb = intent->verb;
        if (verb == Action::Click && snap.at(*el).tag == "select") verb = Action::Select;

        const auto tr = std::find_if(site.transitions.begin(), site.transitions.end(), [&](const Transition& t) {
            if (t.page != page || t.action != verb) return false;
            if (t.value && t.value != intent->value) return false;
            return transition_matches(snap, *el, t.match);
        });
        if (tr == site.transitions.end()) {
            throw SimulationError(ErrorKind::NoTransition, i, "no transition for " + std::string(to_string(verb)) + " on page '" + page + "'");
        }

        trace.steps.push_back({text, verb, sig ? sig->attrs : stable_attributes(snap.at(*el), policy)});
        last_element = tr->next == page ? el : std::nullopt;
        page = tr->next;
    }
    trace.meta["finalPage"] = page;
    return trace;
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

enum class PerturbationKind { InsertScroll, DuplicateClick, MergeClickType, DropStep, ChangeAction, ChangeGoal, MutateAttrs };

inline constexpr PerturbationKind kNonCriticalKinds[] = {PerturbationKind::InsertScroll, PerturbationKind::DuplicateClick,
                                                         PerturbationKind::MergeClickType};
inline constexpr PerturbationKind kCriticalKinds[] = {PerturbationKind::DropStep, PerturbationKind::ChangeAction,
                                                      PerturbationKind::ChangeGoal, PerturbationKind::MutateAttrs};

inline std::string_view to_string(PerturbationKind k) {
    switch (k) {
    case PerturbationKind::InsertScroll: return "insert_scroll";
    case PerturbationKind::DuplicateClick: return "duplicate_click";
    case PerturbationKind::MergeClickType: return "merge_click_type";
    case PerturbationKind::DropStep: return "drop_step";
    case PerturbationKind::ChangeAction: return "change_action";
    case PerturbationKind::ChangeGoal: return "change_goal";
    case PerturbationKind::MutateAttrs: return "mutate_attrs";
    }
    return "?";
}

inline std::optional<PerturbationKind> parse_perturbation(std::string_view s) {
    for (auto k : {PerturbationKind::InsertScroll, PerturbationKind::DuplicateClick, PerturbationKind::MergeClickType,
                   PerturbationKind::DropStep, PerturbationKind::ChangeAction, PerturbationKind::ChangeGoal,
                   PerturbationKind::MutateAttrs}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

inline bool is_critical(PerturbationKind k) {
    return std::find(std::begin(kCriticalKinds), std::end(kCriticalKinds), k) != std::end(kCriticalKinds);
}

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::InsertScroll;
    std::optional<std::size_t> position;  // nullopt: seeded draw among eligible positions
    std::uint64_t seed = 0;
};

namespace detail {

inline bool click_type_pair(const ExecutionTrace& tr, std::size_t i) {
    return i + 1 < tr.steps.size() && tr.steps[i].action == Action::Click && tr.steps[i + 1].action == Action::Type &&
           tr.steps[i].attributes == tr.steps[i + 1].attributes;
}

// Stack reduction behind functional_form. Returns the surviving source
// indices; `absorbed[i]` marks survivors a later repeat collapsed into.
// The rewrite rules are confluent, so greedy is enough.
inline std::vector<std::size_t> reduce(const ExecutionTrace& tr, std::vector<bool>* absorbed = nullptr) {
    const auto& s = tr.steps;
    std::vector<std::size_t> out;
    if (absorbed) absorbed->assign(s.size(), false);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].action == Action::Scroll) continue;
        if (s[i].action == Action::Type) {
            while (!out.empty() && s[out.back()].action == Action::Click && s[out.back()].attributes == s[i].attributes) out.pop_back();
        }
        if (!out.empty() && s[out.back()] == s[i]) {
            if (absorbed) (*absorbed)[out.back()] = true;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

// Steps that show up once and unshared in the functional form.
inline std::vector<bool> load_bearing(const ExecutionTrace& tr) {
    std::vector<bool> absorbed;
    std::vector<bool> out(tr.steps.size(), false);
    for (std::size_t i : reduce(tr, &absorbed)) out[i] = !absorbed[i];
    return out;
}

/// Positions where `kind` applies. Critical kinds only touch load-bearing
/// steps, so the change cannot vanish under the functional form.
inline std::vector<std::size_t> eligible_positions(const ExecutionTrace& tr, PerturbationKind kind) {
    std::vector<std::size_t> out;
    const std::size_t n = tr.steps.size();
    const std::size_t limit = kind == PerturbationKind::InsertScroll ? n + 1 : n;
    const auto bearing = is_critical(kind) ? load_bearing(tr) : std::vector<bool>{};
    for (std::size_t i = 0; i < limit; ++i) {
        bool ok = true;
        switch (kind) {
        case PerturbationKind::InsertScroll: break;
        case PerturbationKind::DuplicateClick: ok = tr.steps[i].action == Action::Click; break;
        case PerturbationKind::MergeClickType: ok = click_type_pair(tr, i); break;
        case PerturbationKind::DropStep:
        case PerturbationKind::ChangeAction:
        case PerturbationKind::ChangeGoal:
        case PerturbationKind::MutateAttrs: ok = bearing[i]; break;
        }
        if (ok) out.push_back(i);
    }
    return out;
}

inline const std::vector<std::string>& off_task_goals() {
    static const std::vector<std::string> goals{
        "Open the account settings page",
        "Click on the element 'Sign out'",
        "Enter 'test' into 'Feedback'",
        "Dismiss the notification banner",
        "Open the help center",
        "Click on the element 'Change language'",
        "Download the monthly report",
        "Return to the previous page",
    };
    return goals;
}

inline std::string random_token(std::mt19937_64& rng) {
    static constexpr std::string_view consonants = "bcdfghklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    std::string out;
    for (int i = 0; i < 3; ++i) {
        out += consonants[rng() % consonants.size()];
        out += vowels[rng() % vowels.size()];
    }
    return out;
}

}  // namespace detail

/// Applies exactly one mutation. Equal (trace, spec) give equal output.
inline ExecutionTrace perturb(const ExecutionTrace& tr, const PerturbationSpec& spec) {
    if (tr.steps.size() < 2) throw Error(ErrorKind::TraceTooShort, "perturbation needs at least 2 steps");
    const auto eligible = detail::eligible_positions(tr, spec.kind);
    if (eligible.empty()) {
        throw Error(ErrorKind::PreconditionViolated, std::string(to_string(spec.kind)) + ": no eligible position in the trace");
    }
    std::mt19937_64 rng(spec.seed);
    std::size_t pos;
    if (spec.position) {
        pos = *spec.position;
        if (std::find(eligible.begin(), eligible.end(), pos) == eligible.end()) {
            throw Error(ErrorKind::PreconditionViolated, std::string(to_string(spec.kind)) + ": position " + std::to_string(pos) + " not eligible");
        }
    } else {
        pos = eligible[rng() % eligible.size()];
    }

    ExecutionTrace out = tr;
    auto& steps = out.steps;
    switch (spec.kind) {
    case PerturbationKind::InsertScroll: {
        const std::string goal = tr.steps[std::min(pos, tr.steps.size() - 1)].goal;
        steps.insert(steps.begin() + static_cast<std::ptrdiff_t>(pos), StepFeature{goal, Action::Scroll, {}});
        break;
    }
    case PerturbationKind::DuplicateClick:
        steps.insert(steps.begin() + static_cast<std::ptrdiff_t>(pos) + 1, tr.steps[pos]);
        break;
    case PerturbationKind::MergeClickType:
        steps[pos + 1].attributes = steps[pos].attributes;
        steps.erase(steps.begin() + static_cast<std::ptrdiff_t>(pos));
        break;
    case PerturbationKind::DropStep:
        steps.erase(steps.begin() + static_cast<std::ptrdiff_t>(pos));
        break;
    case PerturbationKind::ChangeAction: {
        std::vector<Action> others;
        for (Action a : kAllActions) {
            if (a != steps[pos].action) others.push_back(a);
        }
        steps[pos].action = others[rng() % others.size()];
        break;
    }
    case PerturbationKind::ChangeGoal: {
        std::vector<std::string> pool;
        for (const auto& g : detail::off_task_goals()) {
            if (std::none_of(tr.steps.begin(), tr.steps.end(), [&](const StepFeature& s) { return s.goal == g; })) pool.push_back(g);
        }
        if (pool.empty()) pool.push_back(steps[pos].goal + " (elsewhere)");
        steps[pos].goal = pool[rng() % pool.size()];
        break;
    }
    case PerturbationKind::MutateAttrs:
        if (steps[pos].attributes.empty()) {
            steps[pos].attributes["data-testid"] = detail::random_token(rng);
        } else {
            for (auto& [k, v] : steps[pos].attributes) {
                std::string next;
                do next = detail::random_token(rng);
                while (next == v);
                v = next;
            }
        }
        break;
    }
    out.meta["perturbation"] = std::string(to_string(spec.kind));
    out.meta["position"] = std::to_string(pos);
    out.meta["seed"] = std::to_string(spec.seed);
    return out;
}

/// Normal form used to tell functionally equivalent traces apart from
/// deviating ones without an embedder: scrolls removed, adjacent repeats
/// collapsed, and a click followed by a type on the same target folded into
/// the type step.
inline std::vector<StepFeature> functional_form(const ExecutionTrace& tr) {
    std::vector<StepFeature> out;
    for (std::size_t i : detail::reduce(tr)) out.push_back(tr.steps[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

struct NamedTrace {
    std::string name;
    ExecutionTrace trace;
};

struct SuitePair {
    std::string a;
    std::string b;
    bool similar = true;
};

struct Suite {
    std::vector<NamedTrace> traces;
    std::vector<SuitePair> pairs;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Every base trace gets n non-critical variants paired as similar and n
/// critical variants paired as dissimilar. Kinds rotate within each class;
/// a kind with no eligible position yields to the next one.
inline Suite generate_suite(const std::vector<NamedTrace>& base, std::size_t n, std::uint64_t seed) {
    if (base.empty()) throw Error(ErrorKind::PreconditionViolated, "suite needs at least one base trace");
    Suite suite;
    for (std::size_t b = 0; b < base.size(); ++b) {
        suite.traces.push_back(base[b]);
        for (int critical = 0; critical < 2; ++critical) {
            const PerturbationKind* kinds = critical ? kCriticalKinds : kNonCriticalKinds;
            const std::size_t nkinds = critical ? std::size(kCriticalKinds) : std::size(kNonCriticalKinds);
            for (std::size_t v = 0; v < n; ++v) {
                const std::uint64_t s = detail::splitmix64(seed ^ detail::splitmix64((b << 32) ^ (v << 1) ^ static_cast<std::uint64_t>(critical)));
                std::optional<ExecutionTrace> variant;
                for (std::size_t k = 0; k < nkinds && !variant; ++k) {
                    const PerturbationKind kind = kinds[(v + k) % nkinds];
                    if (detail::eligible_positions(base[b].trace, kind).empty()) continue;
                    variant = perturb(base[b].trace, {kind, std::nullopt, s});
                }
                if (!variant) throw Error(ErrorKind::PreconditionViolated, "base trace '" + base[b].name + "' admits no perturbation");
                const std::string name = base[b].name + (critical ? "_crit_" : "_sim_") + std::to_string(v);
                suite.traces.push_back({name, std::move(*variant)});
                suite.pairs.push_back({base[b].name, name, critical == 0});
            }
        }
    }
    return suite;
}

/// Writes traces next to the JSON lines file, under `<stem>_traces/`.
inline void write_suite(const Suite& suite, const std::filesystem::path& pairs_file) {
    const std::string dir_name = pairs_file.stem().string() + "_traces";
    const auto dir = pairs_file.parent_path() / dir_name;
    std::filesystem::create_directories(dir);
    for (const auto& t : suite.traces) save_trace(dir / (t.name + ".json"), t.trace);
    std::string lines;
    for (const auto& p : suite.pairs) {
        nlohmann::ordered_json j;
        j["a"] = dir_name + "/" + p.a + ".json";
        j["b"] = dir_name + "/" + p.b + ".json";
        j["label"] = p.similar ? "similar" : "dissimilar";
        lines += j.dump() + "\n";
    }
    io::write_file_atomic(pairs_file, lines);
}

}  // namespace tracesmith
