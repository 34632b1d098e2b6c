#pragma once

// Offline page snapshots: a lenient HTML parser, the selector subset used by
// recorder exports (CSS, XPath, ARIA, text, pierce), attribute-match counting
// and overlap-ranked candidate retrieval.

#include <tracesmith/error.hpp>
#include <tracesmith/io.hpp>
#include <tracesmith/trace_model.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tracesmith {

inline constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

struct Element {
    std::string tag;
    AttributeMap attributes;
    /// Concatenated text of this element's own text nodes.
    std::string text;
    std::vector<std::size_t> children;
    std::size_t parent = kNoParent;
    std::size_t index = 0;

    const std::string* attr(const std::string& key) const {
        auto it = attributes.find(key);
        return it == attributes.end() ? nullptr : &it->second;
    }
};

/// Tag plus attributes; what a recording or a provider knows about an element.
struct ElementQuery {
    std::optional<std::string> tag;
    AttributeMap attributes;
};

class Snapshot {
public:
    Snapshot() = default;
    Snapshot(std::vector<Element> elements, std::string source_path)
        : elements_(std::move(elements)), sourcePath_(std::move(source_path)) {}

    /// Elements in document order; index 0 is the root.
    const std::vector<Element>& elements() const { return elements_; }
    const Element& root() const { return elements_.front(); }
    const Element& at(std::size_t i) const { return elements_.at(i); }
    std::size_t size() const { return elements_.size(); }
    bool empty() const { return elements_.empty(); }
    const std::string& sourcePath() const { return sourcePath_; }

    bool is_descendant(std::size_t node, std::size_t ancestor) const {
        for (std::size_t p = elements_[node].parent; p != kNoParent; p = elements_[p].parent) {
            if (p == ancestor) return true;
        }
        return false;
    }

    /// Text of the element and all its descendants, in document order.
    std::string text_content(std::size_t i) const {
        std::string out = elements_[i].text;
        for (std::size_t c : elements_[i].children) out += text_content(c);
        return out;
    }

private:
    std::vector<Element> elements_;
    std::string sourcePath_;
};

namespace detail {

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
        } else {
            if (pending) out += ' ';
            pending = false;
            out += c;
        }
    }
    return out;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

inline std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out += s[i];
            continue;
        }
        const auto semi = s.find(';', i);
        if (semi == std::string_view::npos || semi - i > 10) {
            out += '&';
            continue;
        }
        const std::string_view name = s.substr(i + 1, semi - i - 1);
        if (name == "amp") out += '&';
        else if (name == "lt") out += '<';
        else if (name == "gt") out += '>';
        else if (name == "quot") out += '"';
        else if (name == "apos") out += '\'';
        else if (name == "nbsp") out += "\xC2\xA0";
        else if (name.size() > 1 && name[0] == '#') {
            std::uint32_t cp = 0;
            bool ok = true;
            const bool hex = name[1] == 'x' || name[1] == 'X';
            for (char c : name.substr(hex ? 2 : 1)) {
                const int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                              : hex && std::isxdigit(static_cast<unsigned char>(c))
                                  ? std::tolower(static_cast<unsigned char>(c)) - 'a' + 10
                                  : -1;
                if (d < 0 || cp > 0x10FFFF) { ok = false; break; }
                cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(d);
            }
            if (!ok) {
                out += '&';
                continue;
            }
            append_utf8(out, cp);
        } else {
            out += '&';
            continue;
        }
        i = semi;
    }
    return out;
}

inline bool is_void_tag(std::string_view tag) {
    static constexpr std::string_view kVoid[] = {"area", "base", "br", "col", "embed", "hr", "img", "input",
                                                 "link", "meta", "param", "source", "track", "wbr"};
    return std::find(std::begin(kVoid), std::end(kVoid), tag) != std::end(kVoid);
}

inline bool closes_same_sibling(std::string_view tag) {
    static constexpr std::string_view kTags[] = {"p", "li", "option", "tr", "td", "th", "dt", "dd"};
    return std::find(std::begin(kTags), std::end(kTags), tag) != std::end(kTags);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

inline Snapshot parse_snapshot(std::string_view html, std::string source_path = {}) {
    using detail::is_space;
    // Node 0 is a virtual document node; dropped when the page has one root.
    std::vector<Element> nodes(1);
    nodes[0].tag = "#document";
    std::vector<std::size_t> open{0};
    const std::size_t n = html.size();
    std::size_t i = 0;

    auto append_text = [&](std::string_view raw) {
        if (open.size() > 1) nodes[open.back()].text += detail::decode_entities(raw);
    };

    while (i < n) {
        if (html[i] != '<') {
            const auto next = html.find('<', i);
            const auto end = next == std::string_view::npos ? n : next;
            append_text(html.substr(i, end - i));
            i = end;
            continue;
        }
        if (html.substr(i, 4) == "<!--") {
            const auto end = html.find("-->", i + 4);
            i = end == std::string_view::npos ? n : end + 3;
            continue;
        }
        if (i + 1 < n && (html[i + 1] == '!' || html[i + 1] == '?')) {
            const auto end = html.find('>', i);
            i = end == std::string_view::npos ? n : end + 1;
            continue;
        }
        if (i + 1 < n && html[i + 1] == '/') {
            std::size_t j = i + 2;
            while (j < n && (std::isalnum(static_cast<unsigned char>(html[j])) || html[j] == '-' || html[j] == ':')) ++j;
            const std::string name = detail::ascii_lower(html.substr(i + 2, j - i - 2));
            const auto end = html.find('>', j);
            i = end == std::string_view::npos ? n : end + 1;
            for (std::size_t k = open.size(); k-- > 1;) {
                if (nodes[open[k]].tag == name) {
                    open.resize(k);
                    break;
                }
            }
            continue;
        }
        if (i + 1 >= n || !std::isalpha(static_cast<unsigned char>(html[i + 1]))) {
            append_text(html.substr(i, 1));
            ++i;
            continue;
        }

        // Start tag.
        std::size_t j = i + 1;
        while (j < n && !is_space(html[j]) && html[j] != '>' && html[j] != '/') ++j;
        Element el;
        el.tag = detail::ascii_lower(html.substr(i + 1, j - i - 1));
        bool self_closing = false;
        while (j < n) {
            while (j < n && is_space(html[j])) ++j;
            if (j >= n) break;
            if (html[j] == '>') { ++j; break; }
            if (html[j] == '/') {
                if (j + 1 < n && html[j + 1] == '>') { self_closing = true; j += 2; break; }
                ++j;
                continue;
            }
            std::size_t k = j;
            while (k < n && !is_space(html[k]) && html[k] != '=' && html[k] != '>' &&
                   !(html[k] == '/' && k + 1 < n && html[k + 1] == '>'))
                ++k;
            std::string key = detail::ascii_lower(html.substr(j, k - j));
            j = k;
            while (j < n && is_space(html[j])) ++j;
            std::string value;
            if (j < n && html[j] == '=') {
                ++j;
                while (j < n && is_space(html[j])) ++j;
                if (j < n && (html[j] == '"' || html[j] == '\'')) {
                    const char q = html[j];
                    const auto close = html.find(q, j + 1);
                    const auto end = close == std::string_view::npos ? n : close;
                    value = detail::decode_entities(html.substr(j + 1, end - j - 1));
                    j = end == n ? n : end + 1;
                } else {
                    std::size_t v = j;
                    while (v < n && !is_space(html[v]) && html[v] != '>') ++v;
                    value = detail::decode_entities(html.substr(j, v - j));
                    j = v;
                }
            }
            if (!key.empty()) el.attributes.emplace(std::move(key), std::move(value));
        }
        i = j;

        if (detail::closes_same_sibling(el.tag) && open.size() > 1 && nodes[open.back()].tag == el.tag) {
            open.pop_back();
        }
        const std::size_t idx = nodes.size();
        el.index = idx;
        el.parent = open.back();
        nodes[open.back()].children.push_back(idx);
        const std::string tag = el.tag;
        nodes.push_back(std::move(el));

        if (self_closing || detail::is_void_tag(tag)) continue;
        if (tag == "script" || tag == "style" || tag == "title" || tag == "textarea") {
            const std::string closer = "</" + tag;
            std::size_t end = i;
            while (true) {
                end = html.find("</", end);
                if (end == std::string_view::npos) { end = n; break; }
                if (detail::ascii_lower(html.substr(end, closer.size())) == closer) break;
                end += 2;
            }
            if (tag == "title" || tag == "textarea") nodes[idx].text += detail::decode_entities(html.substr(i, end - i));
            const auto gt = end == n ? std::string_view::npos : html.find('>', end);
            i = gt == std::string_view::npos ? n : gt + 1;
            continue;
        }
        open.push_back(idx);
    }

    if (nodes.size() == 1) {
        throw Error(ErrorKind::UnparsableSnapshot, "no element found" + (source_path.empty() ? "" : " in " + source_path));
    }
    if (nodes[0].children.size() == 1) {
        // Single real root: drop the virtual document node and shift indices.
        nodes.erase(nodes.begin());
        for (auto& el : nodes) {
            el.index -= 1;
            el.parent = el.parent == 0 ? kNoParent : el.parent - 1;
            for (auto& c : el.children) c -= 1;
        }
    } else {
        nodes[0].parent = kNoParent;
    }
    return Snapshot(std::move(nodes), std::move(source_path));
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
    return parse_snapshot(io::read_file(path), path.string());
}

namespace detail {

inline void escape_html(std::string& out, std::string_view text, bool in_attr) {
    for (char c : text) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (in_attr && c == '"') out += "&quot;";
        else out += c;
    }
}

inline void serialize(const Snapshot& snap, std::size_t i, std::string& out) {
    const Element& el = snap.at(i);
    if (el.tag == "#document") {
        for (std::size_t c : el.children) serialize(snap, c, out);
        return;
    }
    out += '<';
    out += el.tag;
    for (const auto& [k, v] : el.attributes) {
        out += ' ';
        out += k;
        out += "=\"";
        escape_html(out, v, true);
        out += '"';
    }
    out += '>';
    if (is_void_tag(el.tag)) return;
    escape_html(out, el.text, false);
    for (std::size_t c : el.children) serialize(snap, c, out);
    out += "</";
    out += el.tag;
    out += '>';
}

}  // namespace detail

/// Normalized HTML for one element subtree (attributes sorted, own text first).
inline std::string serialize_html(const Snapshot& snap, std::size_t i = 0) {
    std::string out;
    if (!snap.empty()) detail::serialize(snap, i, out);
    return out;
}

// ---------------------------------------------------------------------------
// Attribute matching
// ---------------------------------------------------------------------------

inline bool element_matches(const Element& el, const AttributeMap& attrs, const std::optional<std::string>& tag) {
    if (tag && el.tag != *tag) return false;
    for (const auto& [k, v] : attrs) {
        const std::string* have = el.attr(k);
        if (!have || *have != v) return false;
    }
    return true;
}

struct MatchCount {
    std::size_t count = 0;
    std::optional<std::size_t> first;
};

inline MatchCount count_matches(const Snapshot& snap, const AttributeMap& attrs,
                                const std::optional<std::string>& tag = std::nullopt) {
    MatchCount result;
    for (const auto& el : snap.elements()) {
        if (el.tag == "#document" && !tag) continue;
        if (element_matches(el, attrs, tag)) {
            if (!result.first) result.first = el.index;
            ++result.count;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// CSS subset: tag, #id, .class, [attr], [attr=val], descendant and child
// combinators.
// ---------------------------------------------------------------------------

struct CssAttrCondition {
    std::string name;
    std::optional<std::string> value;
};

struct CssCompound {
    std::optional<std::string> tag;
    std::vector<std::string> ids;
    std::vector<std::string> classes;
    std::vector<CssAttrCondition> attrs;
};

struct CssComplex {
    std::vector<CssCompound> compounds;
    /// combinators[i] joins compounds[i] and compounds[i+1]: ' ' or '>'.
    std::vector<char> combinators;
};

namespace detail {

inline bool is_css_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || static_cast<unsigned char>(c) >= 0x80;
}

inline std::vector<std::string> split_classes(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

inline CssComplex parse_css(std::string_view text) {
    auto unsupported = [&](const std::string& why) -> CssComplex {
        throw Error(ErrorKind::UnsupportedSelector, "css '" + std::string(text) + "': " + why);
    };
    CssComplex out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto skip_ws = [&] {
        bool any = false;
        while (i < n && detail::is_space(text[i])) { ++i; any = true; }
        return any;
    };
    auto ident = [&] {
        const std::size_t s = i;
        while (i < n && detail::is_css_ident_char(text[i])) ++i;
        return std::string(text.substr(s, i - s));
    };
    skip_ws();
    if (i >= n) return unsupported("empty");
    while (true) {
        CssCompound c;
        bool any = false;
        if (i < n && text[i] == '*') {
            ++i;
            any = true;
        } else if (i < n && detail::is_css_ident_char(text[i])) {
            c.tag = detail::ascii_lower(ident());
            any = true;
        }
        while (i < n) {
            if (text[i] == '#') {
                ++i;
                auto id = ident();
                if (id.empty()) return unsupported("empty id");
                c.ids.push_back(std::move(id));
            } else if (text[i] == '.') {
                ++i;
                auto cls = ident();
                if (cls.empty()) return unsupported("empty class");
                c.classes.push_back(std::move(cls));
            } else if (text[i] == '[') {
                ++i;
                skip_ws();
                CssAttrCondition cond;
                cond.name = detail::ascii_lower(ident());
                if (cond.name.empty()) return unsupported("empty attribute name");
                skip_ws();
                if (i < n && text[i] == '=') {
                    ++i;
                    skip_ws();
                    if (i < n && (text[i] == '"' || text[i] == '\'')) {
                        const char q = text[i];
                        const auto close = text.find(q, i + 1);
                        if (close == std::string_view::npos) return unsupported("unterminated string");
                        cond.value = std::string(text.substr(i + 1, close - i - 1));
                        i = close + 1;
                    } else {
                        cond.value = ident();
                    }
                    skip_ws();
                }
                if (i >= n || text[i] != ']') return unsupported("expected ']'");
                ++i;
                c.attrs.push_back(std::move(cond));
            } else {
                break;
            }
            any = true;
        }
        if (!any) return unsupported("expected compound selector at offset " + std::to_string(i));
        out.compounds.push_back(std::move(c));
        const bool ws = skip_ws();
        if (i >= n) break;
        if (text[i] == '>') {
            ++i;
            skip_ws();
            out.combinators.push_back('>');
        } else if (ws) {
            out.combinators.push_back(' ');
        } else {
            return unsupported(std::string("unsupported syntax '") + text[i] + "'");
        }
        if (i >= n) return unsupported("dangling combinator");
    }
    return out;
}

inline bool compound_matches(const Element& el, const CssCompound& c) {
    if (el.tag == "#document") return false;
    if (c.tag && el.tag != *c.tag) return false;
    for (const auto& id : c.ids) {
        const std::string* v = el.attr("id");
        if (!v || *v != id) return false;
    }
    if (!c.classes.empty()) {
        const std::string* v = el.attr("class");
        if (!v) return false;
        const auto have = detail::split_classes(*v);
        for (const auto& cls : c.classes) {
            if (std::find(have.begin(), have.end(), cls) == have.end()) return false;
        }
    }
    for (const auto& cond : c.attrs) {
        const std::string* v = el.attr(cond.name);
        if (!v) return false;
        if (cond.value && *v != *cond.value) return false;
    }
    return true;
}

namespace detail {

inline bool css_matches_from(const Snapshot& snap, std::size_t el, const CssComplex& sel, std::size_t k) {
    if (!compound_matches(snap.at(el), sel.compounds[k])) return false;
    if (k == 0) return true;
    const char comb = sel.combinators[k - 1];
    if (comb == '>') {
        const std::size_t p = snap.at(el).parent;
        return p != kNoParent && css_matches_from(snap, p, sel, k - 1);
    }
    for (std::size_t p = snap.at(el).parent; p != kNoParent; p = snap.at(p).parent) {
        if (css_matches_from(snap, p, sel, k - 1)) return true;
    }
    return false;
}

}  // namespace detail

inline bool css_matches(const Snapshot& snap, std::size_t el, const CssComplex& sel) {
    return detail::css_matches_from(snap, el, sel, sel.compounds.size() - 1);
}

// ---------------------------------------------------------------------------
// XPath subset: absolute location paths of child (/) and descendant (//)
// steps, name or * tests, [n] positions, [@k="v"] and [@k] predicates.
// ---------------------------------------------------------------------------

struct XPathPredicate {
    std::optional<std::size_t> position;
    std::string attr;
    std::optional<std::string> value;
};

struct XPathStep {
    bool descendant = false;
    std::optional<std::string> name;
    std::vector<XPathPredicate> predicates;
};

inline std::vector<XPathStep> parse_xpath(std::string_view text) {
    auto unsupported = [&](const std::string& why) -> std::vector<XPathStep> {
        throw Error(ErrorKind::UnsupportedSelector, "xpath '" + std::string(text) + "': " + why);
    };
    std::vector<XPathStep> steps;
    std::size_t i = 0;
    const std::size_t n = text.size();
    if (n == 0 || text[0] != '/') return unsupported("only absolute paths are supported");
    while (i < n) {
        XPathStep step;
        if (text[i] != '/') return unsupported("expected '/'");
        ++i;
        if (i < n && text[i] == '/') {
            step.descendant = true;
            ++i;
        }
        if (i < n && text[i] == '*') {
            ++i;
        } else {
            const std::size_t s = i;
            while (i < n && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '-' || text[i] == '_' || text[i] == ':')) ++i;
            if (i == s) return unsupported("expected node test at offset " + std::to_string(s));
            step.name = detail::ascii_lower(text.substr(s, i - s));
        }
        while (i < n && text[i] == '[') {
            ++i;
            XPathPredicate pred;
            if (i < n && std::isdigit(static_cast<unsigned char>(text[i]))) {
                std::size_t pos = 0;
                while (i < n && std::isdigit(static_cast<unsigned char>(text[i]))) pos = pos * 10 + static_cast<std::size_t>(text[i++] - '0');
                if (pos == 0) return unsupported("positions start at 1");
                pred.position = pos;
            } else if (i < n && text[i] == '@') {
                ++i;
                const std::size_t s = i;
                while (i < n && detail::is_css_ident_char(text[i])) ++i;
                if (i == s) return unsupported("expected attribute name");
                pred.attr = detail::ascii_lower(text.substr(s, i - s));
                if (i < n && text[i] == '=') {
                    ++i;
                    if (i >= n || (text[i] != '"' && text[i] != '\'')) return unsupported("expected quoted value");
                    const char q = text[i];
                    const auto close = text.find(q, i + 1);
                    if (close == std::string_view::npos) return unsupported("unterminated string");
                    pred.value = std::string(text.substr(i + 1, close - i - 1));
                    i = close + 1;
                }
            } else {
                return unsupported("unsupported predicate");
            }
            if (i >= n || text[i] != ']') return unsupported("expected ']'");
            ++i;
            step.predicates.push_back(std::move(pred));
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

namespace detail {

// Context entries index into a virtual tree where kNoParent stands for the
// document node above the root.
inline std::vector<std::size_t> xpath_children(const Snapshot& snap, std::size_t ctx) {
    if (ctx == kNoParent) {
        std::vector<std::size_t> roots;
        if (snap.root().tag == "#document") return snap.root().children;
        roots.push_back(0);
        return roots;
    }
    return snap.at(ctx).children;
}

inline void xpath_descendant_or_self(const Snapshot& snap, std::size_t ctx, std::vector<std::size_t>& out) {
    out.push_back(ctx);
    for (std::size_t c : xpath_children(snap, ctx)) xpath_descendant_or_self(snap, c, out);
}

}  // namespace detail

inline std::vector<std::size_t> evaluate_xpath(const Snapshot& snap, const std::vector<XPathStep>& steps) {
    std::vector<std::size_t> context{kNoParent};
    for (const auto& step : steps) {
        std::vector<std::size_t> parents;
        if (step.descendant) {
            for (std::size_t c : context) detail::xpath_descendant_or_self(snap, c, parents);
        } else {
            parents = context;
        }
        std::set<std::size_t> next;
        for (std::size_t p : parents) {
            std::vector<std::size_t> candidates;
            for (std::size_t c : detail::xpath_children(snap, p)) {
                if (!step.name || snap.at(c).tag == *step.name) candidates.push_back(c);
            }
            for (const auto& pred : step.predicates) {
                std::vector<std::size_t> kept;
                for (std::size_t k = 0; k < candidates.size(); ++k) {
                    if (pred.position) {
                        if (k + 1 == *pred.position) kept.push_back(candidates[k]);
                    } else {
                        const std::string* v = snap.at(candidates[k]).attr(pred.attr);
                        if (v && (!pred.value || *v == *pred.value)) kept.push_back(candidates[k]);
                    }
                }
                candidates = std::move(kept);
            }
            next.insert(candidates.begin(), candidates.end());
        }
        context.assign(next.begin(), next.end());
    }
    return context;
}

// ---------------------------------------------------------------------------
// Accessibility: explicit or implicit role and a simplified accessible name.
// ---------------------------------------------------------------------------

inline std::string element_role(const Element& el) {
    if (const std::string* r = el.attr("role")) return *r;
    const std::string& t = el.tag;
    if (t == "button") return "button";
    if (t == "a") return el.attr("href") ? "link" : "";
    if (t == "select") return "combobox";
    if (t == "option") return "option";
    if (t == "textarea") return "textbox";
    if (t == "img") return "img";
    if (t == "nav") return "navigation";
    if (t == "dialog") return "dialog";
    if (t == "li") return "listitem";
    if (t == "ul" || t == "ol") return "list";
    if (t.size() == 2 && t[0] == 'h' && t[1] >= '1' && t[1] <= '6') return "heading";
    if (t == "input") {
        const std::string* type = el.attr("type");
        const std::string ty = type ? detail::ascii_lower(*type) : "text";
        if (ty == "checkbox") return "checkbox";
        if (ty == "radio") return "radio";
        if (ty == "button" || ty == "submit" || ty == "reset") return "button";
        if (ty == "search") return "searchbox";
        if (ty == "text" || ty == "email" || ty == "tel" || ty == "url" || ty == "month" || ty == "date") return "textbox";
        return "";
    }
    return "";
}

/// aria-label, else title, else the collapsed text content of role-bearing
/// elements.
inline std::string accessible_name(const Snapshot& snap, std::size_t i) {
    const Element& el = snap.at(i);
    if (const std::string* v = el.attr("aria-label")) return detail::collapse_whitespace(*v);
    if (const std::string* v = el.attr("title")) return detail::collapse_whitespace(*v);
    if (!element_role(el).empty()) return detail::collapse_whitespace(snap.text_content(i));
    return {};
}

struct AriaQuery {
    std::string name;
    std::optional<std::string> role;
};

/// `Name[role="r"]`, either part optional.
inline AriaQuery parse_aria(std::string_view body) {
    AriaQuery q;
    std::string_view rest = body;
    const auto open = body.rfind("[role=");
    if (open != std::string_view::npos && body.ends_with("]")) {
        std::string_view v = body.substr(open + 6, body.size() - open - 7);
        if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
        q.role = std::string(v);
        rest = body.substr(0, open);
    }
    q.name = detail::collapse_whitespace(rest);
    return q;
}

// ---------------------------------------------------------------------------
// Selector resolution
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> resolve_in(const Snapshot& snap, const Selector& sel, std::optional<std::size_t> scope) {
    auto in_scope = [&](std::size_t i) { return !scope || snap.is_descendant(i, *scope); };
    std::vector<std::size_t> out;
    switch (sel.scheme) {
    case SelectorScheme::Css:
    case SelectorScheme::Pierce: {
        const CssComplex css = parse_css(sel.body);
        for (const auto& el : snap.elements()) {
            if (in_scope(el.index) && css_matches(snap, el.index, css)) out.push_back(el.index);
        }
        break;
    }
    case SelectorScheme::XPath: {
        const auto steps = parse_xpath(sel.body);
        for (std::size_t i : evaluate_xpath(snap, steps)) {
            if (in_scope(i)) out.push_back(i);
        }
        break;
    }
    case SelectorScheme::Aria: {
        const AriaQuery q = parse_aria(sel.body);
        if (q.name.empty() && !q.role) throw Error(ErrorKind::UnsupportedSelector, "aria selector without name or role");
        for (const auto& el : snap.elements()) {
            if (el.tag == "#document" || !in_scope(el.index)) continue;
            if (q.role && element_role(el) != *q.role) continue;
            if (!q.name.empty() && accessible_name(snap, el.index) != q.name) continue;
            out.push_back(el.index);
        }
        break;
    }
    case SelectorScheme::Text: {
        const std::string want = collapse_whitespace(sel.body);
        for (const auto& el : snap.elements()) {
            if (el.tag != "#document" && in_scope(el.index) && collapse_whitespace(el.text) == want) out.push_back(el.index);
        }
        break;
    }
    }
    return out;
}

}  // namespace detail

/// Element indices matching `sel`, in document order. Throws
/// UnsupportedSelector for syntax outside the documented subset.
inline std::vector<std::size_t> resolve_selector(const Snapshot& snap, const Selector& sel) {
    return detail::resolve_in(snap, sel, std::nullopt);
}

/// Resolves a recorded selector chain: every selector after the first is
/// evaluated among descendants of the previous matches.
inline std::vector<std::size_t> resolve_group(const Snapshot& snap, const SelectorGroup& group) {
    if (group.empty()) return {};
    std::vector<std::size_t> current = resolve_selector(snap, group.front());
    for (std::size_t k = 1; k < group.size(); ++k) {
        std::set<std::size_t> next;
        for (std::size_t scope : current) {
            for (std::size_t i : detail::resolve_in(snap, group[k], scope)) next.insert(i);
        }
        current.assign(next.begin(), next.end());
    }
    return current;
}

/// First group, in recorded order, that resolves to exactly one element.
/// Groups using unsupported syntax count as non-matches.
inline std::optional<std::size_t> resolve_unique(const Snapshot& snap, const std::vector<SelectorGroup>& groups) {
    for (const auto& group : groups) {
        try {
            const auto hits = resolve_group(snap, group);
            if (hits.size() == 1) return hits.front();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UnsupportedSelector) throw;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Overlap ranking
// ---------------------------------------------------------------------------

inline double attribute_jaccard(const AttributeMap& a, const AttributeMap& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it != b.end() && it->second == v) ++inter;
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double overlap_score(const ElementQuery& recorded, const Element& el) {
    const bool tag_equal = recorded.tag && *recorded.tag == el.tag;
    return 0.8 * attribute_jaccard(recorded.attributes, el.attributes) + (tag_equal ? 0.2 : 0.0);
}

struct RankedElement {
    std::size_t index;
    double score;
};

inline std::vector<RankedElement> rank_by_overlap(const Snapshot& snap, const ElementQuery& recorded) {
    std::vector<RankedElement> out;
    out.reserve(snap.size());
    for (const auto& el : snap.elements()) {
        if (el.tag == "#document") continue;
        out.push_back({el.index, overlap_score(recorded, el)});
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedElement& a, const RankedElement& b) { return a.score > b.score; });
    return out;
}

}  // namespace tracesmith
