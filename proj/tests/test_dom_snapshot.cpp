#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tracesmith;

namespace {

Snapshot advsearch() { return load_snapshot(testsupport::data("imdb/a/advsearch.html")); }

}  // namespace

TEST(ParseSnapshot, LowercasesTagsAndKeys) {
    const auto snap = parse_snapshot(R"(<input id="a" TYPE="text">)");
    ASSERT_EQ(snap.size(), 1u);
    EXPECT_EQ(snap.root().tag, "input");
    EXPECT_EQ(snap.root().attributes, (AttributeMap{{"id", "a"}, {"type", "text"}}));
}

TEST(ParseSnapshot, EmptyInputUnparsable) {
    for (const char* html : {"", "   ", "just text", "<!-- only a comment -->"}) {
        try {
            parse_snapshot(html);
            FAIL() << html;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::UnparsableSnapshot);
        }
    }
}

TEST(ParseSnapshot, ToleratesUnclosedTags) {
    const auto snap = parse_snapshot("<div><p>one<p>two<span>x</div><b>tail");
    std::size_t ps = 0;
    for (const auto& el : snap.elements()) ps += el.tag == "p";
    EXPECT_EQ(ps, 2u);
}

TEST(ParseSnapshot, HeaderFixtureHasSearchInput) {
    const auto snap = load_snapshot(testsupport::data("imdb_header.html"));
    const auto hit = count_matches(snap, {{"data-testid", "suggestion-search"}});
    EXPECT_EQ(hit.count, 1u);
    ASSERT_TRUE(hit.first);
    EXPECT_EQ(snap.at(*hit.first).tag, "input");
}

TEST(ParseSnapshot, DocumentOrderIndices) {
    const auto snap = advsearch();
    for (std::size_t i = 0; i < snap.size(); ++i) {
        EXPECT_EQ(snap.at(i).index, i);
        for (std::size_t c : snap.at(i).children) {
            EXPECT_GT(c, i);
            EXPECT_EQ(snap.at(c).parent, i);
        }
    }
}

TEST(CountMatches, TwoTextInputs) {
    const auto snap = parse_snapshot(R"(<form><input type="text"><input type="text"><input type="checkbox"></form>)");
    EXPECT_EQ(count_matches(snap, {{"type", "text"}}).count, 2u);
    EXPECT_EQ(count_matches(snap, {}, std::string("input")).count, 3u);
    EXPECT_EQ(count_matches(snap, {{"type", "text"}}, std::string("form")).count, 0u);
}

TEST(CountMatches, HeaderSignatureUnique) {
    const auto snap = load_snapshot(testsupport::data("imdb_header.html"));
    EXPECT_EQ(count_matches(snap, {{"data-testid", "suggestion-search"}, {"aria-label", "Search IMDb"}}).count, 1u);
    EXPECT_EQ(count_matches(snap, {{"data-testid", "nope"}}).count, 0u);
}

TEST(CountMatches, AntitoneUnderAttributeGrowth) {
    std::mt19937_64 rng(23);
    const auto snap = advsearch();
    std::vector<std::pair<std::string, std::string>> pool;
    for (const auto& el : snap.elements()) {
        for (const auto& kv : el.attributes) pool.push_back(kv);
    }
    ASSERT_FALSE(pool.empty());
    for (int iter = 0; iter < 2000; ++iter) {
        AttributeMap a, ab;
        const std::size_t na = 1 + rng() % 3;
        for (std::size_t k = 0; k < na; ++k) a.insert(pool[rng() % pool.size()]);
        ab = a;
        const std::size_t nb = 1 + rng() % 3;
        for (std::size_t k = 0; k < nb; ++k) ab.insert(pool[rng() % pool.size()]);
        EXPECT_LE(count_matches(snap, ab).count, count_matches(snap, a).count);
    }
}

TEST(ResolveSelector, XPathByTestId) {
    const auto snap = advsearch();
    const auto hits = resolve_selector(snap, parse_selector(R"(xpath///*[@data-testid="releaseYearMonth-start"])"));
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(*snap.at(hits[0]).attr("data-testid"), "releaseYearMonth-start");
}

TEST(ResolveSelector, AriaSeeResults) {
    const auto snap = advsearch();
    const auto hits = resolve_selector(snap, parse_selector("aria/See results"));
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(snap.at(hits[0]).tag, "button");
    EXPECT_EQ(*snap.at(hits[0]).attr("data-testid"), "adv-search-get-results");
}

TEST(ResolveSelector, MissingClassEmpty) {
    EXPECT_TRUE(resolve_selector(advsearch(), parse_selector(".missing")).empty());
}

TEST(ResolveSelector, CssSubset) {
    const auto snap = parse_snapshot(R"(<div id="r"><ul class="a b"><li><a href="#">x</a></li></ul><a class="b">y</a></div>)");
    EXPECT_EQ(resolve_selector(snap, parse_selector("#r a")).size(), 2u);
    EXPECT_EQ(resolve_selector(snap, parse_selector("#r > a")).size(), 1u);
    EXPECT_EQ(resolve_selector(snap, parse_selector("ul.a.b li > a")).size(), 1u);
    EXPECT_EQ(resolve_selector(snap, parse_selector("a[href='#']")).size(), 1u);
    EXPECT_EQ(resolve_selector(snap, parse_selector("pierce/.b")).size(), 2u);
    EXPECT_EQ(resolve_selector(snap, parse_selector("text/y")).size(), 1u);
}

TEST(ResolveSelector, UnsupportedSyntaxThrows) {
    const auto snap = advsearch();
    for (const char* raw : {"a:hover", "div ~ span", "xpath///div[contains(@id,'x')]"}) {
        try {
            resolve_selector(snap, parse_selector(raw));
            FAIL() << raw;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::UnsupportedSelector) << raw;
        }
    }
}

TEST(ResolveSelector, ResultsOrderedSubset) {
    const auto snap = advsearch();
    for (const char* raw : {"div", "input", "span", "label", "xpath///*[@type=\"checkbox\"]", "div input", "aria/Sort by"}) {
        const auto hits = resolve_selector(snap, parse_selector(raw));
        for (std::size_t k = 0; k < hits.size(); ++k) {
            EXPECT_LT(hits[k], snap.size());
            if (k) {
                EXPECT_LT(hits[k - 1], hits[k]);
            }
        }
    }
}

TEST(RankByOverlap, ExactCopyScoresOne) {
    const auto snap = advsearch();
    const auto& target = snap.at(*resolve_selector(snap, parse_selector("aria/See results")).begin());
    const auto ranked = rank_by_overlap(snap, {target.tag, target.attributes});
    ASSERT_FALSE(ranked.empty());
    EXPECT_EQ(ranked[0].index, target.index);
    EXPECT_DOUBLE_EQ(ranked[0].score, 1.0);
}

TEST(RankByOverlap, TagOnlyScoresPointTwo) {
    const auto snap = parse_snapshot(R"(<div id="x"><input name="q"><span>s</span></div>)");
    const auto ranked = rank_by_overlap(snap, {std::string("input"), {{"data-zz", "1"}}});
    EXPECT_EQ(snap.at(ranked[0].index).tag, "input");
    EXPECT_DOUBLE_EQ(ranked[0].score, 0.2);
    EXPECT_DOUBLE_EQ(ranked[1].score, 0.0);
}

TEST(RankByOverlap, ChurnedIdStillFirst) {
    // Recorded {type, id, data-testid, aria-label}; live id differs. Jaccard = 3 shared / 5 union.
    const auto snap = parse_snapshot(R"(<form>
      <input type="text" id="new-id" data-testid="suggestion-search" aria-label="Search IMDb">
      <input type="text" id="other" aria-label="Search titles">
    </form>)");
    const ElementQuery recorded{std::string("input"),
                                {{"type", "text"}, {"id", "suggestion-search"}, {"data-testid", "suggestion-search"}, {"aria-label", "Search IMDb"}}};
    const auto ranked = rank_by_overlap(snap, recorded);
    EXPECT_EQ(*snap.at(ranked[0].index).attr("id"), "new-id");
    EXPECT_NEAR(ranked[0].score, 0.8 * 3.0 / 5.0 + 0.2, 1e-12);
    EXPECT_NEAR(ranked[1].score, 0.8 * 1.0 / 6.0 + 0.2, 1e-12);
}

TEST(RankByOverlap, BoundedAndOneIffEqual) {
    std::mt19937_64 rng(31);
    const auto snap = advsearch();
    for (int iter = 0; iter < 300; ++iter) {
        const auto& el = snap.at(rng() % snap.size());
        ElementQuery q{el.tag, el.attributes};
        if (rng() % 2 && !q.attributes.empty()) q.attributes.erase(q.attributes.begin());
        if (rng() % 3 == 0) q.attributes["extra"] = "1";
        const auto ranked = rank_by_overlap(snap, q);
        for (std::size_t k = 0; k < ranked.size(); ++k) {
            const auto& cand = snap.at(ranked[k].index);
            EXPECT_GE(ranked[k].score, 0.0);
            EXPECT_LE(ranked[k].score, 1.0);
            const bool equal = cand.attributes == q.attributes && cand.tag == q.tag;
            EXPECT_EQ(ranked[k].score == 1.0, equal);
            if (k) {
                EXPECT_GE(ranked[k - 1].score, ranked[k].score);
                if (ranked[k - 1].score == ranked[k].score) {
                    EXPECT_LT(ranked[k - 1].index, ranked[k].index);
                }
            }
        }
    }
}
