#include "test_support.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace tracesmith;

namespace {

std::string recording_json(const std::vector<nlohmann::ordered_json>& steps) {
    return nlohmann::ordered_json{{"title", "t"}, {"steps", steps}}.dump();
}

nlohmann::ordered_json click(std::vector<std::vector<std::string>> selectors) {
    return {{"type", "click"}, {"selectors", selectors}, {"offsetX", 3}, {"offsetY", 4}};
}

}  // namespace

TEST(ParseRecording, ImdbDemoTitleAndCount) {
    const auto rec = testsupport::imdb_demo();
    EXPECT_EQ(rec.title, "Recording IMDB");
    EXPECT_EQ(rec.steps.size(), 16u);
}

TEST(ParseRecording, ImdbDemoKindCounts) {
    std::map<StepKind, int> counts;
    for (const auto& s : testsupport::imdb_demo().steps) ++counts[s.kind];
    EXPECT_EQ(counts[StepKind::SetViewport], 1);
    EXPECT_EQ(counts[StepKind::Navigate], 1);
    EXPECT_EQ(counts[StepKind::Click], 10);
    EXPECT_EQ(counts[StepKind::Change], 4);
}

TEST(ParseRecording, EmptyStepsRejected) {
    try {
        parse_recording(R"({"title":"t","steps":[]})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MalformedRecording);
        EXPECT_NE(e.detail().find("$.steps"), std::string::npos);
    }
}

TEST(ParseRecording, FirstOffensePath) {
    auto expect_path = [](const std::string& text, const std::string& path) {
        try {
            parse_recording(text);
            FAIL() << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::MalformedRecording);
            EXPECT_NE(e.detail().find(path), std::string::npos) << e.detail();
        }
    };
    expect_path(R"({"title":"t"})", "$.steps");
    expect_path(R"({"steps":[{"type":"navigate","url":"u"},{"type":7}]})", "$.steps[1].type");
    expect_path(R"({"steps":"x"})", "$.steps");
    expect_path("not json", "$");
}

TEST(ParseRecording, UnknownTypePreserved) {
    const auto rec = parse_recording(recording_json({{{"type", "doubleClick"}, {"selectors", {{"#x"}}}}}));
    ASSERT_EQ(rec.steps.size(), 1u);
    EXPECT_EQ(rec.steps[0].kind, StepKind::Other);
    EXPECT_EQ(rec.steps[0].typeName, "doubleClick");
}

TEST(ParseRecording, SelectorOrderPreserved) {
    const auto rec = testsupport::imdb_demo();
    const auto& step = rec.steps[2];
    ASSERT_GE(step.selectors.size(), 2u);
    EXPECT_EQ(step.selectors[0][0].scheme, SelectorScheme::Aria);
}

TEST(EmitRecording, RoundTripPreservesStructure) {
    const auto rec = testsupport::imdb_demo();
    const auto again = parse_recording(emit_recording(rec));
    ASSERT_EQ(again.steps.size(), rec.steps.size());
    EXPECT_EQ(again.title, rec.title);
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        EXPECT_EQ(again.steps[i].kind, rec.steps[i].kind);
        EXPECT_EQ(again.steps[i].selectors, rec.steps[i].selectors);
        EXPECT_EQ(again.steps[i].value, rec.steps[i].value);
        EXPECT_EQ(again.steps[i].url, rec.steps[i].url);
    }
    EXPECT_EQ(emit_recording(again), emit_recording(rec));
}

TEST(EmitRecording, FilteredExportKeepsSourceIndices) {
    const auto filtered = filter_irrelevant(testsupport::imdb_demo()).recording;
    const auto again = parse_recording(emit_recording(filtered, true));
    ASSERT_EQ(again.steps.size(), filtered.steps.size());
    for (std::size_t i = 0; i < again.steps.size(); ++i) EXPECT_EQ(again.steps[i].sourceIndex, filtered.steps[i].sourceIndex);
    EXPECT_EQ(again.steps.front().sourceIndex, 1u);
    // Without the array, indices are positions.
    EXPECT_EQ(parse_recording(emit_recording(filtered)).steps.front().sourceIndex, 0u);

    auto j = recording_to_json(filtered, true);
    j["sourceIndices"].erase(0);
    try {
        parse_recording(j.dump());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MalformedRecording);
        EXPECT_NE(e.detail().find("$.sourceIndices"), std::string::npos);
    }
}

TEST(FilterIrrelevant, ImdbDemoOnlyViewportFlagged) {
    const auto report = filter_irrelevant(testsupport::imdb_demo());
    ASSERT_EQ(report.dropped.size(), 1u);
    EXPECT_EQ(report.dropped[0], (DroppedStep{0, DropReason::ViewportOnly}));
    EXPECT_EQ(report.recording.steps.size(), 15u);
}

TEST(FilterIrrelevant, RecaptchaDropped) {
    const auto rec = parse_recording(recording_json({click({{"#go"}}), click({{"div.g-recaptcha"}}), click({{"#next"}})}));
    const auto report = filter_irrelevant(rec);
    ASSERT_EQ(report.dropped.size(), 1u);
    EXPECT_EQ(report.dropped[0], (DroppedStep{1, DropReason::Captcha}));
    EXPECT_EQ(report.keptIndices, (std::vector<std::size_t>{0, 2}));
}

TEST(FilterIrrelevant, CaptchaTokensCaseInsensitive) {
    const auto rec = parse_recording(recording_json({click({{"aria/Solve HCaptcha"}}), click({{"iframe[title=CAPTCHA]"}})}));
    const auto report = filter_irrelevant(rec);
    EXPECT_EQ(report.dropped.size(), 2u);
}

TEST(FilterIrrelevant, BodyClickDropped) {
    const auto rec = parse_recording(recording_json({click({{"body"}}), click({{"html"}}), click({{"body"}, {"#real"}})}));
    const auto report = filter_irrelevant(rec);
    ASSERT_EQ(report.dropped.size(), 2u);
    EXPECT_EQ(report.dropped[0].reason, DropReason::NonInteractable);
    EXPECT_EQ(report.dropped[1].reason, DropReason::NonInteractable);
    EXPECT_EQ(report.keptIndices, (std::vector<std::size_t>{2}));
}

TEST(FilterIrrelevant, PopupCloseDropped) {
    const auto rec = parse_recording(recording_json({
        click({{"div[role=dialog] button[aria-label=Close]"}}),
        click({{"button[aria-label=Close]"}}),
    }));
    const auto report = filter_irrelevant(rec);
    ASSERT_EQ(report.dropped.size(), 1u);
    EXPECT_EQ(report.dropped[0], (DroppedStep{0, DropReason::PopupClose}));
}

TEST(FilterIrrelevant, PropertiesOnRandomRecordings) {
    std::mt19937_64 rng(17);
    const std::vector<std::string> pool = {"#go", "div.g-recaptcha", "body", "aria/Search IMDb", "text/Close",
                                           "div[role=dialog] button[aria-label=Dismiss]", "a > span", "#recaptcha-anchor"};
    for (int iter = 0; iter < 300; ++iter) {
        std::vector<nlohmann::ordered_json> steps;
        const std::size_t n = 1 + rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            switch (rng() % 4) {
            case 0: steps.push_back({{"type", "setViewport"}, {"width", 800}, {"height", 600}}); break;
            case 1: steps.push_back({{"type", "change"}, {"value", "x"}, {"selectors", {{pool[rng() % pool.size()]}}}}); break;
            default: steps.push_back(click({{pool[rng() % pool.size()]}}));
            }
        }
        const auto rec = parse_recording(recording_json(steps));
        const auto report = filter_irrelevant(rec);
        EXPECT_EQ(report.recording.steps.size() + report.dropped.size(), rec.steps.size());
        ASSERT_EQ(report.keptIndices.size(), report.recording.steps.size());
        for (std::size_t k = 0; k < report.keptIndices.size(); ++k) {
            if (k) {
                EXPECT_LT(report.keptIndices[k - 1], report.keptIndices[k]);
            }
            EXPECT_EQ(report.recording.steps[k].sourceIndex, report.keptIndices[k]);
            EXPECT_EQ(report.recording.steps[k].selectors, rec.steps[report.keptIndices[k]].selectors);
        }
        for (const auto& d : report.dropped) EXPECT_LT(d.stepIndex, rec.steps.size());
        const auto twice = filter_irrelevant(report.recording);
        EXPECT_TRUE(twice.dropped.empty());
        EXPECT_EQ(twice.recording.steps.size(), report.recording.steps.size());
    }
}
