#include "test_support.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

using namespace tracesmith;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Result cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const std::string cmd = "cd " + q(dir) + " && " + q(TRACESMITH_CLI) + " " + args + " > " + q(out) + " 2> " + q(dir / "stderr.txt");
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, io::read_file(out)};
}

nlohmann::json cli_json(const std::string& args, const fs::path& dir, int expect = 0) {
    const auto r = cli("--json " + args, dir);
    EXPECT_EQ(r.code, expect) << args << "\n" << io::read_file(dir / "stderr.txt");
    auto j = nlohmann::json::parse(r.out, nullptr, false);
    EXPECT_FALSE(j.is_discarded()) << r.out;
    return j;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override { dir = testsupport::temp_dir("cli"); }
    void TearDown() override { fs::remove_all(dir); }

    // ingest, generate, instantiate, sign, simulate
    void pipeline() {
        const auto rec = q(testsupport::data("imdb_demo_recording.json"));
        cli_json("ingest " + rec + " --out filtered.json", dir);
        cli_json("sop generate --offline --demo filtered.json --task-example " + q(testsupport::imdb_task().exampleDescription) +
                     " --task-general " + q(testsupport::imdb_task().generalDescription) + " --out template.json",
                 dir);
        io::write_file_atomic(dir / "params.json", R"({"enter_release_date_above": "2020"})");
        cli_json("sop instantiate --template template.json --params params.json --strict --out instance.json", dir);
        cli_json("sign --recording filtered.json --snapshots " + q(testsupport::data("imdb/a")) + " --out signatures.json", dir);
        cli_json("simulate --sop instance.json --site " + q(testsupport::data("imdb/b/site.json")) + " --config signatures.json --out run.json",
                 dir);
    }

    fs::path dir;
};

}  // namespace

TEST_F(Cli, IngestReportsDrops) {
    const auto j = cli_json("ingest " + q(testsupport::data("imdb_demo_recording.json")), dir);
    EXPECT_EQ(j["sourceSteps"], testsupport::imdb_demo().steps.size());
    EXPECT_TRUE(j.contains("dropped"));
}

TEST_F(Cli, PipelineToMonitor) {
    pipeline();
    EXPECT_EQ(load_config(dir / "signatures.json").entries.size(), 14u);
    const auto trace = load_trace(dir / "run.json");
    EXPECT_EQ(trace.steps.size(), 15u);
    EXPECT_EQ(trace.meta.at("finalPage"), "results_sorted");

    fs::create_directories(dir / "golden");
    fs::copy_file(dir / "run.json", dir / "golden" / "run.json");
    io::write_file_atomic(dir / "golden" / "manifest.json", R"({"taskId": "imdb", "threshold": 0.8, "traces": ["run.json"]})");
    const auto m = cli_json("monitor --trace run.json --golden golden --fail-on-inconsistent", dir);
    EXPECT_EQ(m["verdict"], "consistent");
    EXPECT_NEAR(m["score"].get<double>(), 1.0, 1e-9);
    EXPECT_EQ(m["nearestGoldenId"], "run.json");

    const auto other = testsupport::data("suite_base/expense_report.json");
    const auto bad = cli_json("monitor --trace " + q(other) + " --golden golden --threshold 0.99 --fail-on-inconsistent", dir, 5);
    EXPECT_EQ(bad["verdict"], "inconsistent");
    // Without the flag an inconsistent verdict still exits 0.
    EXPECT_EQ(cli("monitor --trace " + q(other) + " --golden golden --threshold 0.99", dir).code, 0);
}

TEST_F(Cli, ScoreSelfIsOne) {
    const auto t = q(testsupport::data("suite_base/order_status.json"));
    const auto j = cli_json("score --a " + t + " --b " + t, dir);
    EXPECT_NEAR(j["score"].get<double>(), 1.0, 1e-9);
    EXPECT_EQ(j["scorer"], "baseline");
    const auto plain = cli("score --a " + t + " --b " + t, dir);
    EXPECT_EQ(plain.out, "1.000000\n");
}

TEST_F(Cli, SignExitsThreeOnDiagnostics) {
    fs::create_directories(dir / "snaps");
    for (const auto& e : fs::directory_iterator(testsupport::data("imdb/a"))) fs::copy_file(e.path(), dir / "snaps" / e.path().filename());
    io::write_file_atomic(dir / "snaps" / "empty.html", R"(<div class="z"><p class="y">nothing here</p></div>)");
    auto map = nlohmann::json::parse(io::read_file(dir / "snaps" / "snapshots.json"));
    map["15"] = "empty.html";
    io::write_file_atomic(dir / "snaps" / "snapshots.json", map.dump());

    const auto j = cli_json("sign --recording " + q(testsupport::data("imdb_demo_recording.json")) + " --snapshots snaps --out sig.json", dir, 3);
    EXPECT_EQ(j["entries"], 13);
    ASSERT_EQ(j["diagnostics"].size(), 1u);
    EXPECT_EQ(j["diagnostics"][0]["stepIndex"], 15);
    EXPECT_EQ(j["diagnostics"][0]["kind"], "ElementNotFound");
    EXPECT_EQ(load_config(dir / "sig.json").entries.size(), 13u);
}

TEST_F(Cli, SuiteThenEval) {
    const auto s = cli_json("suite generate --base " + q(testsupport::data("suite_base")) + " --n 10 --seed 42 --out pairs.jsonl", dir);
    EXPECT_EQ(s["similar"], 80);
    EXPECT_EQ(s["dissimilar"], 80);
    const auto e = cli_json("eval --pairs pairs.jsonl --threshold 0.5", dir);
    EXPECT_EQ(e["pairs"], 160);
    EXPECT_EQ(e["threshold"], 0.5);
    const auto& c = e["confusion"];
    EXPECT_EQ(c["tp"].get<int>() + c["fn"].get<int>(), 80);
    EXPECT_EQ(c["tn"].get<int>() + c["fp"].get<int>(), 80);
    EXPECT_NEAR(e["accuracy"].get<double>(), (c["tp"].get<int>() + c["tn"].get<int>()) / 160.0, 1e-12);
    const auto a = cli_json("eval --pairs pairs.jsonl --threshold auto", dir);
    EXPECT_GE(a["f1"].get<double>(), e["f1"].get<double>() - 1e-12);
}

TEST_F(Cli, SimulationFailureExitsSix) {
    pipeline();
    // Pages resolve next to site.json, so edit a copy of the whole variant.
    fs::copy(testsupport::data("imdb/b"), dir / "b");
    auto site = nlohmann::json::parse(io::read_file(dir / "b" / "site.json"));
    site["transitions"].erase(site["transitions"].size() - 1);
    io::write_file_atomic(dir / "b" / "site.json", site.dump());
    EXPECT_EQ(cli("simulate --sop instance.json --site b/site.json --config signatures.json --out x.json", dir).code, 6);
    EXPECT_NE(io::read_file(dir / "stderr.txt").find("NoTransition"), std::string::npos);
}

TEST_F(Cli, BadArgumentsExitTwo) {
    EXPECT_EQ(cli("", dir).code, 2);
    EXPECT_EQ(cli("frobnicate", dir).code, 2);
    EXPECT_EQ(cli("monitor --trace x.json", dir).code, 2);
    EXPECT_EQ(cli("eval --pairs nope.jsonl --threshold 2", dir).code, 2);
    EXPECT_EQ(cli("score --a missing.json --b missing.json", dir).code, 2);
    io::write_file_atomic(dir / "p.jsonl", "");
    EXPECT_EQ(cli("eval --pairs p.jsonl --threshold high", dir).code, 2);
    EXPECT_EQ(cli("--help", dir).code, 0);
}
