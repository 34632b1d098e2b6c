// tracesmith command-line front end.

#include <tracesmith/tracesmith.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace tracesmith;

namespace {

enum Exit { kOk = 0, kFormat = 2, kUniqueness = 3, kProvider = 4, kInconsistent = 5, kSimulation = 6 };

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::ElementNotFound:
    case ErrorKind::NotUnique:
        return kUniqueness;
    case ErrorKind::ProviderError:
    case ErrorKind::Timeout:
    case ErrorKind::RemoteError:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::MissingCassette:
    case ErrorKind::CassetteWriteFailed:
    case ErrorKind::UnparsableScore:
        return kProvider;
    case ErrorKind::ElementUnresolvable:
    case ErrorKind::NoTransition:
    case ErrorKind::BadNavigation:
        return kSimulation;
    default:
        return kFormat;
    }
}

struct Globals {
    bool json = false;
    bool quiet = false;
    std::string configPath;
};

Globals g;

void emit(const ordered_json& j, const std::string& human) {
    if (g.json) {
        std::cout << j.dump(2) << "\n";
    } else if (!g.quiet) {
        std::cout << human;
    }
}

void note(const std::string& msg) {
    if (!g.quiet) std::cerr << msg << "\n";
}

std::map<std::string, std::string> file_settings() {
    if (g.configPath.empty()) {
        if (fs::exists("tracesmith.toml")) return parse_key_values(io::read_file("tracesmith.toml"));
        return {};
    }
    return parse_key_values(io::read_file(g.configPath));
}

std::unique_ptr<Gateway> make_gateway() { return std::make_unique<Gateway>(gateway_config_from(file_settings())); }

nlohmann::json read_json(const fs::path& path, ErrorKind kind) {
    auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(kind, path.string() + ": not valid JSON");
    return j;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

ordered_json metrics_json(const EvalMetrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn}, {"fn", m.confusion.fn}}}};
}

TraceEmbedder pick_embedder(const std::string& name, std::unique_ptr<Gateway>& holder) {
    if (name == "baseline") return baseline_embedder();
    holder = make_gateway();
    return service_embedder(*holder);
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& recording, const std::string& out) {
    const auto rec = parse_recording(io::read_file(recording));
    const auto report = filter_irrelevant(rec);
    if (!out.empty()) io::write_file_atomic(out, emit_recording(report.recording, true) + "\n");
    ordered_json j = ingest_report_to_json(report);
    j["title"] = rec.title;
    j["sourceSteps"] = rec.steps.size();
    std::string human = "title: " + rec.title + "\nsteps: " + std::to_string(rec.steps.size()) + ", kept " +
                        std::to_string(report.recording.steps.size()) + "\n";
    for (const auto& d : report.dropped) human += "dropped step " + std::to_string(d.stepIndex) + " (" + std::string(to_string(d.reason)) + ")\n";
    emit(j, human);
    return kOk;
}

int cmd_sop_generate(const std::string& demo, const std::string& example, const std::string& general, bool provider,
                     const std::string& out, bool tagged) {
    TaskDefinition task{example, general};
    if (task.exampleDescription.empty() || task.generalDescription.empty()) {
        throw Error(ErrorKind::PreconditionViolated, "both task descriptions are required");
    }
    const auto rec = filter_irrelevant(parse_recording(io::read_file(demo))).recording;
    SopTemplate tpl;
    std::vector<SopWarning> warnings;
    if (provider) {
        auto gw = make_gateway();
        auto parsed = generate_sop_with_provider(task, rec, completion_fn(*gw));
        tpl = std::move(parsed.tpl);
        warnings = std::move(parsed.warnings);
    } else {
        tpl = generate_fallback_sop(task, rec);
        warnings = check_template(tpl);
    }
    for (const auto& w : warnings) note("warning: " + std::string(to_string(w.kind)) + " " + w.name);
    const std::string body = tagged ? emit_sop_tagged(tpl) : sop_to_json(tpl).dump(2) + "\n";
    if (!out.empty()) io::write_file_atomic(out, body);
    ordered_json j{{"sop", sop_to_json(tpl)}, {"warnings", ordered_json::array()}};
    for (const auto& w : warnings) j["warnings"].push_back({{"kind", to_string(w.kind)}, {"name", w.name}});
    emit(j, out.empty() ? body : "wrote " + out + " (" + std::to_string(tpl.steps.size()) + " steps)\n");
    return kOk;
}

int cmd_sop_instantiate(const std::string& tpl_path, const std::string& params_path, bool strict, const std::string& out) {
    const SopTemplate tpl = load_sop(tpl_path);
    const auto pj = read_json(params_path, ErrorKind::BadParamJson);
    if (!pj.is_object()) throw Error(ErrorKind::BadParamJson, params_path + ": expected an object");
    std::map<std::string, std::string> params;
    for (const auto& [k, v] : pj.items()) {
        if (!v.is_string()) throw Error(ErrorKind::BadParamJson, params_path + ": value of '" + k + "' must be a string");
        params[k] = v.get<std::string>();
    }
    const auto result = instantiate(tpl, params, strict);
    for (const auto& w : result.warnings) note("warning: " + std::string(to_string(w.kind)) + " " + w.name);
    const std::string body = instance_to_json(result.instance).dump(2) + "\n";
    if (!out.empty()) io::write_file_atomic(out, body);
    ordered_json j{{"instance", instance_to_json(result.instance)}, {"warnings", ordered_json::array()}};
    for (const auto& w : result.warnings) j["warnings"].push_back({{"kind", to_string(w.kind)}, {"name", w.name}});
    emit(j, out.empty() ? body : "wrote " + out + "\n");
    return kOk;
}

int cmd_sign(const std::string& recording, const std::string& snapshots, const std::string& out,
             const std::string& policy_path, bool provider) {
    const auto rec = filter_irrelevant(parse_recording(io::read_file(recording))).recording;
    const auto snaps = load_snapshot_map(snapshots);
    const StabilityPolicy policy = policy_path.empty() ? StabilityPolicy{} : policy_from_json(read_json(policy_path, ErrorKind::InvalidConfig));
    std::unique_ptr<Gateway> gw;
    std::unique_ptr<CompletionSignerProvider> signer;
    if (provider) {
        gw = make_gateway();
        signer = std::make_unique<CompletionSignerProvider>(completion_fn(*gw));
    }
    auto result = build_config(rec, snaps, policy, signer.get());
    const SignatureConfig written = write_config(out, result.config);
    ordered_json j{{"out", out}, {"version", written.version}, {"entries", written.entries.size()}, {"diagnostics", ordered_json::array()}};
    std::string human = "wrote " + out + ": " + std::to_string(written.entries.size()) + " signatures (version " +
                        std::to_string(written.version) + ")\n";
    for (const auto& d : result.diagnostics) {
        j["diagnostics"].push_back({{"stepIndex", d.stepIndex}, {"kind", to_string(d.kind)}, {"message", d.message}});
        std::cerr << "step " << d.stepIndex << ": " << to_string(d.kind) << ": " << d.message << "\n";
    }
    emit(j, human);
    return result.diagnostics.empty() ? kOk : kUniqueness;
}

SopInstance load_instance(const std::string& sop_path, const std::string& params_path, bool strict) {
    const std::string text = io::read_file(sop_path);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("params") && !j.contains("input_param")) return instance_from_json(j);
    const SopTemplate tpl = load_sop(sop_path);
    std::map<std::string, std::string> params;
    if (!params_path.empty()) {
        const auto pj = read_json(params_path, ErrorKind::BadParamJson);
        if (!pj.is_object()) throw Error(ErrorKind::BadParamJson, params_path + ": expected an object");
        for (const auto& [k, v] : pj.items()) params[k] = v.get<std::string>();
    }
    return instantiate(tpl, params, strict).instance;
}

int cmd_simulate(const std::string& sop, const std::string& site_path, const std::string& config_path, const std::string& out,
                 const std::string& params) {
    const SopInstance inst = load_instance(sop, params, true);
    const FixtureSite site = load_site(site_path);
    std::optional<SignatureConfig> cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    const ExecutionTrace trace = run(inst, site, cfg ? &*cfg : nullptr);
    save_trace(out, trace);
    ordered_json j{{"out", out}, {"steps", trace.steps.size()}, {"finalPage", trace.meta.at("finalPage")}};
    emit(j, "wrote " + out + ": " + std::to_string(trace.steps.size()) + " steps, final page " + trace.meta.at("finalPage") + "\n");
    return kOk;
}

int cmd_score(const std::string& a, const std::string& b, const std::string& embedder, bool llm) {
    const auto ta = load_trace(a);
    const auto tb = load_trace(b);
    double s;
    std::unique_ptr<Gateway> gw;
    if (llm) {
        gw = make_gateway();
        s = score_llm(extract_features(ta), extract_features(tb), completion_fn(*gw));
    } else {
        s = consistency(ta, tb, pick_embedder(embedder, gw));
    }
    emit(ordered_json{{"score", s}, {"scorer", llm ? "llm" : embedder}}, fmt(s) + "\n");
    return kOk;
}

int cmd_monitor(const std::string& trace_path, const std::string& golden_dir, std::optional<double> threshold,
                const std::string& agg, bool fail_on_inconsistent, const std::string& embedder) {
    GoldenStore store = load_golden_store(golden_dir);
    ConsistencyConfig cfg = store.config;
    if (threshold) cfg.threshold = *threshold;
    if (!agg.empty()) cfg.aggregation = agg == "mean" ? Aggregation::Mean : Aggregation::Max;
    cfg.embedder = embedder == "service" ? EmbedderKind::Service : EmbedderKind::Baseline;
    std::unique_ptr<Gateway> gw;
    const auto report = monitor(load_trace(trace_path), store.traces, cfg, pick_embedder(embedder, gw));
    const bool ok = report.verdict == Verdict::Consistent;
    ordered_json j{{"score", report.score},
                   {"verdict", ok ? "consistent" : "inconsistent"},
                   {"nearestGoldenId", report.nearestGoldenId ? ordered_json(*report.nearestGoldenId) : ordered_json(nullptr)},
                   {"threshold", cfg.threshold},
                   {"aggregation", cfg.aggregation == Aggregation::Mean ? "mean" : "max"},
                   {"embedder", embedder}};
    emit(j, std::string(ok ? "consistent" : "inconsistent") + " score " + fmt(report.score) + " threshold " + fmt(cfg.threshold) +
                " nearest " + report.nearestGoldenId.value_or("-") + "\n");
    return !ok && fail_on_inconsistent ? kInconsistent : kOk;
}

int cmd_eval(const std::string& pairs_path, const std::string& threshold, const std::string& embedder) {
    std::unique_ptr<Gateway> gw;
    const auto pairs = load_pairs(pairs_path);
    const auto scored = score_pairs(pairs, pick_embedder(embedder, gw));
    double t = 0;
    EvalMetrics m;
    if (threshold == "auto") {
        const auto choice = select_threshold(scored.scores, scored.labels);
        t = choice.threshold;
        m = choice.metrics;
    } else {
        std::size_t used = 0;
        try {
            t = std::stod(threshold, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != threshold.size()) throw Error(ErrorKind::InvalidConfig, "--threshold must be a number or 'auto'");
        ConsistencyConfig cfg;
        cfg.threshold = t;
        cfg.validate();
        m = metrics_at(scored.scores, scored.labels, t);
    }
    ordered_json j = metrics_json(m);
    j["threshold"] = t;
    j["pairs"] = pairs.size();
    j["auc"] = roc_auc(scored.scores, scored.labels);
    emit(j, "pairs " + std::to_string(pairs.size()) + " threshold " + fmt(t) + " accuracy " + fmt(m.accuracy) + " f1 " + fmt(m.f1) + "\n");
    return kOk;
}

int cmd_suite_generate(const std::string& base_dir, std::size_t n, std::uint64_t seed, const std::string& out) {
    std::vector<NamedTrace> base;
    for (const auto& e : fs::directory_iterator(base_dir)) {
        if (e.path().extension() == ".json") base.push_back({e.path().stem().string(), load_trace(e.path())});
    }
    std::sort(base.begin(), base.end(), [](const NamedTrace& a, const NamedTrace& b) { return a.name < b.name; });
    if (base.empty()) throw Error(ErrorKind::PreconditionViolated, base_dir + ": no base traces");
    const Suite suite = generate_suite(base, n, seed);
    write_suite(suite, out);
    const auto similar = std::count_if(suite.pairs.begin(), suite.pairs.end(), [](const SuitePair& p) { return p.similar; });
    ordered_json j{{"out", out}, {"baseTraces", base.size()}, {"similar", similar}, {"dissimilar", suite.pairs.size() - similar}};
    emit(j, "wrote " + out + ": " + std::to_string(similar) + " similar, " + std::to_string(suite.pairs.size() - similar) + " dissimilar\n");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tracesmith: demonstrations to SOPs, element signatures and trace consistency"};
    app.require_subcommand(1);
    app.add_flag("--json", g.json, "Machine-readable JSON on stdout");
    app.add_flag("--quiet", g.quiet, "Suppress human-readable output");
    app.add_option("--config", g.configPath, "Key-value settings file (default ./tracesmith.toml if present)");

    std::function<int()> action;

    auto* ingest = app.add_subcommand("ingest", "Parse and filter a recorder export");
    std::string ingest_in, ingest_out;
    ingest->add_option("recording", ingest_in)->required();
    ingest->add_option("--out", ingest_out, "Write the filtered recording here");
    ingest->callback([&] { action = [&] { return cmd_ingest(ingest_in, ingest_out); }; });

    auto* sop = app.add_subcommand("sop", "Generate or instantiate SOP templates");
    sop->require_subcommand(1);
    auto* gen = sop->add_subcommand("generate", "Build an SOP template from a demonstration");
    std::string demo, ex, gen_desc, gen_out, gen_format = "json";
    bool offline = false, provider = false;
    gen->add_option("--demo", demo)->required();
    gen->add_option("--task-example", ex)->required();
    gen->add_option("--task-general", gen_desc)->required();
    auto* off = gen->add_flag("--offline", offline, "Deterministic generator, no network");
    auto* prov = gen->add_flag("--provider", provider, "Ask the completion service");
    off->excludes(prov);
    gen->add_option("--out", gen_out);
    gen->add_option("--format", gen_format)->check(CLI::IsMember({"json", "tagged"}));
    gen->callback([&] {
        if (!offline && !provider) throw CLI::ValidationError("sop generate", "one of --offline or --provider is required");
        action = [&] { return cmd_sop_generate(demo, ex, gen_desc, provider, gen_out, gen_format == "tagged"); };
    });

    auto* inst = sop->add_subcommand("instantiate", "Bind parameters into a template");
    std::string tpl_path, params_path, inst_out;
    bool strict = false;
    inst->add_option("--template", tpl_path)->required();
    inst->add_option("--params", params_path)->required();
    inst->add_flag("--strict", strict);
    inst->add_option("--out", inst_out);
    inst->callback([&] { action = [&] { return cmd_sop_instantiate(tpl_path, params_path, strict, inst_out); }; });

    auto* sign = app.add_subcommand("sign", "Derive element signatures for a recording");
    std::string sign_rec, sign_snaps, sign_out, sign_policy;
    bool sign_provider = false;
    sign->add_option("--recording", sign_rec)->required();
    sign->add_option("--snapshots", sign_snaps, "Directory holding snapshots.json and the pages it names")->required();
    sign->add_option("--out", sign_out)->required();
    sign->add_option("--policy", sign_policy);
    sign->add_flag("--provider", sign_provider, "Let the completion service help with unmatched elements");
    sign->callback([&] { action = [&] { return cmd_sign(sign_rec, sign_snaps, sign_out, sign_policy, sign_provider); }; });

    auto* sim = app.add_subcommand("simulate", "Run an SOP against a fixture site");
    std::string sim_sop, sim_site, sim_cfg, sim_out, sim_params;
    sim->add_option("--sop", sim_sop, "SOP instance, or a template plus --params")->required();
    sim->add_option("--site", sim_site)->required();
    sim->add_option("--config", sim_cfg, "signatures.json");
    sim->add_option("--params", sim_params);
    sim->add_option("--out", sim_out)->required();
    sim->callback([&] { action = [&] { return cmd_simulate(sim_sop, sim_site, sim_cfg, sim_out, sim_params); }; });

    auto* score_cmd = app.add_subcommand("score", "Consistency score of two traces");
    std::string sa, sb, score_embedder = "baseline";
    bool llm = false;
    score_cmd->add_option("--a", sa)->required();
    score_cmd->add_option("--b", sb)->required();
    score_cmd->add_option("--embedder", score_embedder)->check(CLI::IsMember({"baseline", "service"}));
    score_cmd->add_flag("--llm", llm, "Ask the completion service for the score");
    score_cmd->callback([&] { action = [&] { return cmd_score(sa, sb, score_embedder, llm); }; });

    auto* mon = app.add_subcommand("monitor", "Check a trace against a golden store");
    std::string mon_trace, mon_golden, mon_agg, mon_embedder = "baseline";
    std::optional<double> mon_threshold;
    bool fail_on_inconsistent = false;
    mon->add_option("--trace", mon_trace)->required();
    mon->add_option("--golden", mon_golden)->required();
    mon->add_option("--threshold", mon_threshold)->check(CLI::Range(0.0, 1.0));
    mon->add_option("--agg", mon_agg)->check(CLI::IsMember({"max", "mean"}));
    mon->add_option("--embedder", mon_embedder)->check(CLI::IsMember({"baseline", "service"}));
    mon->add_flag("--fail-on-inconsistent", fail_on_inconsistent);
    mon->callback([&] {
        action = [&] { return cmd_monitor(mon_trace, mon_golden, mon_threshold, mon_agg, fail_on_inconsistent, mon_embedder); };
    });

    auto* ev = app.add_subcommand("eval", "Accuracy and F1 over labeled pairs");
    std::string ev_pairs, ev_threshold, ev_embedder = "baseline";
    ev->add_option("--pairs", ev_pairs)->required();
    ev->add_option("--threshold", ev_threshold, "A number in [0, 1] or 'auto'")->required();
    ev->add_option("--embedder", ev_embedder)->check(CLI::IsMember({"baseline", "service"}));
    ev->callback([&] { action = [&] { return cmd_eval(ev_pairs, ev_threshold, ev_embedder); }; });

    auto* suite = app.add_subcommand("suite", "Synthetic labeled pair suites");
    suite->require_subcommand(1);
    auto* sg = suite->add_subcommand("generate", "Perturb base traces into similar and dissimilar pairs");
    std::string sg_base, sg_out;
    std::size_t sg_n = 10;
    std::uint64_t sg_seed = 0;
    sg->add_option("--base", sg_base)->required();
    sg->add_option("--n", sg_n)->required();
    sg->add_option("--seed", sg_seed)->required();
    sg->add_option("--out", sg_out)->required();
    sg->callback([&] { action = [&] { return cmd_suite_generate(sg_base, sg_n, sg_seed, sg_out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kFormat;
    }
    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFormat;
    }
}
