// mtaudit: detect -> intervene -> replay -> score -> aggregate -> report.
//
// Exit codes: 0 ok, 1 input error, 2 backend error, 3 partial failure.

#include <csignal>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtaudit/annotate_server.hpp"
#include "mtaudit/http_backend.hpp"
#include "mtaudit/mock_backend.hpp"
#include "mtaudit/pipeline.hpp"

using namespace mtaudit;

namespace {

struct BackendFlags {
    std::string url;
    std::string model;
    bool native_thinking = false;
};

struct CommonFlags {
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_concurrency = 4;
    int timeout_s = 120;
    int max_attempts = 3;
    std::string transcript;
    bool no_resume = false;
};

/// Owns a backend and an optional transcript decorator around it.
struct BackendHandle {
    std::unique_ptr<ChatBackend> inner;
    std::unique_ptr<TranscriptBackend> logged;
    ChatBackend& get() { return logged ? static_cast<ChatBackend&>(*logged) : *inner; }
};

BackendHandle open_backend(const BackendFlags& b, const CommonFlags& c, const std::string& role) {
    if (b.url.empty()) throw InputError("a " + role + " backend is required (URL or mock:PATH)");
    BackendHandle h;
    if (b.url.rfind("mock:", 0) == 0) {
        h.inner = MockBackend::from_file(b.url.substr(5));
    } else {
        HttpBackendConfig cfg;
        cfg.base_url = b.url;
        cfg.model = b.model;
        cfg.api_key_env = c.api_key_env;
        cfg.timeout = std::chrono::seconds(c.timeout_s);
        cfg.native_thinking = b.native_thinking;
        h.inner = std::make_unique<HttpBackend>(cfg);
    }
    if (!c.transcript.empty()) {
        auto path = c.transcript + (role == "judge" ? ".judge.jsonl" : ".replay.jsonl");
        h.logged = std::make_unique<TranscriptBackend>(*h.inner, path);
    }
    return h;
}

std::vector<InterventionKind> parse_kinds(const std::string& text) {
    std::vector<InterventionKind> kinds;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        auto item = std::string(trim(std::string_view(text).substr(pos, comma - pos)));
        if (!item.empty()) kinds.push_back(intervention_from_string(item));
        pos = comma + 1;
    }
    if (kinds.empty()) throw InputError("--kinds is empty");
    return kinds;
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        auto item = std::string(trim(std::string_view(text).substr(pos, comma - pos)));
        if (!item.empty()) out.push_back(item);
        pos = comma + 1;
    }
    return out;
}

void add_judge_flags(CLI::App* cmd, BackendFlags& judge, JudgeConfig& cfg, bool sampling) {
    cmd->add_option("--judge-backend", judge.url, "Judge endpoint URL or mock:SCRIPT");
    cmd->add_option("--judge-model", judge.model, "Judge model identifier");
    if (sampling) {
        cmd->add_option("--k", cfg.k, "Sampled judgments per trace")->capture_default_str();
        cmd->add_option("--temperature", cfg.temperature, "Judge sampling temperature")->capture_default_str();
        cmd->add_option("--majority", cfg.majority, "Votes needed to keep an issue")->capture_default_str();
    }
    cmd->add_option("--max-retries", cfg.max_retries, "Schema-failure retries per judge run")->capture_default_str();
}

void add_replay_flags(CLI::App* cmd, BackendFlags& b, ReplayOptions& r) {
    cmd->add_option("--backend-url", b.url, "Replay endpoint URL or mock:SCRIPT");
    cmd->add_option("--model", b.model, "Replay model identifier");
    cmd->add_flag("--native-thinking", b.native_thinking, "Backend continues a partial reasoning block");
    cmd->add_option("--max-tokens", r.max_tokens, "Generation limit for replays")->capture_default_str();
}

void add_common_flags(CLI::App* cmd, CommonFlags& c) {
    cmd->add_option("--api-key-env", c.api_key_env, "Environment variable holding the API key")->capture_default_str();
    cmd->add_option("--max-concurrency", c.max_concurrency, "Concurrent backend requests")->capture_default_str();
    cmd->add_option("--timeout", c.timeout_s, "Per-request timeout in seconds")->capture_default_str();
    cmd->add_option("--max-attempts", c.max_attempts, "Attempts per request on transport errors")->capture_default_str();
    cmd->add_option("--transcript", c.transcript, "Log request/response pairs to PREFIX.{judge,replay}.jsonl");
    cmd->add_flag("--no-resume", c.no_resume, "Ignore progress logs from earlier runs");
}

StageOptions stage_options(const CommonFlags& c) { return {c.max_concurrency, !c.no_resume}; }

RetryPolicy retry_policy(const CommonFlags& c) {
    RetryPolicy p;
    p.max_attempts = c.max_attempts;
    return p;
}

httplib::Server* g_server = nullptr;
void on_signal(int) {
    if (g_server) g_server->stop();
}

int run(int argc, char** argv) {
    CLI::App app{"Reasoning-trace audit for machine translation"};
    app.set_config("--config", "", "Key-value config file; command-line flags win");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    CommonFlags common;
    BackendFlags judge_flags, replay_flags;
    JudgeConfig judge_cfg;
    ReplayOptions replay_opts;
    std::string corpus, format = "triplets", out, issues, specs, replays, verdicts, scores, aggregate_path,
                annotations, metric = "chrf", scorer_cmd, kinds = "hedging,removal,rereason,hindsight,oracle-1,oracle-k",
                workdir, host = "127.0.0.1", annotators, journal;
    int port = 8080;

    auto* detect_cmd = app.add_subcommand("detect", "Sampled judge runs and majority vote");
    detect_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    detect_cmd->add_option("--format", format, "triplets or parallel")->capture_default_str();
    detect_cmd->add_option("--out", out, "Issues JSONL")->required();
    add_judge_flags(detect_cmd, judge_flags, judge_cfg, true);
    add_common_flags(detect_cmd, common);

    auto* intervene_cmd = app.add_subcommand("intervene", "Build replay specs from issues");
    intervene_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    intervene_cmd->add_option("--issues", issues, "Issues JSONL from detect")->required();
    intervene_cmd->add_option("--kinds", kinds, "Comma-separated interventions")->capture_default_str();
    intervene_cmd->add_option("--out", out, "Specs JSONL")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Replay specs and baselines");
    replay_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    replay_cmd->add_option("--specs", specs, "Specs JSONL from intervene")->required();
    replay_cmd->add_option("--out", out, "Replays JSONL")->required();
    add_replay_flags(replay_cmd, replay_flags, replay_opts);
    add_common_flags(replay_cmd, common);

    auto* score_cmd = app.add_subcommand("score", "Fix-judge targeted issues and score replay outputs");
    score_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    score_cmd->add_option("--issues", issues, "Issues JSONL")->required();
    score_cmd->add_option("--replays", replays, "Replays JSONL")->required();
    score_cmd->add_option("--out", out, "Quality scores JSONL")->required();
    score_cmd->add_option("--verdicts", verdicts, "Resolution verdicts JSONL")->required();
    score_cmd->add_option("--metric", metric, "chrf or external")->capture_default_str();
    score_cmd->add_option("--scorer-cmd", scorer_cmd, "External scorer command (JSONL in, one score per line out)");
    add_judge_flags(score_cmd, judge_flags, judge_cfg, false);
    add_common_flags(score_cmd, common);

    auto* aggregate_cmd = app.add_subcommand("aggregate", "Roll verdicts and deltas up per model, pair and kind");
    aggregate_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    aggregate_cmd->add_option("--verdicts", verdicts, "Verdicts JSONL")->required();
    aggregate_cmd->add_option("--scores", scores, "Quality scores JSONL");
    aggregate_cmd->add_option("--out", out, "Aggregate JSONL")->required();

    auto* report_cmd = app.add_subcommand("report", "Render detection, intervention and validation tables");
    report_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    report_cmd->add_option("--issues", issues, "Issues JSONL");
    report_cmd->add_option("--aggregate", aggregate_path, "Aggregate JSONL");
    report_cmd->add_option("--annotations", annotations, "Annotation journal JSONL");
    report_cmd->add_option("--out", out, "Write the report here as well as stdout");

    auto* serve_cmd = app.add_subcommand("annotate-serve", "Serve the two-phase annotation API");
    serve_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    serve_cmd->add_option("--issues", issues, "Issues JSONL")->required();
    serve_cmd->add_option("--journal", journal, "Annotation journal JSONL")->required();
    serve_cmd->add_option("--annotators", annotators, "Comma-separated annotator ids")->required();
    serve_cmd->add_option("--host", host)->capture_default_str();
    serve_cmd->add_option("--port", port)->capture_default_str();

    auto* validate_cmd = app.add_subcommand("validate-fixtures", "Check corpus, issues, specs and annotation files");
    validate_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    validate_cmd->add_option("--issues", issues, "Issues JSONL");
    validate_cmd->add_option("--specs", specs, "Specs JSONL");
    validate_cmd->add_option("--annotations", annotations, "Annotation journal JSONL");

    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage into one work directory");
    pipeline_cmd->add_option("--corpus", corpus, "Triplet JSONL")->required();
    pipeline_cmd->add_option("--workdir", workdir, "Output directory")->required();
    pipeline_cmd->add_option("--kinds", kinds, "Comma-separated interventions")->capture_default_str();
    pipeline_cmd->add_option("--metric", metric, "chrf or external")->capture_default_str();
    pipeline_cmd->add_option("--scorer-cmd", scorer_cmd, "External scorer command");
    add_judge_flags(pipeline_cmd, judge_flags, judge_cfg, true);
    add_replay_flags(pipeline_cmd, replay_flags, replay_opts);
    add_common_flags(pipeline_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    judge_cfg.transport = retry_policy(common);
    replay_opts.retry = retry_policy(common);

    if (detect_cmd->parsed()) {
        if (format != "triplets" && format != "parallel") throw InputError("--format must be triplets or parallel");
        auto judge = open_backend(judge_flags, common, "judge");
        DetectStage st{corpus, format == "parallel" ? CorpusFormat::Parallel : CorpusFormat::Triplets, out, judge_cfg,
                       stage_options(common)};
        auto found = run_detect(st, judge.get());
        std::cout << found.size() << " issue(s) written to " << out << "\n";
    } else if (intervene_cmd->parsed()) {
        auto batch = run_intervene({corpus, issues, out, parse_kinds(kinds)});
        std::cout << batch.specs.size() << " spec(s), " << batch.skipped.size() << " skipped\n";
    } else if (replay_cmd->parsed()) {
        auto backend = open_backend(replay_flags, common, "replay");
        auto rows = run_replay({corpus, specs, out, replay_opts, stage_options(common)}, backend.get());
        std::cout << rows.size() << " replay(s) written to " << out << "\n";
    } else if (score_cmd->parsed()) {
        auto judge = open_backend(judge_flags, common, "judge");
        ScoreStage st;
        st.corpus = corpus;
        st.issues = issues;
        st.replays = replays;
        st.out = out;
        st.verdicts_out = verdicts;
        st.metric = metric;
        st.scorer_command = scorer_cmd;
        st.judge = judge_cfg;
        st.options = stage_options(common);
        auto r = run_score(st, judge.get());
        std::cout << r.verdicts.size() << " verdict(s), " << r.scores.size() << " score(s)\n";
    } else if (aggregate_cmd->parsed()) {
        auto rep = run_aggregate({corpus, verdicts, scores, out});
        std::cout << render_report(rep);
    } else if (report_cmd->parsed()) {
        std::cout << build_report({corpus, issues, aggregate_path, annotations, out});
    } else if (serve_cmd->parsed()) {
        auto samples = load_samples(corpus);
        auto found = load_issues(issues);
        RecordStore store(journal);
        TaskQueue queue(samples, found, split_csv(annotators), store);
        AnnotationServer server(queue, store);
        g_server = &server.http();
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
        if (!server.listen(host, port)) throw InputError("cannot listen on " + host + ":" + std::to_string(port));
        store.compact();
    } else if (validate_cmd->parsed()) {
        auto samples = load_samples(corpus);
        std::cout << "corpus: " << samples.size() << " sample(s)\n";
        std::vector<Issue> found;
        if (!issues.empty()) {
            found = load_issues(issues);
            std::set<std::string> ids;
            for (const auto& s : samples) ids.insert(s.id);
            for (const auto& i : found)
                if (!ids.count(i.sample_id)) throw InputError("issue " + i.id() + " references unknown sample " + i.sample_id);
            std::cout << "issues: " << found.size() << "\n";
        }
        if (!specs.empty()) {
            std::size_t n = 0;
            for_each_jsonl(specs, [&](std::size_t line, const json& j) {
                try {
                    replay_spec_from_json(j);
                } catch (const std::exception& e) {
                    throw InputError("line " + std::to_string(line) + ": " + e.what());
                }
                ++n;
            });
            std::cout << "specs: " << n << "\n";
        }
        if (!annotations.empty()) {
            RecordStore store(annotations);
            auto sum = summarize_validation(store.records(), found, samples);
            std::cout << "annotations: " << store.records().size() << " record(s), "
                      << sum.coverage_warnings.size() << " coverage warning(s)\n";
        }
    } else if (pipeline_cmd->parsed()) {
        auto judge = open_backend(judge_flags, common, "judge");
        auto replay = open_backend(replay_flags, common, "replay");
        PipelineConfig cfg;
        cfg.corpus = corpus;
        cfg.workdir = workdir;
        cfg.judge = judge_cfg;
        cfg.kinds = parse_kinds(kinds);
        cfg.metric = metric;
        cfg.scorer_command = scorer_cmd;
        cfg.replay = replay_opts;
        cfg.options = stage_options(common);
        std::cout << run_pipeline(cfg, judge.get(), replay.get());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const PartialFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const ScorerError& e) {
        std::cerr << "scorer error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const SchemaError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
