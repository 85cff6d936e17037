#pragma once

// Pipeline stages shared by the command-line tool and the end-to-end tests.
// Each stage reads JSONL, writes JSONL plus a `<out>.manifest.json` sidecar,
// and logs finished items to `<out>.progress.jsonl` so a rerun skips them.

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mtaudit/annotate.hpp"
#include "mtaudit/chat.hpp"
#include "mtaudit/corpus.hpp"
#include "mtaudit/evaluate.hpp"
#include "mtaudit/intervene.hpp"
#include "mtaudit/judge.hpp"
#include "mtaudit/prompts.hpp"
#include "mtaudit/replay.hpp"

namespace mtaudit {

inline constexpr std::string_view kToolVersion = "0.3.0";

/// Some items failed; the others were persisted. Exit code 3.
class PartialFailure : public std::runtime_error {
public:
    PartialFailure(std::string stage, std::vector<std::string> ids, std::string first_error)
        : std::runtime_error(stage + ": " + std::to_string(ids.size()) + " item(s) failed: " + join(ids) +
                             " (first error: " + first_error + ")"),
          failed_ids(std::move(ids)) {}
    std::vector<std::string> failed_ids;

private:
    static std::string join(const std::vector<std::string>& ids) {
        std::string out;
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) out += (i ? "," : "") + ids[i];
        if (ids.size() > 20) out += ",...";
        return out;
    }
};

// ---------------------------------------------------------------------------
// manifests

struct RunManifest {
    std::string stage;
    json config = json::object();
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path output;

    json to_json() const {
        json in = json::array();
        for (const auto& p : inputs)
            in.push_back({{"path", p.generic_string()}, {"sha", content_hash(read_file(p))}});
        return {{"tool", "mtaudit"},
                {"tool_version", std::string(kToolVersion)},
                {"prompt_template_version", prompts::kPromptTemplateVersion},
                {"stage", stage},
                {"config", config},
                {"inputs", in},
                {"output", output.generic_string()}};
    }
};

inline std::filesystem::path sidecar(const std::filesystem::path& out, std::string_view suffix) {
    auto p = out;
    p += suffix;
    return p;
}

inline void write_manifest(const RunManifest& m) {
    write_file(sidecar(m.output, ".manifest.json"), m.to_json().dump(2) + "\n");
}

inline void require_input(const std::filesystem::path& path, std::string_view what, std::string_view producer) {
    if (!std::filesystem::exists(path))
        throw InputError(std::string(what) + " file " + path.string() + " not found; run `" + std::string(producer) +
                         "` first");
}

// ---------------------------------------------------------------------------
// resumable item loop

struct StageItem {
    std::string id;
    std::string key;  // content hash of everything the result depends on
    std::function<json()> run;
};

struct StageOptions {
    std::size_t max_concurrency = 4;
    bool resume = true;
};

/// Runs the items not yet recorded in the progress log and returns all
/// results in item order. Backend failures are collected per item; if any
/// item failed a PartialFailure (some succeeded) or BackendError (all failed)
/// is thrown after the others have been persisted.
inline std::vector<json> run_items(const std::string& stage, const std::filesystem::path& out,
                                   const std::vector<StageItem>& items, const StageOptions& opt) {
    const auto progress = sidecar(out, ".progress.jsonl");
    std::map<std::string, json> done;
    if (!opt.resume) std::filesystem::remove(progress);
    if (opt.resume && std::filesystem::exists(progress)) {
        std::string text = read_file(progress);
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t nl = text.find('\n', pos);
            if (nl == std::string::npos) break;  // torn tail from an interrupted run
            std::string_view line(text.data() + pos, nl - pos);
            pos = nl + 1;
            if (trim(line).empty()) continue;
            try {
                auto row = json::parse(line);
                done[row.at("key").get<std::string>()] = row.at("result");
            } catch (const std::exception&) {
                continue;
            }
        }
    }

    std::vector<std::optional<json>> results(items.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (auto it = done.find(items[i].key); it != done.end()) results[i] = it->second;
        else todo.push_back(i);
    }

    std::mutex mu;
    std::vector<std::pair<std::size_t, std::string>> failures;
    parallel_for(todo.size(), opt.max_concurrency, [&](std::size_t t) {
        const auto i = todo[t];
        try {
            json r = items[i].run();
            std::lock_guard lock(mu);
            append_jsonl(progress, {{"key", items[i].key}, {"item", items[i].id}, {"result", r}});
            results[i] = std::move(r);
        } catch (const BackendError& e) {
            std::lock_guard lock(mu);
            failures.emplace_back(i, e.what());
        } catch (const ScorerError& e) {
            std::lock_guard lock(mu);
            failures.emplace_back(i, e.what());
        }
    });

    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        std::vector<std::string> ids;
        for (const auto& [i, msg] : failures) ids.push_back(items[i].id);
        if (failures.size() == items.size())
            throw BackendError("-", stage + ": every item failed; first error: " + failures.front().second);
        throw PartialFailure(stage, ids, failures.front().second);
    }
    std::vector<json> out_rows;
    out_rows.reserve(items.size());
    for (auto& r : results) out_rows.push_back(std::move(*r));
    return out_rows;
}

inline std::string item_key(const json& parts) { return content_hash(parts.dump()); }

// ---------------------------------------------------------------------------
// stages

inline json judge_config_json(const JudgeConfig& c) {
    return {{"k", c.k}, {"temperature", c.temperature}, {"majority", c.majority},
            {"max_retries", c.max_retries}, {"max_tokens", c.max_tokens}};
}

struct DetectStage {
    std::filesystem::path corpus;
    CorpusFormat format = CorpusFormat::Triplets;
    std::filesystem::path out;
    JudgeConfig judge;
    StageOptions options;
};

inline std::vector<Issue> run_detect(const DetectStage& st, ChatBackend& judge_backend) {
    require_input(st.corpus, "corpus", "a corpus export");
    st.judge.validate();
    auto samples = load_samples(st.corpus, st.format);
    const json cfg = judge_config_json(st.judge);
    std::vector<StageItem> items;
    for (const auto& s : samples) {
        items.push_back({s.id, item_key({{"stage", "detect"}, {"sample", to_json(s)}, {"judge", cfg},
                                         {"backend", judge_backend.describe()},
                                         {"template", prompts::kPromptTemplateVersion}}),
                         [&, s] {
                             json arr = json::array();
                             for (const auto& i : detect(s, st.judge, judge_backend)) arr.push_back(to_json(i));
                             return arr;
                         }});
    }
    auto rows = run_items("detect", st.out, items, st.options);
    std::vector<Issue> issues;
    for (const auto& arr : rows)
        for (const auto& j : arr) issues.push_back(issue_from_json(j));
    save_issues(st.out, issues);
    write_manifest({"detect",
                    {{"judge", cfg}, {"judge_backend", judge_backend.describe()}},
                    {st.corpus},
                    st.out});
    return issues;
}

struct InterveneStage {
    std::filesystem::path corpus;
    std::filesystem::path issues;
    std::filesystem::path out;
    std::vector<InterventionKind> kinds{kAllInterventions.begin(), kAllInterventions.end()};
};

inline SpecBatch run_intervene(const InterveneStage& st) {
    require_input(st.corpus, "corpus", "a corpus export");
    require_input(st.issues, "issues", "detect");
    auto samples = load_samples(st.corpus);
    auto issues = load_issues(st.issues);
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.id);
    for (const auto& i : issues)
        if (!ids.count(i.sample_id)) throw InputError("issue " + i.id() + " references unknown sample " + i.sample_id);

    SpecBatch all;
    for (const auto& s : samples) {
        auto b = build_replay_specs(s, issues, st.kinds);
        for (auto& x : b.specs) all.specs.push_back(std::move(x));
        for (auto& x : b.skipped) all.skipped.push_back(std::move(x));
    }
    std::vector<json> rows, skipped;
    for (const auto& s : all.specs) rows.push_back(to_json(s));
    for (const auto& s : all.skipped) skipped.push_back(to_json(s));
    write_jsonl(st.out, rows);
    write_jsonl(sidecar(st.out, ".skipped.jsonl"), skipped);
    json kinds = json::array();
    for (auto k : st.kinds) kinds.push_back(std::string(to_string(k)));
    write_manifest({"intervene", {{"kinds", kinds}}, {st.corpus, st.issues}, st.out});
    return all;
}

struct ReplayStage {
    std::filesystem::path corpus;
    std::filesystem::path specs;
    std::filesystem::path out;
    ReplayOptions replay;
    StageOptions options;
};

/// Replays every spec plus one baseline per sample that has specs.
inline std::vector<ReplayResult> run_replay(const ReplayStage& st, ChatBackend& backend) {
    require_input(st.corpus, "corpus", "a corpus export");
    require_input(st.specs, "specs", "intervene");
    auto samples = load_samples(st.corpus);
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<ReplaySpec> specs;
    for (const auto& j : read_jsonl(st.specs)) specs.push_back(replay_spec_from_json(j));

    std::set<std::string> with_specs;
    for (const auto& sp : specs) {
        if (!by_id.count(sp.sample_id)) throw InputError("spec " + sp.spec_id + " references unknown sample " + sp.sample_id);
        with_specs.insert(sp.sample_id);
    }

    const json common = {{"backend", backend.describe()},
                         {"native_thinking", backend.native_thinking()},
                         {"max_tokens", st.replay.max_tokens},
                         {"template", prompts::kPromptTemplateVersion}};
    std::vector<StageItem> items;
    for (const auto& s : samples) {
        if (!with_specs.count(s.id)) continue;
        items.push_back({baseline_spec_id(s.id),
                         item_key({{"stage", "replay"}, {"baseline", to_json(s)}, {"common", common}}),
                         [&, sp = &s] { return to_json(run_baseline(backend, *sp, st.replay)); }});
    }
    for (const auto& sp : specs) {
        const Sample* s = by_id.at(sp.sample_id);
        items.push_back({sp.spec_id,
                         item_key({{"stage", "replay"}, {"spec", to_json(sp)}, {"sample", to_json(*s)}, {"common", common}}),
                         [&, spec = &sp, s] { return to_json(run_spec(backend, *spec, *s, st.replay)); }});
    }
    auto rows = run_items("replay", st.out, items, st.options);
    write_jsonl(st.out, rows);
    write_manifest({"replay", {{"replay_backend", backend.describe()}, {"max_tokens", st.replay.max_tokens}},
                    {st.corpus, st.specs}, st.out});
    std::vector<ReplayResult> out;
    for (const auto& r : rows) out.push_back(replay_result_from_json(r));
    return out;
}

struct ScoreStage {
    std::filesystem::path corpus;
    std::filesystem::path issues;
    std::filesystem::path replays;
    std::filesystem::path out;           // quality scores
    std::filesystem::path verdicts_out;  // resolution verdicts
    std::string metric = "chrf";         // chrf | external
    std::string scorer_command;
    JudgeConfig judge;
    StageOptions options;
};

struct ScoreResult {
    std::vector<QualityScore> scores;
    std::vector<ResolutionVerdict> verdicts;
};

/// Fix-judges every targeted issue of every replay and scores every replay
/// output against its sample's reference.
inline ScoreResult run_score(const ScoreStage& st, ChatBackend& judge_backend) {
    require_input(st.corpus, "corpus", "a corpus export");
    require_input(st.issues, "issues", "detect");
    require_input(st.replays, "replays", "replay");
    if (st.metric != "chrf" && st.metric != "external") throw InputError("unknown metric " + st.metric);
    if (st.metric == "external" && st.scorer_command.empty())
        throw InputError("--scorer-cmd is required with --metric external");
    auto samples = load_samples(st.corpus);
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    auto issues = load_issues(st.issues);
    std::map<std::string, const Issue*> issue_by_id;
    for (const auto& i : issues) issue_by_id[i.id()] = &i;
    std::vector<ReplayResult> replays;
    for (const auto& j : read_jsonl(st.replays)) replays.push_back(replay_result_from_json(j));

    // resolution verdicts
    const json judge_cfg = judge_config_json(st.judge);
    std::vector<StageItem> items;
    for (const auto& r : replays) {
        if (r.baseline()) continue;
        const Sample* s = by_id.count(r.sample_id) ? by_id.at(r.sample_id) : nullptr;
        if (!s) throw InputError("replay " + r.spec_id + " references unknown sample " + r.sample_id);
        for (const auto& iid : r.target_issue_ids) {
            auto it = issue_by_id.find(iid);
            if (it == issue_by_id.end()) throw InputError("replay " + r.spec_id + " targets unknown issue " + iid);
            const Issue* issue = it->second;
            items.push_back({r.spec_id + "#" + iid,
                             item_key({{"stage", "fix-judge"}, {"replay", to_json(r)}, {"issue", to_json(*issue)},
                                       {"sample", to_json(*s)}, {"judge", judge_cfg},
                                       {"backend", judge_backend.describe()}}),
                             [&, r, s, issue] {
                                 auto v = judge_resolution(*s, *issue, r.edited_trace, r.output, judge_backend, st.judge);
                                 v.spec_id = r.spec_id;
                                 v.kind = *r.kind;
                                 return to_json(v);
                             }});
        }
    }
    ScoreResult result;
    std::vector<json> verdict_rows = run_items("fix-judge", st.verdicts_out, items, st.options);
    for (const auto& j : verdict_rows) result.verdicts.push_back(verdict_from_json(j));
    write_jsonl(st.verdicts_out, verdict_rows);
    write_manifest({"score-verdicts",
                    {{"judge", judge_cfg}, {"judge_backend", judge_backend.describe()}},
                    {st.corpus, st.issues, st.replays},
                    st.verdicts_out});

    // quality scores; replays of samples without a reference are not scored
    std::vector<const ReplayResult*> scorable;
    for (const auto& r : replays)
        if (by_id.at(r.sample_id)->reference) scorable.push_back(&r);
    std::vector<double> values;
    if (st.metric == "chrf") {
        for (const auto* r : scorable) values.push_back(chrf(r->output, *by_id.at(r->sample_id)->reference));
    } else {
        std::vector<ScoreInput> pairs;
        for (const auto* r : scorable) {
            const Sample* s = by_id.at(r->sample_id);
            pairs.push_back({s->source, r->output, *s->reference});
        }
        values = score_with_external(st.scorer_command, pairs);
    }
    std::vector<json> score_rows;
    for (std::size_t i = 0; i < scorable.size(); ++i) {
        QualityScore q{scorable[i]->spec_id, scorable[i]->sample_id, scorable[i]->kind, st.metric, values[i]};
        score_rows.push_back(to_json(q));
        result.scores.push_back(q);
    }
    write_jsonl(st.out, score_rows);
    json scfg = {{"metric", st.metric}};
    if (st.metric == "external") scfg["scorer_command"] = st.scorer_command;
    write_manifest({"score", scfg, {st.corpus, st.replays}, st.out});
    return result;
}

struct AggregateStage {
    std::filesystem::path corpus;
    std::filesystem::path verdicts;
    std::filesystem::path scores;  // optional
    std::filesystem::path out;
};

inline AggregateReport run_aggregate(const AggregateStage& st) {
    require_input(st.corpus, "corpus", "a corpus export");
    require_input(st.verdicts, "verdicts", "score");
    auto samples = load_samples(st.corpus);
    std::vector<ResolutionVerdict> verdicts;
    for (const auto& j : read_jsonl(st.verdicts)) verdicts.push_back(verdict_from_json(j));
    std::vector<QualityDelta> deltas;
    std::vector<std::filesystem::path> inputs{st.corpus, st.verdicts};
    if (!st.scores.empty()) {
        require_input(st.scores, "scores", "score");
        std::vector<QualityScore> scores;
        for (const auto& j : read_jsonl(st.scores)) scores.push_back(quality_score_from_json(j));
        deltas = pair_deltas(scores);
        inputs.push_back(st.scores);
    }
    auto report = aggregate(verdicts, deltas, samples);
    std::vector<json> rows;
    for (const auto& r : report.rows) rows.push_back(to_json(r));
    write_jsonl(st.out, rows);
    write_manifest({"aggregate", json::object(), inputs, st.out});
    return report;
}

/// Rebuilds an AggregateReport from aggregate.jsonl rows (rendering only).
inline AggregateReport report_from_rows(const std::vector<json>& rows) {
    AggregateReport rep;
    for (const auto& j : rows) {
        ReportRow r;
        r.key = {j.at("model_tag").get<std::string>(), j.at("pair").get<std::string>(),
                 intervention_from_string(j.at("kind").get<std::string>())};
        r.resolved = j.at("resolved").get<long long>();
        r.total = j.at("total").get<long long>();
        r.best_rate = j.value("best_rate", false);
        r.best_delta = j.value("best_delta", false);
        if (j.contains("mean_delta") && !j["mean_delta"].is_null()) {
            r.delta_sum = std::stod(j["mean_delta"].get<std::string>());
            r.delta_count = 1;
        }
        rep.rows.push_back(r);
    }
    return rep;
}

struct ReportStage {
    std::filesystem::path corpus;
    std::filesystem::path issues;       // optional: detection table
    std::filesystem::path aggregate;    // optional: intervention table
    std::filesystem::path annotations;  // optional: validation table
    std::filesystem::path out;
};

/// Detection table per (model, pair), intervention table, and the human
/// validation table when an annotation journal is supplied.
inline std::string build_report(const ReportStage& st) {
    require_input(st.corpus, "corpus", "a corpus export");
    auto samples = load_samples(st.corpus);
    std::string text;
    std::vector<std::filesystem::path> inputs{st.corpus};
    std::vector<Issue> issues;
    if (!st.issues.empty()) {
        require_input(st.issues, "issues", "detect");
        issues = load_issues(st.issues);
        inputs.push_back(st.issues);
        std::vector<std::string> order;
        std::map<std::string, std::vector<Sample>> groups;
        for (const auto& s : samples) {
            std::string g = (s.model_tag.empty() ? "-" : s.model_tag) + " " + s.pair.label();
            if (!groups.count(g)) order.push_back(g);
            groups[g].push_back(s);
        }
        std::vector<std::pair<std::string, DetectionSummary>> rows;
        for (const auto& g : order) {
            std::set<std::string> ids;
            for (const auto& s : groups[g]) ids.insert(s.id);
            std::vector<Issue> mine;
            for (const auto& i : issues)
                if (ids.count(i.sample_id)) mine.push_back(i);
            rows.emplace_back(g, summarize_detection(mine, groups[g]));
        }
        text += "Detection\n" + render_detection_table(rows);
    }
    if (!st.aggregate.empty()) {
        require_input(st.aggregate, "aggregate", "aggregate");
        inputs.push_back(st.aggregate);
        if (!text.empty()) text += "\n";
        text += "Interventions\n" + render_report(report_from_rows(read_jsonl(st.aggregate)));
    }
    if (!st.annotations.empty()) {
        require_input(st.annotations, "annotations", "annotate-serve");
        inputs.push_back(st.annotations);
        RecordStore store(st.annotations);
        if (issues.empty() && !st.issues.empty()) issues = load_issues(st.issues);
        if (!text.empty()) text += "\n";
        text += "Human validation\n" + render_validation(summarize_validation(store.records(), issues, samples));
    }
    if (!st.out.empty()) {
        write_file(st.out, text);
        write_manifest({"report", json::object(), inputs, st.out});
    }
    return text;
}

// ---------------------------------------------------------------------------
// whole pipeline

struct PipelineConfig {
    std::filesystem::path corpus;
    std::filesystem::path workdir;
    JudgeConfig judge;
    std::vector<InterventionKind> kinds{kAllInterventions.begin(), kAllInterventions.end()};
    std::string metric = "chrf";
    std::string scorer_command;
    ReplayOptions replay;
    StageOptions options;
};

struct PipelinePaths {
    std::filesystem::path issues, specs, replays, verdicts, scores, aggregate, report;
    explicit PipelinePaths(const std::filesystem::path& dir)
        : issues(dir / "issues.jsonl"),
          specs(dir / "specs.jsonl"),
          replays(dir / "replays.jsonl"),
          verdicts(dir / "verdicts.jsonl"),
          scores(dir / "scores.jsonl"),
          aggregate(dir / "aggregate.jsonl"),
          report(dir / "report.txt") {}
};

/// detect -> intervene -> replay -> score -> aggregate -> report.
inline std::string run_pipeline(const PipelineConfig& cfg, ChatBackend& judge_backend, ChatBackend& replay_backend) {
    std::filesystem::create_directories(cfg.workdir);
    PipelinePaths p(cfg.workdir);
    run_detect({cfg.corpus, CorpusFormat::Triplets, p.issues, cfg.judge, cfg.options}, judge_backend);
    run_intervene({cfg.corpus, p.issues, p.specs, cfg.kinds});
    run_replay({cfg.corpus, p.specs, p.replays, cfg.replay, cfg.options}, replay_backend);
    ScoreStage sc;
    sc.corpus = cfg.corpus;
    sc.issues = p.issues;
    sc.replays = p.replays;
    sc.out = p.scores;
    sc.verdicts_out = p.verdicts;
    sc.metric = cfg.metric;
    sc.scorer_command = cfg.scorer_command;
    sc.judge = cfg.judge;
    sc.options = cfg.options;
    run_score(sc, judge_backend);
    run_aggregate({cfg.corpus, p.verdicts, p.scores, p.aggregate});
    return build_report({cfg.corpus, p.issues, p.aggregate, {}, p.report});
}

}  // namespace mtaudit
