#pragma once

// Resolution judging, quality metrics and the intervention report.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "mtaudit/chat.hpp"
#include "mtaudit/corpus.hpp"
#include "mtaudit/intervene.hpp"
#include "mtaudit/judge.hpp"
#include "mtaudit/locate.hpp"

namespace mtaudit {

// ---------------------------------------------------------------------------
// chrF

/// Character n-gram F-beta, averaged uniformly over n = 1..max_n.
///
/// Whitespace is removed before counting and n-grams are taken over code
/// points. Orders for which the reference has no n-grams are left out of the
/// average; an order where only the hypothesis is too short scores 0.
inline double chrf(std::string_view hypothesis, std::string_view reference, int max_n = 6, double beta = 2.0) {
    if (max_n < 1) throw std::invalid_argument("chrf: max_n must be at least 1");
    auto strip = [](std::string_view s) {
        std::u32string out;
        for (char32_t c : utf8_decode(s))
            if (!(c < 0x80 && is_space(static_cast<unsigned char>(c)))) out.push_back(c);
        return out;
    };
    const std::u32string hyp = strip(hypothesis);
    const std::u32string ref = strip(reference);
    if (ref.empty()) throw std::invalid_argument("chrf: empty reference");
    if (hyp.empty()) return 0.0;

    const double b2 = beta * beta;
    double total = 0.0;
    int orders = 0;
    for (int n = 1; n <= max_n; ++n) {
        auto nn = static_cast<std::size_t>(n);
        if (ref.size() < nn) break;
        ++orders;
        if (hyp.size() < nn) continue;
        std::unordered_map<std::u32string, long long> ref_counts;
        for (std::size_t i = 0; i + nn <= ref.size(); ++i) ++ref_counts[ref.substr(i, nn)];
        long long match = 0;
        for (std::size_t i = 0; i + nn <= hyp.size(); ++i) {
            auto it = ref_counts.find(hyp.substr(i, nn));
            if (it != ref_counts.end() && it->second > 0) {
                --it->second;
                ++match;
            }
        }
        if (match == 0) continue;
        double p = static_cast<double>(match) / static_cast<double>(hyp.size() - nn + 1);
        double r = static_cast<double>(match) / static_cast<double>(ref.size() - nn + 1);
        total += (1.0 + b2) * p * r / (b2 * p + r);
    }
    return total / orders;
}

// ---------------------------------------------------------------------------
// external scorer

class ScorerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScoreInput {
    std::string source;
    std::string hypothesis;
    std::string reference;
};

namespace detail {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& stem) {
        std::string tmpl = (std::filesystem::temp_directory_path() / (stem + "-XXXXXX")).string();
        int fd = ::mkstemp(tmpl.data());
        if (fd < 0) throw ScorerError("cannot create temporary file");
        ::close(fd);
        path = tmpl;
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
    TempFile(const TempFile&) = delete;
    TempFile& operator=(const TempFile&) = delete;
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace detail

/// Runs `command` through the shell with the pairs as JSONL on stdin and
/// reads one decimal score per stdout line, in input order.
inline std::vector<double> score_with_external(const std::string& command, const std::vector<ScoreInput>& pairs) {
    if (pairs.empty()) return {};
    detail::TempFile input("mtaudit-score-in");
    detail::TempFile errors("mtaudit-score-err");
    std::vector<json> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs)
        rows.push_back({{"source", p.source}, {"hypothesis", p.hypothesis}, {"reference", p.reference}});
    write_jsonl(input.path, rows);

    std::string full = "(" + command + ") < " + detail::shell_quote(input.path.string()) + " 2> " +
                       detail::shell_quote(errors.path.string());
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) throw ScorerError("cannot start scorer: " + command);
    std::string out;
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
    int status = ::pclose(pipe);

    auto diagnostics = [&] {
        std::string err;
        try {
            err = read_file(errors.path);
        } catch (const InputError&) {
        }
        err = std::string(trim(err));
        if (err.size() > 2000) err = err.substr(0, 2000) + "...";
        return err.empty() ? std::string() : "; stderr: " + err;
    };
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        throw ScorerError("scorer exited with status " + std::to_string(code) + diagnostics());
    }

    std::vector<double> scores;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos < out.size()) {
        std::size_t nl = out.find('\n', pos);
        if (nl == std::string::npos) nl = out.size();
        std::string_view line = trim(std::string_view(out).substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (line.empty()) continue;
        std::string text(line);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != text.size()) throw ScorerError("scorer output line " + std::to_string(lineno) + " is not a number: " + text);
        scores.push_back(v);
    }
    if (scores.size() != pairs.size())
        throw ScorerError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(pairs.size()) + " inputs" + diagnostics());
    return scores;
}

// ---------------------------------------------------------------------------
// resolution

struct ResolutionVerdict {
    std::string spec_id;
    std::string sample_id;
    std::string issue_id;
    InterventionKind kind = InterventionKind::Hedging;
    bool resolved = false;
    std::string evidence;
};

inline json to_json(const ResolutionVerdict& v) {
    return {{"spec_id", v.spec_id},   {"sample_id", v.sample_id}, {"issue_id", v.issue_id},
            {"kind", std::string(to_string(v.kind))}, {"resolved", v.resolved}, {"evidence", v.evidence}};
}

inline ResolutionVerdict verdict_from_json(const json& j) {
    ResolutionVerdict v;
    v.spec_id = j.at("spec_id").get<std::string>();
    v.sample_id = j.at("sample_id").get<std::string>();
    v.issue_id = j.at("issue_id").get<std::string>();
    v.kind = intervention_from_string(j.at("kind").get<std::string>());
    v.resolved = j.at("resolved").get<bool>();
    v.evidence = j.value("evidence", "");
    return v;
}

inline constexpr std::string_view kFixJudgeFailed = "fix-judge failed";

/// Whether a fix-judge issue is the original issue again: same category and
/// overlapping normalized source quotes, or the same trace sentence index
/// when either side lacks a source quote.
inline bool same_issue(const RawIssue& original, const RawIssue& fresh) {
    if (original.category != fresh.category) return false;
    std::string a = normalize(original.source_quote.value_or(""));
    std::string b = normalize(fresh.source_quote.value_or(""));
    if (!a.empty() && !b.empty()) return a.find(b) != std::string::npos || b.find(a) != std::string::npos;
    return original.trace_sentence_idx == fresh.trace_sentence_idx;
}

/// Re-runs the detection judge once, greedily, on (x, new trace, new output).
/// Schema failures after the configured retries yield an unresolved verdict.
inline ResolutionVerdict judge_resolution(const Sample& original, const Issue& issue, std::string_view new_trace,
                                          std::string_view new_output, ChatBackend& backend,
                                          const JudgeConfig& cfg = {}) {
    Sample replayed = original;
    replayed.trace = std::string(new_trace);
    replayed.output = std::string(new_output);
    auto tok = tokenize_trace(replayed.trace);
    ChatRequest req;
    req.user = build_judge_prompt(replayed, tok);
    req.temperature = 0.0;
    req.max_tokens = cfg.max_tokens;
    req.seed = 0;

    ResolutionVerdict v;
    v.sample_id = original.id;
    v.issue_id = issue.id();
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        auto resp = complete_with_retry(backend, req, cfg.transport);
        RawJudgment j;
        try {
            j = parse_judgment(resp.content, replayed.trace, 0);
        } catch (const SchemaError&) {
            continue;
        }
        for (const auto& fresh : j.issues) {
            if (same_issue(issue, fresh)) {
                v.resolved = false;
                v.evidence = fresh.rationale.empty() ? "issue persists" : fresh.rationale;
                return v;
            }
        }
        v.resolved = true;
        v.evidence = j.summary.empty() ? "no matching issue" : j.summary;
        return v;
    }
    v.resolved = false;
    v.evidence = std::string(kFixJudgeFailed);
    return v;
}

// ---------------------------------------------------------------------------
// quality deltas

struct QualityScore {
    std::string spec_id;
    std::string sample_id;
    std::optional<InterventionKind> kind;  // absent for the baseline
    std::string metric;
    double score = 0;
};

inline json to_json(const QualityScore& s) {
    return {{"spec_id", s.spec_id},
            {"sample_id", s.sample_id},
            {"kind", s.kind ? json(std::string(to_string(*s.kind))) : json(nullptr)},
            {"metric", s.metric},
            {"score", s.score}};
}

inline QualityScore quality_score_from_json(const json& j) {
    QualityScore s;
    s.spec_id = j.at("spec_id").get<std::string>();
    s.sample_id = j.at("sample_id").get<std::string>();
    if (j.contains("kind") && !j["kind"].is_null()) s.kind = intervention_from_string(j["kind"].get<std::string>());
    s.metric = j.at("metric").get<std::string>();
    s.score = j.at("score").get<double>();
    return s;
}

struct QualityDelta {
    std::string spec_id;
    std::string sample_id;
    InterventionKind kind = InterventionKind::Hedging;
    std::string metric;
    double baseline = 0;
    double intervened = 0;
    double delta() const { return intervened - baseline; }
};

inline json to_json(const QualityDelta& d) {
    return {{"spec_id", d.spec_id},   {"sample_id", d.sample_id}, {"kind", std::string(to_string(d.kind))},
            {"metric", d.metric},     {"baseline", d.baseline},   {"intervened", d.intervened},
            {"delta", d.delta()}};
}

inline QualityDelta quality_delta_from_json(const json& j) {
    QualityDelta d;
    d.spec_id = j.at("spec_id").get<std::string>();
    d.sample_id = j.at("sample_id").get<std::string>();
    d.kind = intervention_from_string(j.at("kind").get<std::string>());
    d.metric = j.at("metric").get<std::string>();
    d.baseline = j.at("baseline").get<double>();
    d.intervened = j.at("intervened").get<double>();
    return d;
}

/// Pairs every intervened score with its sample's baseline under the same metric.
inline std::vector<QualityDelta> pair_deltas(const std::vector<QualityScore>& scores) {
    std::map<std::pair<std::string, std::string>, double> baseline;  // (sample, metric)
    for (const auto& s : scores)
        if (!s.kind) baseline[{s.sample_id, s.metric}] = s.score;
    std::vector<QualityDelta> out;
    for (const auto& s : scores) {
        if (!s.kind) continue;
        auto it = baseline.find({s.sample_id, s.metric});
        if (it == baseline.end())
            throw InputError("no " + s.metric + " baseline score for sample " + s.sample_id);
        out.push_back({s.spec_id, s.sample_id, *s.kind, s.metric, it->second, s.score});
    }
    return out;
}

// ---------------------------------------------------------------------------
// aggregation

struct ReportKey {
    std::string model_tag;
    std::string pair;
    InterventionKind kind;

    auto tie() const { return std::tie(model_tag, pair, kind); }
    bool operator<(const ReportKey& o) const { return tie() < o.tie(); }
    bool operator==(const ReportKey& o) const { return tie() == o.tie(); }
};

struct ReportRow {
    ReportKey key;
    long long resolved = 0;
    long long total = 0;
    double delta_sum = 0;
    long long delta_count = 0;
    bool best_rate = false;
    bool best_delta = false;

    double rate() const { return total ? static_cast<double>(resolved) / static_cast<double>(total) : 0.0; }
    std::optional<double> mean_delta() const {
        if (delta_count == 0) return std::nullopt;
        return delta_sum / static_cast<double>(delta_count);
    }
    std::string rate_text() const { return format_percent(resolved, total); }
    std::string delta_text() const {
        auto d = mean_delta();
        return d ? format_delta(*d) : "n/a";
    }
};

struct AggregateReport {
    std::vector<ReportRow> rows;
};

/// Per-(model, pair, kind) counts. Rows without verdicts are omitted; the
/// best rate and best mean delta within each (model, pair) are flagged.
inline AggregateReport aggregate(const std::vector<ResolutionVerdict>& verdicts, const std::vector<QualityDelta>& deltas,
                                 const std::vector<Sample>& samples) {
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    auto key_for = [&](const std::string& sample_id, InterventionKind kind) {
        auto it = by_id.find(sample_id);
        if (it == by_id.end()) throw InputError("unknown sample " + sample_id + " in aggregation input");
        return ReportKey{it->second->model_tag, it->second->pair.label(), kind};
    };

    std::map<std::string, std::pair<std::string, InterventionKind>> spec_keys;
    auto check_spec = [&](const std::string& spec_id, const std::string& sample_id, InterventionKind kind) {
        auto [it, inserted] = spec_keys.emplace(spec_id, std::make_pair(sample_id, kind));
        if (!inserted && (it->second.first != sample_id || it->second.second != kind))
            throw InputError("inconsistent keys for spec " + spec_id);
    };

    std::map<ReportKey, ReportRow> rows;
    for (const auto& v : verdicts) {
        check_spec(v.spec_id, v.sample_id, v.kind);
        auto key = key_for(v.sample_id, v.kind);
        auto& row = rows[key];
        row.key = key;
        ++row.total;
        if (v.resolved) ++row.resolved;
    }
    for (const auto& d : deltas) {
        if (d.metric != deltas.front().metric)
            throw InputError("deltas mix metrics " + deltas.front().metric + " and " + d.metric);
        check_spec(d.spec_id, d.sample_id, d.kind);
        auto key = key_for(d.sample_id, d.kind);
        auto it = rows.find(key);
        if (it == rows.end()) continue;
        it->second.delta_sum += d.delta();
        ++it->second.delta_count;
    }

    AggregateReport report;
    for (auto& [k, row] : rows)
        if (row.total > 0) report.rows.push_back(row);

    // flag maxima per (model, pair)
    std::size_t i = 0;
    while (i < report.rows.size()) {
        std::size_t j = i;
        while (j < report.rows.size() && report.rows[j].key.model_tag == report.rows[i].key.model_tag &&
               report.rows[j].key.pair == report.rows[i].key.pair)
            ++j;
        std::size_t best = i;
        for (std::size_t r = i; r < j; ++r)
            if (report.rows[r].resolved * report.rows[best].total > report.rows[best].resolved * report.rows[r].total)
                best = r;
        for (std::size_t r = i; r < j; ++r)
            report.rows[r].best_rate = report.rows[r].resolved * report.rows[best].total ==
                                       report.rows[best].resolved * report.rows[r].total;
        std::optional<std::string> best_delta;
        double best_value = 0;
        for (std::size_t r = i; r < j; ++r) {
            auto d = report.rows[r].mean_delta();
            if (d && (!best_delta || *d > best_value)) {
                best_value = *d;
                best_delta = report.rows[r].delta_text();
            }
        }
        for (std::size_t r = i; r < j; ++r)
            report.rows[r].best_delta = best_delta && report.rows[r].mean_delta() &&
                                        report.rows[r].delta_text() == *best_delta;
        i = j;
    }
    return report;
}

inline json to_json(const ReportRow& r) {
    json j = {{"model_tag", r.key.model_tag},
              {"pair", r.key.pair},
              {"kind", std::string(to_string(r.key.kind))},
              {"resolved", r.resolved},
              {"total", r.total},
              {"rate", r.rate_text()},
              {"best_rate", r.best_rate},
              {"best_delta", r.best_delta}};
    auto d = r.mean_delta();
    j["mean_delta"] = d ? json(r.delta_text()) : json(nullptr);
    return j;
}

namespace detail {

inline std::string pad(std::string s, std::size_t width) {
    std::size_t len = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++len;
    if (len < width) s.append(width - len, ' ');
    return s;
}

/// Left-aligned columns separated by two spaces, trailing blanks trimmed.
inline std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::size_t len = 0;
            for (unsigned char ch : row[c])
                if ((ch & 0xC0) != 0x80) ++len;
            widths[c] = std::max(widths[c], len);
        }
    }
    std::string out;
    for (const auto& row : cells) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) line += "  ";
            line += pad(row[c], widths[c]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace detail

/// Plain-text table; '*' marks the best rate and delta within a (model, pair).
inline std::string render_report(const AggregateReport& report) {
    std::vector<std::vector<std::string>> cells{{"model", "pair", "intervention", "resolved/total", "rate", "delta"}};
    for (const auto& r : report.rows) {
        cells.push_back({r.key.model_tag.empty() ? "-" : r.key.model_tag, r.key.pair,
                         std::string(to_string(r.key.kind)),
                         std::to_string(r.resolved) + " / " + std::to_string(r.total),
                         r.rate_text() + (r.best_rate ? "*" : ""), r.delta_text() + (r.best_delta ? "*" : "")});
    }
    return detail::render_table(cells);
}

/// Detection table rows: one per (model, pair).
inline std::string render_detection_table(const std::vector<std::pair<std::string, DetectionSummary>>& rows) {
    std::vector<std::vector<std::string>> cells{
        {"group", "n", "w/ errors", "error rate", "avg steps", "avg errors"}};
    for (const auto& [label, s] : rows)
        cells.push_back({label, std::to_string(s.n), std::to_string(s.n_with_errors), s.error_rate(), s.avg_steps(),
                         s.avg_errors_per_sample()});
    return detail::render_table(cells);
}

}  // namespace mtaudit
