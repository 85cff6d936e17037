#pragma once

// LLM-as-a-judge detection: prompt construction, structured-output parsing,
// k-sample majority voting, and detection summaries.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mtaudit/chat.hpp"
#include "mtaudit/corpus.hpp"
#include "mtaudit/locate.hpp"
#include "mtaudit/prompts.hpp"

namespace mtaudit {

enum class IssueCategory { InputTrace, TraceOutput, TraceInternal };
enum class Severity { Error, FixedLater };

inline std::string_view to_string(IssueCategory c) {
    switch (c) {
        case IssueCategory::InputTrace: return "INPUT_TRACE";
        case IssueCategory::TraceOutput: return "TRACE_OUTPUT";
        case IssueCategory::TraceInternal: return "TRACE_INTERNAL";
    }
    return "?";
}

inline std::optional<IssueCategory> parse_category(std::string_view s) {
    if (s == "INPUT_TRACE") return IssueCategory::InputTrace;
    if (s == "TRACE_OUTPUT") return IssueCategory::TraceOutput;
    if (s == "TRACE_INTERNAL") return IssueCategory::TraceInternal;
    return std::nullopt;
}

inline std::string_view to_string(Severity s) { return s == Severity::Error ? "ERROR" : "FIXED_LATER"; }

inline std::optional<Severity> parse_severity(std::string_view s) {
    if (s == "ERROR") return Severity::Error;
    if (s == "FIXED_LATER") return Severity::FixedLater;
    return std::nullopt;
}

/// Judge output that does not satisfy the schema.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RawIssue {
    IssueCategory category = IssueCategory::InputTrace;
    long long trace_sentence_idx = 0;
    std::string trace_quote;
    std::optional<std::string> source_quote;
    std::optional<std::string> output_quote;
    std::string rationale;
    Severity severity = Severity::Error;
    /// The quote was found neither verbatim nor after normalization.
    bool quote_unverified = false;

    friend bool operator==(const RawIssue&, const RawIssue&) = default;
};

struct RawJudgment {
    bool has_issues = false;
    std::string summary;
    std::vector<RawIssue> issues;
    int run_index = 0;
};

/// A majority-surviving issue for one sample.
struct Issue : RawIssue {
    std::string sample_id;
    int votes = 0;

    /// Stable within a sample: detection keeps one issue per (category, index).
    std::string id() const {
        return sample_id + ":" + std::string(to_string(category)) + ":" + std::to_string(trace_sentence_idx);
    }
    bool targeted() const { return severity == Severity::Error; }

    friend bool operator==(const Issue&, const Issue&) = default;
};

struct JudgeConfig {
    int k = 5;
    double temperature = 0.4;
    int majority = 3;
    int max_retries = 2;
    int max_tokens = 4096;
    RetryPolicy transport{};

    void validate() const {
        if (k < 1) throw std::invalid_argument("judge k must be >= 1");
        if (majority < 1 || majority > k) throw std::invalid_argument("judge majority must be in [1, k]");
        if (temperature < 0) throw std::invalid_argument("judge temperature must be >= 0");
        if (max_retries < 0) throw std::invalid_argument("judge max_retries must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// serialization

inline json to_json(const Issue& i) {
    json j = {{"issue_id", i.id()},
              {"sample_id", i.sample_id},
              {"category", std::string(to_string(i.category))},
              {"trace_sentence_idx", i.trace_sentence_idx},
              {"trace_quote", i.trace_quote},
              {"source_quote", i.source_quote ? json(*i.source_quote) : json(nullptr)},
              {"output_quote", i.output_quote ? json(*i.output_quote) : json(nullptr)},
              {"rationale", i.rationale},
              {"severity", std::string(to_string(i.severity))},
              {"votes", i.votes}};
    if (i.quote_unverified) j["quote_unverified"] = true;
    return j;
}

inline Issue issue_from_json(const json& j, const std::string& where = "") {
    using detail::optional_string;
    using detail::require_string;
    Issue i;
    i.sample_id = require_string(j, "sample_id", where);
    auto cat = require_string(j, "category", where);
    auto parsed = parse_category(cat);
    if (!parsed) throw InputError(where + "unknown category " + cat);
    i.category = *parsed;
    if (!j.contains("trace_sentence_idx") || !j["trace_sentence_idx"].is_number_integer())
        throw InputError(where + "missing field trace_sentence_idx");
    i.trace_sentence_idx = j["trace_sentence_idx"].get<long long>();
    i.trace_quote = optional_string(j, "trace_quote", where).value_or("");
    i.source_quote = optional_string(j, "source_quote", where);
    i.output_quote = optional_string(j, "output_quote", where);
    i.rationale = require_string(j, "rationale", where);
    auto sev = optional_string(j, "severity", where).value_or("ERROR");
    auto parsed_sev = parse_severity(sev);
    if (!parsed_sev) throw InputError(where + "unknown severity " + sev);
    i.severity = *parsed_sev;
    i.votes = j.value("votes", 0);
    i.quote_unverified = j.value("quote_unverified", false);
    return i;
}

inline std::vector<Issue> load_issues(const std::filesystem::path& path) {
    std::vector<Issue> out;
    for_each_jsonl(path, [&](std::size_t lineno, const json& j) {
        out.push_back(issue_from_json(j, "line " + std::to_string(lineno) + ": "));
    });
    return out;
}

inline void save_issues(const std::filesystem::path& path, const std::vector<Issue>& issues) {
    std::vector<json> rows;
    for (const auto& i : issues) rows.push_back(to_json(i));
    write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------
// prompt + parsing

inline std::string build_judge_prompt(const Sample& sample, const TokenizedTrace& tok) {
    return prompts::judge_prompt(sample.source, tok, sample.output);
}

namespace detail {

// End (exclusive) of the balanced JSON object starting at `open`, honoring
// string literals and escapes, or npos.
inline std::size_t balanced_object_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::string_view::npos;
}

inline std::optional<json> try_parse_object(std::string_view text) {
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

}  // namespace detail

/// Extracts the judge's JSON object from model text that may be wrapped in
/// prose or a Markdown code fence.
inline json extract_json_object(std::string_view text) {
    for (std::size_t fence = text.find("```"); fence != std::string_view::npos;) {
        std::size_t body = text.find('\n', fence);
        if (body == std::string_view::npos) break;
        std::size_t close = text.find("```", body);
        if (close == std::string_view::npos) break;
        if (auto j = detail::try_parse_object(trim(text.substr(body + 1, close - body - 1)))) return *j;
        fence = text.find("```", close + 3);
    }
    for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        std::size_t end = detail::balanced_object_end(text, open);
        if (end == std::string_view::npos) continue;
        if (auto j = detail::try_parse_object(text.substr(open, end - open))) return *j;
    }
    throw SchemaError("no JSON object found in judge output");
}

namespace detail {

inline std::optional<std::string> nullable_string(const json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaError(std::string("field ") + field + " must be a string or null");
    return it->get<std::string>();
}

inline std::string schema_string(const json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) throw SchemaError(std::string("field ") + field + " must be a string");
    return it->get<std::string>();
}

}  // namespace detail

/// Parses and validates one judge response against the judged trace.
/// Quotes missing from the trace (even after normalization) are kept but
/// marked `quote_unverified`.
inline RawJudgment parse_judgment(std::string_view raw_model_text, std::string_view trace, int run_index = 0) {
    json j = extract_json_object(raw_model_text);
    RawJudgment out;
    out.run_index = run_index;
    if (!j.contains("has_issues") || !j["has_issues"].is_boolean())
        throw SchemaError("field has_issues must be a boolean");
    out.has_issues = j["has_issues"].get<bool>();
    out.summary = detail::schema_string(j, "summary");
    if (!j.contains("issues") || !j["issues"].is_array()) throw SchemaError("field issues must be an array");
    if (!out.has_issues && !j["issues"].empty()) throw SchemaError("has_issues is false but issues is non-empty");

    std::optional<std::string> normalized_trace;
    for (const auto& ji : j["issues"]) {
        if (!ji.is_object()) throw SchemaError("issue entries must be objects");
        RawIssue issue;
        auto cat = detail::schema_string(ji, "category");
        auto parsed = parse_category(cat);
        if (!parsed) throw SchemaError("unknown category " + cat);
        issue.category = *parsed;
        if (!ji.contains("trace_sentence_idx") || !ji["trace_sentence_idx"].is_number_integer())
            throw SchemaError("field trace_sentence_idx must be an integer");
        issue.trace_sentence_idx = ji["trace_sentence_idx"].get<long long>();
        if (issue.trace_sentence_idx < 0) throw SchemaError("field trace_sentence_idx must be non-negative");
        issue.trace_quote = detail::schema_string(ji, "trace_quote");
        issue.source_quote = detail::nullable_string(ji, "source_quote");
        issue.output_quote = detail::nullable_string(ji, "output_quote");
        issue.rationale = detail::schema_string(ji, "rationale");
        if (auto sev = detail::nullable_string(ji, "severity")) {
            auto ps = parse_severity(*sev);
            if (!ps) throw SchemaError("unknown severity " + *sev);
            issue.severity = *ps;
        }
        if (!issue.trace_quote.empty() && trace.find(issue.trace_quote) == std::string_view::npos) {
            if (!normalized_trace) normalized_trace = normalize(trace);
            auto nq = normalize(issue.trace_quote);
            issue.quote_unverified = nq.empty() || normalized_trace->find(nq) == std::string::npos;
        }
        out.issues.push_back(std::move(issue));
    }
    return out;
}

// ---------------------------------------------------------------------------
// voting

/// Groups raw issues across runs by (category, sentence index) and keeps
/// groups supported by at least `majority` distinct runs. Each kept issue
/// takes its fields from the lowest-indexed supporting run, so the result is
/// independent of the order in which runs are supplied.
inline std::vector<Issue> aggregate_votes(std::span<const RawJudgment> runs, int majority,
                                          const std::string& sample_id) {
    using Key = std::pair<IssueCategory, long long>;
    struct Group {
        std::set<int> runs;
        const RawIssue* representative = nullptr;
        int representative_run = 0;
    };
    std::map<Key, Group> groups;
    for (const auto& run : runs) {
        for (const auto& issue : run.issues) {
            auto& g = groups[{issue.category, issue.trace_sentence_idx}];
            g.runs.insert(run.run_index);
            if (!g.representative || run.run_index < g.representative_run) {
                g.representative = &issue;
                g.representative_run = run.run_index;
            }
        }
    }
    std::vector<Issue> out;
    for (const auto& [key, g] : groups) {
        int votes = static_cast<int>(g.runs.size());
        if (votes < majority) continue;
        Issue issue;
        static_cast<RawIssue&>(issue) = *g.representative;
        issue.sample_id = sample_id;
        issue.votes = votes;
        out.push_back(std::move(issue));
    }
    // Trace order reads naturally in issue files.
    std::stable_sort(out.begin(), out.end(), [](const Issue& a, const Issue& b) {
        return std::tie(a.trace_sentence_idx, a.category) < std::tie(b.trace_sentence_idx, b.category);
    });
    return out;
}

/// One judge run: retries schema failures up to cfg.max_retries, after which
/// the run counts as an empty judgment. Transport failures escape as
/// BackendError.
inline RawJudgment run_judge_once(ChatBackend& backend, const std::string& prompt, std::string_view trace,
                                  const JudgeConfig& cfg, int run_index, double temperature) {
    ChatRequest req;
    req.user = prompt;
    req.temperature = temperature;
    req.max_tokens = cfg.max_tokens;
    req.seed = run_index;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        auto resp = complete_with_retry(backend, req, cfg.transport);
        try {
            return parse_judgment(resp.content, trace, run_index);
        } catch (const SchemaError&) {
        }
    }
    RawJudgment empty;
    empty.run_index = run_index;
    empty.summary = "schema validation failed";
    return empty;
}

/// Samples cfg.k judgments for one sample and aggregates them by majority vote.
inline std::vector<Issue> detect(const Sample& sample, const JudgeConfig& cfg, ChatBackend& backend) {
    cfg.validate();
    if (trim(sample.trace).empty()) return {};  // direct translation, nothing to audit
    auto tok = tokenize_trace(sample.trace);
    auto prompt = build_judge_prompt(sample, tok);
    std::vector<RawJudgment> runs;
    runs.reserve(static_cast<std::size_t>(cfg.k));
    for (int r = 0; r < cfg.k; ++r) runs.push_back(run_judge_once(backend, prompt, sample.trace, cfg, r, cfg.temperature));
    return aggregate_votes(runs, cfg.majority, sample.id);
}

// ---------------------------------------------------------------------------
// summaries

struct DetectionSummary {
    long long n = 0;
    long long n_with_errors = 0;
    long long total_errors = 0;
    long long total_steps = 0;

    std::string error_rate() const { return format_percent(n_with_errors, n); }
    std::string avg_steps() const { return format_ratio(total_steps, n, 2); }
    std::string avg_errors_per_sample() const { return format_ratio(total_errors, n, 2); }
    double error_rate_value() const { return static_cast<double>(n_with_errors) / static_cast<double>(n); }
};

/// Table-style detection counts. Only ERROR-severity issues count; sentence
/// counts come from tokenizing each sample's trace.
inline DetectionSummary summarize_detection(const std::vector<Issue>& issues, const std::vector<Sample>& samples) {
    if (samples.empty()) throw InputError("detection summary needs at least one sample");
    std::map<std::string, long long> errors_by_sample;
    for (const auto& s : samples) errors_by_sample[s.id] = 0;
    DetectionSummary sum;
    for (const auto& i : issues) {
        auto it = errors_by_sample.find(i.sample_id);
        if (it == errors_by_sample.end()) throw InputError("issue references unknown sample " + i.sample_id);
        if (!i.targeted()) continue;
        ++it->second;
        ++sum.total_errors;
    }
    sum.n = static_cast<long long>(samples.size());
    for (const auto& s : samples) sum.total_steps += static_cast<long long>(tokenize_trace(s.trace).size());
    for (const auto& [id, count] : errors_by_sample)
        if (count > 0) ++sum.n_with_errors;
    return sum;
}

}  // namespace mtaudit
