#pragma once

// The six trace interventions t -> t' and the replay specs they produce.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtaudit/corpus.hpp"
#include "mtaudit/judge.hpp"
#include "mtaudit/locate.hpp"

namespace mtaudit {

enum class InterventionKind { Hedging, Removal, Rereason, Hindsight, Oracle1, OracleK };

inline constexpr std::array<InterventionKind, 6> kAllInterventions{
    InterventionKind::Hedging,   InterventionKind::Removal, InterventionKind::Rereason,
    InterventionKind::Hindsight, InterventionKind::Oracle1, InterventionKind::OracleK};

inline std::string_view to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::Hedging: return "hedging";
        case InterventionKind::Removal: return "removal";
        case InterventionKind::Rereason: return "rereason";
        case InterventionKind::Hindsight: return "hindsight";
        case InterventionKind::Oracle1: return "oracle-1";
        case InterventionKind::OracleK: return "oracle-k";
    }
    return "?";
}

inline InterventionKind intervention_from_string(std::string_view s) {
    std::string k = ascii_lower(s);
    if (k == "re-reason") k = "rereason";
    for (auto kind : kAllInterventions)
        if (to_string(kind) == k) return kind;
    throw InputError("unknown intervention kind " + std::string(s));
}

enum class ReplayMode { ReplayNoThinking, RereasonContinuation, HindsightSynthesisThenReplay };

inline std::string_view to_string(ReplayMode m) {
    switch (m) {
        case ReplayMode::ReplayNoThinking: return "REPLAY_NO_THINKING";
        case ReplayMode::RereasonContinuation: return "REREASON_CONTINUATION";
        case ReplayMode::HindsightSynthesisThenReplay: return "HINDSIGHT_SYNTHESIS_THEN_REPLAY";
    }
    return "?";
}

inline ReplayMode replay_mode_from_string(std::string_view s) {
    for (auto m : {ReplayMode::ReplayNoThinking, ReplayMode::RereasonContinuation,
                   ReplayMode::HindsightSynthesisThenReplay})
        if (to_string(m) == s) return m;
    throw InputError("unknown replay mode " + std::string(s));
}

struct ReplaySpec {
    std::string spec_id;
    InterventionKind kind = InterventionKind::Hedging;
    std::string sample_id;
    /// The single issue a per-issue spec targets; absent for hindsight and oracle-K.
    std::optional<std::string> issue_id;
    /// Issues whose resolution is judged against this spec's replay.
    std::vector<std::string> target_issue_ids;
    std::string edited_trace;
    std::vector<std::string> extra_notes;
    ReplayMode mode = ReplayMode::ReplayNoThinking;
    std::optional<EditSpan> edit_span;
    /// Re-reasoning prompts cite the targeted issue's rationale.
    std::optional<std::string> issue_rationale;
};

struct SkippedIssue {
    std::string sample_id;
    std::string issue_id;
    InterventionKind kind;
    std::string reason;
};

inline std::string make_spec_id(const std::string& sample_id, InterventionKind kind,
                                const std::optional<std::string>& issue_id) {
    std::string id = sample_id + "/" + std::string(to_string(kind));
    if (issue_id) id += "/" + *issue_id;
    return id;
}

inline json to_json(const ReplaySpec& s) {
    json j = {{"spec_id", s.spec_id},
              {"kind", std::string(to_string(s.kind))},
              {"sample_id", s.sample_id},
              {"issue_id", s.issue_id ? json(*s.issue_id) : json(nullptr)},
              {"target_issue_ids", s.target_issue_ids},
              {"edited_trace", s.edited_trace},
              {"extra_notes", s.extra_notes},
              {"mode", std::string(to_string(s.mode))}};
    if (s.edit_span) j["edit_span"] = to_json(*s.edit_span);
    if (s.issue_rationale) j["issue_rationale"] = *s.issue_rationale;
    return j;
}

inline ReplaySpec replay_spec_from_json(const json& j) {
    ReplaySpec s;
    s.spec_id = j.at("spec_id").get<std::string>();
    s.kind = intervention_from_string(j.at("kind").get<std::string>());
    s.sample_id = j.at("sample_id").get<std::string>();
    if (j.contains("issue_id") && !j["issue_id"].is_null()) s.issue_id = j["issue_id"].get<std::string>();
    s.target_issue_ids = j.value("target_issue_ids", std::vector<std::string>{});
    s.edited_trace = j.value("edited_trace", "");
    s.extra_notes = j.value("extra_notes", std::vector<std::string>{});
    s.mode = replay_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("edit_span")) s.edit_span = edit_span_from_json(j["edit_span"]);
    if (j.contains("issue_rationale")) s.issue_rationale = j["issue_rationale"].get<std::string>();
    return s;
}

inline json to_json(const SkippedIssue& s) {
    return {{"sample_id", s.sample_id},
            {"issue_id", s.issue_id},
            {"kind", std::string(to_string(s.kind))},
            {"reason", s.reason}};
}

// ---------------------------------------------------------------------------
// trace edits

inline constexpr std::string_view kHedgePrefix = "Possibly, but this should be verified against the source:";

inline bool is_hedged(std::string_view sentence) {
    for (std::string_view w : {"maybe", "possibly", "perhaps", "it may be"})
        if (starts_with_ci(sentence, w)) return true;
    return false;
}

/// Prefixes the sentence(s) at `span` with the hedge phrase unless they are
/// empty or already start with a hedge word.
inline std::string hedge(std::string_view trace, const EditSpan& span) {
    std::string_view s = trace.substr(span.span.start, span.span.size());
    if (s.empty() || is_hedged(s)) return std::string(trace);
    std::string out;
    out.reserve(trace.size() + kHedgePrefix.size() + 1);
    out.append(trace.substr(0, span.span.start));
    out.append(kHedgePrefix);
    out.push_back(' ');
    out.append(trace.substr(span.span.start));
    return out;
}

namespace detail {

// Collapses the whitespace run surrounding `pos` when it holds two or more
// blank lines (three or more newlines) down to a single blank line,
// keeping the spaces before its first and after its last newline.
inline void collapse_blank_lines_at(std::string& text, std::size_t pos) {
    std::size_t a = pos;
    while (a > 0 && is_space(static_cast<unsigned char>(text[a - 1]))) --a;
    std::size_t b = pos;
    while (b < text.size() && is_space(static_cast<unsigned char>(text[b]))) ++b;
    std::string_view run(text.data() + a, b - a);
    auto newlines = std::count(run.begin(), run.end(), '\n');
    if (newlines < 3) return;
    std::size_t first = run.find('\n');
    std::size_t last = run.rfind('\n');
    std::string replacement = std::string(run.substr(0, first)) + "\n\n" + std::string(run.substr(last + 1));
    text.replace(a, b - a, replacement);
}

}  // namespace detail

/// Collapses every run of two or more blank lines to a single blank line.
inline std::string collapse_blank_lines(std::string_view text) {
    std::string out(text);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] == '\n') detail::collapse_blank_lines_at(out, i);
    return out;
}

/// Deletes the span and collapses the blank lines left at the seam. A trace
/// reduced to whitespace becomes empty.
inline std::string remove(std::string_view trace, const EditSpan& span) {
    std::string out;
    out.reserve(trace.size());
    out.append(trace.substr(0, span.span.start));
    out.append(trace.substr(span.span.end));
    detail::collapse_blank_lines_at(out, span.span.start);
    if (trim(out).empty()) out.clear();
    return out;
}

/// Text strictly before the span, blank lines collapsed, trailing whitespace dropped.
inline std::string rereason_prefix(std::string_view trace, const EditSpan& span) {
    std::string prefix = collapse_blank_lines(trace.substr(0, span.span.start));
    while (!prefix.empty() && is_space(static_cast<unsigned char>(prefix.back()))) prefix.pop_back();
    return prefix;
}

// ---------------------------------------------------------------------------
// spec builders

inline ReplaySpec edit_spec(const Sample& sample, const Issue& issue, InterventionKind kind,
                            const EditSpan& span) {
    ReplaySpec spec;
    spec.kind = kind;
    spec.sample_id = sample.id;
    spec.issue_id = issue.id();
    spec.target_issue_ids = {issue.id()};
    spec.edit_span = span;
    spec.mode = ReplayMode::ReplayNoThinking;
    if (kind == InterventionKind::Hedging) spec.edited_trace = hedge(sample.trace, span);
    else spec.edited_trace = remove(sample.trace, span);
    spec.spec_id = make_spec_id(sample.id, kind, spec.issue_id);
    return spec;
}

inline ReplaySpec rereason_spec(const Sample& sample, const Issue& issue, const EditSpan& span) {
    ReplaySpec spec;
    spec.kind = InterventionKind::Rereason;
    spec.sample_id = sample.id;
    spec.issue_id = issue.id();
    spec.target_issue_ids = {issue.id()};
    spec.edited_trace = rereason_prefix(sample.trace, span);
    spec.mode = ReplayMode::RereasonContinuation;
    spec.edit_span = span;
    spec.issue_rationale = issue.rationale;
    spec.spec_id = make_spec_id(sample.id, spec.kind, spec.issue_id);
    return spec;
}

/// One spec per sample; the trace is synthesized at replay time.
inline ReplaySpec hindsight_spec(const Sample& sample, const std::vector<Issue>& targets) {
    if (!sample.reference) throw InputError("hindsight requires reference");
    ReplaySpec spec;
    spec.kind = InterventionKind::Hindsight;
    spec.sample_id = sample.id;
    for (const auto& i : targets) spec.target_issue_ids.push_back(i.id());
    spec.mode = ReplayMode::HindsightSynthesisThenReplay;
    spec.spec_id = make_spec_id(sample.id, spec.kind, std::nullopt);
    return spec;
}

/// Bullet lines for the issue's present fields, then the fixed closing line.
inline std::string build_oracle_note(const RawIssue& issue) {
    std::string note;
    auto line = [&](std::string_view label, std::string_view value) {
        if (value.empty()) return;
        if (!note.empty()) note += '\n';
        note += "- ";
        note += label;
        note += value;
    };
    line("Problematic trace snippet: ", issue.trace_quote);
    line("Relevant source quote: ", issue.source_quote.value_or(""));
    line("Original output quote: ", issue.output_quote.value_or(""));
    line("Why it is problematic: ", issue.rationale);
    if (!note.empty()) note += '\n';
    note += "- Use the source sentence to avoid carrying this error into the final translation.";
    return note;
}

enum class OracleMode { One, K };

/// Oracle specs keep the original trace and add issue-derived notes.
inline std::vector<ReplaySpec> oracle_specs(const Sample& sample, const std::vector<Issue>& issues, OracleMode mode) {
    std::vector<ReplaySpec> out;
    if (issues.empty()) return out;
    if (mode == OracleMode::One) {
        for (const auto& issue : issues) {
            ReplaySpec spec;
            spec.kind = InterventionKind::Oracle1;
            spec.sample_id = sample.id;
            spec.issue_id = issue.id();
            spec.target_issue_ids = {issue.id()};
            spec.edited_trace = sample.trace;
            spec.extra_notes = {"Oracle correction for one identified issue:\n" + build_oracle_note(issue)};
            spec.spec_id = make_spec_id(sample.id, spec.kind, spec.issue_id);
            out.push_back(std::move(spec));
        }
        return out;
    }
    ReplaySpec spec;
    spec.kind = InterventionKind::OracleK;
    spec.sample_id = sample.id;
    spec.edited_trace = sample.trace;
    spec.extra_notes = {"Oracle corrections for all identified issues:"};
    for (const auto& issue : issues) {
        spec.target_issue_ids.push_back(issue.id());
        spec.extra_notes.push_back(build_oracle_note(issue));
    }
    spec.spec_id = make_spec_id(sample.id, spec.kind, std::nullopt);
    out.push_back(std::move(spec));
    return out;
}

struct SpecBatch {
    std::vector<ReplaySpec> specs;
    std::vector<SkippedIssue> skipped;
};

/// Builds every requested intervention for one sample. Only ERROR-severity
/// issues are targeted; each per-issue edit starts from the original trace.
/// Samples without targeted issues produce nothing.
inline SpecBatch build_replay_specs(const Sample& sample, const std::vector<Issue>& issues,
                                    const std::vector<InterventionKind>& kinds) {
    SpecBatch batch;
    std::vector<Issue> targets;
    for (const auto& i : issues)
        if (i.sample_id == sample.id && i.targeted()) targets.push_back(i);
    if (targets.empty()) return batch;

    auto tok = tokenize_trace(sample.trace);
    std::vector<std::optional<EditSpan>> spans;
    for (const auto& i : targets) spans.push_back(locate_issue_edit_span(i, sample.trace, tok));

    for (auto kind : kinds) {
        switch (kind) {
            case InterventionKind::Hedging:
            case InterventionKind::Removal:
            case InterventionKind::Rereason:
                for (std::size_t n = 0; n < targets.size(); ++n) {
                    if (!spans[n]) {
                        batch.skipped.push_back({sample.id, targets[n].id(), kind, "span not locatable"});
                        continue;
                    }
                    batch.specs.push_back(kind == InterventionKind::Rereason
                                              ? rereason_spec(sample, targets[n], *spans[n])
                                              : edit_spec(sample, targets[n], kind, *spans[n]));
                }
                break;
            case InterventionKind::Hindsight:
                if (!sample.reference) {
                    for (const auto& t : targets)
                        batch.skipped.push_back({sample.id, t.id(), kind, "hindsight requires reference"});
                    break;
                }
                batch.specs.push_back(hindsight_spec(sample, targets));
                break;
            case InterventionKind::Oracle1:
            case InterventionKind::OracleK:
                for (auto& s : oracle_specs(sample, targets,
                                            kind == InterventionKind::Oracle1 ? OracleMode::One : OracleMode::K))
                    batch.specs.push_back(std::move(s));
                break;
        }
    }
    return batch;
}

}  // namespace mtaudit
