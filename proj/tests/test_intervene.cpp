#include <gtest/gtest.h>

#include <random>
#include <set>

#include "mtaudit/intervene.hpp"
#include "mtaudit/replay.hpp"
#include "support.hpp"

using namespace mtaudit;

namespace {

// Every whitespace run squashed to one space, ends trimmed.
std::string squash(std::string_view s) {
    std::string out;
    bool gap = false;
    for (char c : s) {
        if (is_space(static_cast<unsigned char>(c))) {
            gap = true;
            continue;
        }
        if (gap && !out.empty()) out += ' ';
        gap = false;
        out += c;
    }
    return out;
}

std::size_t newlines_around(const std::string& s, std::size_t pos) {
    std::size_t a = pos, b = pos, n = 0;
    while (a > 0 && is_space(static_cast<unsigned char>(s[a - 1]))) --a;
    while (b < s.size() && is_space(static_cast<unsigned char>(s[b]))) ++b;
    for (std::size_t k = a; k < b; ++k) n += s[k] == '\n';
    return n;
}

EditSpan sentence_span(const TokenizedTrace& tok, std::size_t i) {
    return {tok.sentences[i].span, i, i, MatchKind::SentenceIndex};
}

}  // namespace

TEST(Hedge, PrefixesSentence) {
    std::string trace = "It means X. Next I check Y.";
    auto tok = tokenize_trace(trace);
    EXPECT_EQ(hedge(trace, sentence_span(tok, 1)),
              "It means X. Possibly, but this should be verified against the source: Next I check Y.");
}

TEST(Hedge, AlreadyHedgedUnchanged) {
    for (std::string first : {"Maybe it is X.", "possibly X.", "Perhaps X.", "It may be X."}) {
        std::string trace = first + " Then Y.";
        auto tok = tokenize_trace(trace);
        EXPECT_EQ(hedge(trace, sentence_span(tok, 0)), trace) << first;
    }
}

TEST(Remove, CollapsesBlankLinesAtSeam) {
    std::string trace = "A one.\n\nB two.\n\nC three.";
    auto tok = tokenize_trace(trace);
    EXPECT_EQ(remove(trace, sentence_span(tok, 1)), "A one.\n\nC three.");
    std::string single = "Only one.";
    EXPECT_EQ(remove(single, sentence_span(tokenize_trace(single), 0)), "");
}

TEST(Rereason, PrefixEndsBeforeSpan) {
    std::string trace = "A one.\n\n\n\nB two. C three.";
    auto tok = tokenize_trace(trace);
    EXPECT_EQ(rereason_prefix(trace, sentence_span(tok, 2)), "A one.\n\nB two.");
    EXPECT_EQ(rereason_prefix(trace, sentence_span(tok, 0)), "");
}

TEST(Goldens, ReplayPromptsMatch) {
    auto s = testsupport::golden_sample();
    auto issues = testsupport::golden_issues();
    auto tok = tokenize_trace(s.trace);
    auto span = *locate_issue_edit_span(issues[0], s.trace, tok);
    EXPECT_EQ(baseline_replay_prompt(s).user_message, testsupport::golden("replay_baseline.txt"));
    EXPECT_EQ(assemble_replay_prompt(edit_spec(s, issues[0], InterventionKind::Hedging, span), s).user_message,
              testsupport::golden("replay_hedging.txt"));
    EXPECT_EQ(assemble_replay_prompt(edit_spec(s, issues[0], InterventionKind::Removal, span), s).user_message,
              testsupport::golden("replay_removal.txt"));
    auto rr = rereason_spec(s, issues[0], span);
    auto rp = assemble_replay_prompt(rr, s);
    EXPECT_EQ(rp.user_message, testsupport::golden("rereason_user.txt"));
    EXPECT_EQ(rp.continuation_prefix.value(), testsupport::golden("rereason_prefix.txt"));
    EXPECT_TRUE(rp.thinking_enabled);
    EXPECT_EQ(hindsight_synthesis_prompt(s).user_message, testsupport::golden("hindsight_step1.txt"));
    auto o1 = oracle_specs(s, {issues[0]}, OracleMode::One);
    ASSERT_EQ(o1.size(), 1u);
    EXPECT_EQ(assemble_replay_prompt(o1[0], s).user_message, testsupport::golden("replay_oracle_1.txt"));
    auto ok = oracle_specs(s, issues, OracleMode::K);
    ASSERT_EQ(ok.size(), 1u);
    EXPECT_EQ(assemble_replay_prompt(ok[0], s).user_message, testsupport::golden("replay_oracle_k.txt"));
}

TEST(Goldens, OracleNotes) {
    auto issues = testsupport::golden_issues();
    EXPECT_EQ(build_oracle_note(issues[0]), testsupport::golden("oracle_note_full.txt"));
    EXPECT_EQ(build_oracle_note(issues[1]), testsupport::golden("oracle_note_no_source.txt"));
    EXPECT_EQ(build_oracle_note(issues[2]), testsupport::golden("oracle_note_rationale_only.txt"));
}

TEST(Goldens, TaskInstructions) {
    auto j = json::parse(testsupport::golden("task_instructions.json"));
    EXPECT_EQ(prompts::task_instruction({"en", "es"}), j["en-es"]);
    EXPECT_EQ(prompts::task_instruction({"xx", "es"}), j["xx-es"]);
    EXPECT_EQ(prompts::task_instruction({"xx", "yy"}), j["xx-yy"]);
}

TEST(Specs, OracleKHasNoIssueIdAndTargetsAll) {
    auto s = testsupport::golden_sample();
    auto issues = testsupport::golden_issues();
    auto ok = oracle_specs(s, issues, OracleMode::K)[0];
    EXPECT_FALSE(ok.issue_id);
    EXPECT_EQ(ok.target_issue_ids.size(), 3u);
    EXPECT_EQ(ok.spec_id, "es-001/oracle-k");
    EXPECT_EQ(ok.edited_trace, s.trace);
}

TEST(Specs, HindsightNeedsReference) {
    auto s = testsupport::golden_sample();
    auto issues = testsupport::golden_issues();
    s.reference.reset();
    EXPECT_THROW(hindsight_spec(s, issues), InputError);
    auto batch = build_replay_specs(s, issues, {InterventionKind::Hindsight});
    EXPECT_TRUE(batch.specs.empty());
    ASSERT_EQ(batch.skipped.size(), 3u);
    EXPECT_EQ(batch.skipped[0].reason, "hindsight requires reference");
}

TEST(Specs, JsonRoundTrip) {
    auto s = testsupport::golden_sample();
    auto issues = testsupport::golden_issues();
    auto batch = build_replay_specs(s, issues, {kAllInterventions.begin(), kAllInterventions.end()});
    EXPECT_TRUE(batch.skipped.empty());
    // 3 issues x (hedging, removal, rereason, oracle-1) + hindsight + oracle-k
    EXPECT_EQ(batch.specs.size(), 14u);
    for (const auto& spec : batch.specs) {
        auto back = replay_spec_from_json(to_json(spec));
        EXPECT_EQ(to_json(back), to_json(spec));
    }
    EXPECT_EQ(intervention_from_string("re-reason"), InterventionKind::Rereason);
    EXPECT_THROW(intervention_from_string("paraphrase"), InputError);
}

TEST(Specs, UnlocatableIssueSkipped) {
    auto s = testsupport::make_sample("u", "en", "es", "m", "One. Two.");
    auto i = testsupport::make_issue("u", 9);
    i.trace_quote = "absent";
    auto batch = build_replay_specs(s, {i}, {InterventionKind::Hedging, InterventionKind::Oracle1});
    ASSERT_EQ(batch.skipped.size(), 1u);
    EXPECT_EQ(batch.skipped[0].reason, "span not locatable");
    ASSERT_EQ(batch.specs.size(), 1u);
    EXPECT_EQ(batch.specs[0].kind, InterventionKind::Oracle1);
}

TEST(Specs, EditPropertiesOnRandomTraces) {
    std::mt19937_64 rng(9001);
    int cases = 0;
    for (; cases < 250; ++cases) {
        auto trace = testsupport::random_trace(rng, 1, 9);
        auto tok = tokenize_trace(trace);
        std::size_t first = std::uniform_int_distribution<std::size_t>(0, tok.size() - 1)(rng);
        std::size_t last = std::min(tok.size() - 1, first + std::uniform_int_distribution<std::size_t>(0, 1)(rng));
        EditSpan span{{tok.sentences[first].span.start, tok.sentences[last].span.end}, first, last,
                      MatchKind::QuoteExact};
        std::string before = trace.substr(0, span.span.start);
        std::string target = trace.substr(span.span.start, span.span.size());
        std::string after = trace.substr(span.span.end);

        // hedging inserts the prefix and changes nothing else
        auto hedged = hedge(trace, span);
        if (is_hedged(target)) EXPECT_EQ(hedged, trace);
        else EXPECT_EQ(hedged, before + std::string(kHedgePrefix) + " " + target + after);

        // removal drops exactly the span, modulo whitespace, and leaves at most one blank line at the seam
        auto removed = remove(trace, span);
        EXPECT_EQ(squash(removed), squash(before + after));
        if (!removed.empty()) {
            EXPECT_LE(newlines_around(removed, std::min(before.size(), removed.size())), 2u);
        }

        // the re-reasoning prefix is the text before the span, trimmed at the end
        auto prefix = rereason_prefix(trace, span);
        EXPECT_EQ(squash(prefix), squash(before));
        EXPECT_TRUE(prefix.empty() || !is_space(static_cast<unsigned char>(prefix.back())));
    }
    EXPECT_GE(cases, 200);
}

TEST(Specs, BatchPropertiesOnRandomIssues) {
    std::mt19937_64 rng(31337);
    const IssueCategory cats[] = {IssueCategory::InputTrace, IssueCategory::TraceOutput,
                                  IssueCategory::TraceInternal};
    std::vector<InterventionKind> all(kAllInterventions.begin(), kAllInterventions.end());
    for (int n = 0; n < 200; ++n) {
        auto s = testsupport::make_sample("r" + std::to_string(n), "en", "es", "m",
                                          testsupport::random_trace(rng, 1, 6));
        if (n % 5 == 0) s.reference.reset();
        auto tok = tokenize_trace(s.trace);
        std::vector<Issue> issues;
        std::set<std::pair<int, long long>> seen;
        int count = std::uniform_int_distribution<int>(0, 4)(rng);
        for (int k = 0; k < count; ++k) {
            auto cat = cats[std::uniform_int_distribution<int>(0, 2)(rng)];
            long long idx = std::uniform_int_distribution<long long>(0, static_cast<long long>(tok.size()) + 1)(rng);
            if (!seen.insert({static_cast<int>(cat), idx}).second) continue;
            auto sev = std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? Severity::FixedLater : Severity::Error;
            issues.push_back(testsupport::make_issue(s.id, idx, cat, sev));
        }
        auto batch = build_replay_specs(s, issues, all);
        std::size_t targeted = 0, locatable = 0;
        for (const auto& i : issues) {
            if (!i.targeted()) continue;
            ++targeted;
            if (i.trace_sentence_idx < static_cast<long long>(tok.size())) ++locatable;
        }
        std::map<InterventionKind, std::size_t> per_kind;
        std::set<std::string> ids;
        for (const auto& spec : batch.specs) {
            ++per_kind[spec.kind];
            EXPECT_TRUE(ids.insert(spec.spec_id).second) << spec.spec_id;
            for (const auto& t : spec.target_issue_ids) EXPECT_EQ(t.rfind(s.id + ":", 0), 0u);
        }
        EXPECT_EQ(per_kind[InterventionKind::Hedging], locatable);
        EXPECT_EQ(per_kind[InterventionKind::Removal], locatable);
        EXPECT_EQ(per_kind[InterventionKind::Rereason], locatable);
        EXPECT_EQ(per_kind[InterventionKind::Oracle1], targeted);
        EXPECT_EQ(per_kind[InterventionKind::OracleK], targeted ? 1u : 0u);
        EXPECT_EQ(per_kind[InterventionKind::Hindsight], targeted && s.reference ? 1u : 0u);
        std::size_t expected_skips = 3 * (targeted - locatable) + (s.reference ? 0 : targeted);
        EXPECT_EQ(batch.skipped.size(), expected_skips);
    }
}
