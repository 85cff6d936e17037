#pragma once

// Replay prompt assembly and generation for every intervention mode.

#include <optional>
#include <string>
#include <string_view>

#include "mtaudit/chat.hpp"
#include "mtaudit/corpus.hpp"
#include "mtaudit/intervene.hpp"
#include "mtaudit/prompts.hpp"

namespace mtaudit {

struct ReplayPrompt {
    std::string system_message;
    std::string user_message;
    bool thinking_enabled = false;
    std::optional<std::string> continuation_prefix;
};

inline ReplayPrompt shared_replay_prompt(const Sample& sample, std::string_view trace,
                                         const std::vector<std::string>& notes) {
    return {std::string(prompts::kReplaySystemMessage),
            prompts::replay_user_message(sample.pair, sample.source, trace, notes), false, std::nullopt};
}

/// Prompt for the original trace, the reference point for quality deltas.
inline ReplayPrompt baseline_replay_prompt(const Sample& sample) {
    return shared_replay_prompt(sample, sample.trace, {});
}

/// Hindsight step 1: native reasoning toward the reference.
inline ReplayPrompt hindsight_synthesis_prompt(const Sample& sample) {
    if (!sample.reference) throw InputError("hindsight requires reference");
    return {std::string(prompts::kReplaySystemMessage),
            prompts::hindsight_synthesis_message(sample.pair, sample.source, *sample.reference), true, std::nullopt};
}

/// For hindsight specs this is the step-2 prompt over `spec.edited_trace`,
/// which the caller fills with the synthesized trace first.
inline ReplayPrompt assemble_replay_prompt(const ReplaySpec& spec, const Sample& sample) {
    if (spec.sample_id != sample.id)
        throw InputError("spec " + spec.spec_id + " does not belong to sample " + sample.id);
    switch (spec.mode) {
        case ReplayMode::RereasonContinuation:
            return {std::string(prompts::kReplaySystemMessage),
                    prompts::rereason_user_message(sample.pair, sample.source, spec.issue_rationale.value_or("")),
                    true, spec.edited_trace};
        case ReplayMode::ReplayNoThinking:
        case ReplayMode::HindsightSynthesisThenReplay:
            break;
    }
    return shared_replay_prompt(sample, spec.edited_trace, spec.extra_notes);
}

inline json to_json(const ReplayPrompt& p) {
    json j = {{"system", p.system_message}, {"user", p.user_message}, {"thinking", p.thinking_enabled}};
    if (p.continuation_prefix) j["continuation_prefix"] = *p.continuation_prefix;
    return j;
}

struct GenerationResult {
    std::string text;
    std::optional<std::string> reasoning;
    json raw;
    std::string request_id;
    bool emulated_continuation = false;
};

inline constexpr std::string_view kEmulatedPrefixOpen = "<reasoning_so_far>\n";
inline constexpr std::string_view kEmulatedPrefixClose = "\n</reasoning_so_far>\n\n";

/// The request actually sent. Backends without a reasoning channel get the
/// continuation prefix folded into the user message under a delimiter.
inline ChatRequest to_chat_request(const ReplayPrompt& prompt, const ChatBackend& backend, int max_tokens) {
    ChatRequest r;
    r.system = prompt.system_message;
    r.user = prompt.user_message;
    r.temperature = 0.0;
    r.max_tokens = max_tokens;
    r.thinking = prompt.thinking_enabled;
    if (prompt.continuation_prefix) {
        if (backend.native_thinking()) {
            r.continuation_prefix = prompt.continuation_prefix;
        } else {
            r.user = std::string(kEmulatedPrefixOpen) + *prompt.continuation_prefix +
                     std::string(kEmulatedPrefixClose) + r.user;
        }
    }
    return r;
}

/// Drops everything up to the last closing think tag, then trims.
inline std::string strip_reasoning(std::string_view text) {
    constexpr std::string_view close = "</think>";
    if (auto pos = text.rfind(close); pos != std::string_view::npos) text.remove_prefix(pos + close.size());
    return std::string(trim(text));
}

/// Greedy generation returning only the post-reasoning answer.
inline GenerationResult generate(ChatBackend& backend, const ReplayPrompt& prompt, const RetryPolicy& policy = {},
                                 int max_tokens = 4096) {
    auto req = to_chat_request(prompt, backend, max_tokens);
    auto resp = complete_with_retry(backend, req, policy);
    GenerationResult g;
    g.text = strip_reasoning(resp.content);
    g.reasoning = resp.reasoning;
    g.raw = resp.raw;
    g.request_id = resp.request_id;
    g.emulated_continuation = prompt.continuation_prefix.has_value() && !backend.native_thinking();
    if (g.text.empty()) throw EmptyGeneration(g.request_id, "empty completion");
    return g;
}

namespace detail {

inline std::optional<std::string> tagged_block(std::string_view text, std::string_view tag) {
    std::string open = "<" + std::string(tag) + ">";
    std::string close = "</" + std::string(tag) + ">";
    auto a = text.find(open);
    if (a == std::string_view::npos) return std::nullopt;
    auto b = text.find(close, a + open.size());
    if (b == std::string_view::npos) return std::nullopt;
    return std::string(trim(text.substr(a + open.size(), b - a - open.size())));
}

}  // namespace detail

/// The synthesized trace t' from a hindsight step-1 response: the structured
/// reasoning channel when present, else a <think>/<reasoning> block, else the
/// content minus its trailing final-translation line.
inline std::string extract_hindsight_trace(const std::string& content, const std::optional<std::string>& reasoning) {
    if (reasoning && !trim(*reasoning).empty()) return std::string(trim(*reasoning));
    for (std::string_view tag : {"think", "reasoning"})
        if (auto block = detail::tagged_block(content, tag); block && !block->empty()) return *block;
    std::string_view body = trim(content);
    auto nl = body.rfind('\n');
    if (nl == std::string_view::npos) return "";
    return std::string(trim(body.substr(0, nl)));
}

// ---------------------------------------------------------------------------
// replay records

struct ReplayResult {
    std::string spec_id;
    std::string sample_id;
    std::optional<InterventionKind> kind;  // absent for the baseline replay
    std::optional<std::string> issue_id;
    std::vector<std::string> target_issue_ids;
    std::string edited_trace;  // the trace the replay conditioned on
    std::string output;
    std::string request_id;
    bool emulated_continuation = false;

    bool baseline() const { return !kind.has_value(); }
};

inline std::string baseline_spec_id(const std::string& sample_id) { return sample_id + "/baseline"; }

inline json to_json(const ReplayResult& r) {
    json j = {{"spec_id", r.spec_id},
              {"sample_id", r.sample_id},
              {"baseline", r.baseline()},
              {"kind", r.kind ? json(std::string(to_string(*r.kind))) : json(nullptr)},
              {"issue_id", r.issue_id ? json(*r.issue_id) : json(nullptr)},
              {"target_issue_ids", r.target_issue_ids},
              {"edited_trace", r.edited_trace},
              {"output", r.output},
              {"request_id", r.request_id}};
    if (r.emulated_continuation) j["emulated_continuation"] = true;
    return j;
}

inline ReplayResult replay_result_from_json(const json& j) {
    ReplayResult r;
    r.spec_id = j.at("spec_id").get<std::string>();
    r.sample_id = j.at("sample_id").get<std::string>();
    if (j.contains("kind") && !j["kind"].is_null()) r.kind = intervention_from_string(j["kind"].get<std::string>());
    if (j.contains("issue_id") && !j["issue_id"].is_null()) r.issue_id = j["issue_id"].get<std::string>();
    r.target_issue_ids = j.value("target_issue_ids", std::vector<std::string>{});
    r.edited_trace = j.value("edited_trace", "");
    r.output = j.at("output").get<std::string>();
    r.request_id = j.value("request_id", "");
    r.emulated_continuation = j.value("emulated_continuation", false);
    return r;
}

struct ReplayOptions {
    RetryPolicy retry;
    int max_tokens = 4096;
};

inline ReplayResult run_baseline(ChatBackend& backend, const Sample& sample, const ReplayOptions& opt = {}) {
    auto g = generate(backend, baseline_replay_prompt(sample), opt.retry, opt.max_tokens);
    ReplayResult r;
    r.spec_id = baseline_spec_id(sample.id);
    r.sample_id = sample.id;
    r.edited_trace = sample.trace;
    r.output = std::move(g.text);
    r.request_id = std::move(g.request_id);
    return r;
}

/// Executes one spec. Hindsight runs its synthesis step first and replays the
/// extracted trace with no notes.
inline ReplayResult run_spec(ChatBackend& backend, const ReplaySpec& spec, const Sample& sample,
                             const ReplayOptions& opt = {}) {
    ReplaySpec effective = spec;
    if (spec.mode == ReplayMode::HindsightSynthesisThenReplay) {
        auto req = to_chat_request(hindsight_synthesis_prompt(sample), backend, opt.max_tokens);
        auto resp = complete_with_retry(backend, req, opt.retry);
        effective.edited_trace = extract_hindsight_trace(resp.content, resp.reasoning);
        effective.extra_notes.clear();
    }
    auto g = generate(backend, assemble_replay_prompt(effective, sample), opt.retry, opt.max_tokens);
    ReplayResult r;
    r.spec_id = spec.spec_id;
    r.sample_id = spec.sample_id;
    r.kind = spec.kind;
    r.issue_id = spec.issue_id;
    r.target_issue_ids = spec.target_issue_ids;
    r.edited_trace = effective.edited_trace;
    r.output = std::move(g.text);
    r.request_id = std::move(g.request_id);
    r.emulated_continuation = g.emulated_continuation;
    return r;
}

}  // namespace mtaudit
