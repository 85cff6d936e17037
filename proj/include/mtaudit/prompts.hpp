#pragma once

// Byte-exact prompt templates. Golden files under tests/golden pin every
// template; bump kPromptTemplateVersion whenever any text here changes.

#include <string>
#include <string_view>
#include <vector>

#include "mtaudit/corpus.hpp"

namespace mtaudit::prompts {

inline constexpr int kPromptTemplateVersion = 1;

inline constexpr std::string_view kReplaySystemMessage = "You are a careful machine translation assistant.";
inline constexpr std::string_view kFollowTraceNote = "Use the reasoning trace when deciding on the translation.";
inline constexpr std::string_view kReturnFinal = "Return only the final translation.";

inline constexpr std::string_view kJudgePreamble =
    R"(You are a bilingual auditor for machine-translation reasoning traces.

You will analyze a SOURCE sentence, the model's TRACE (reasoning while translating), and the OUTPUT (final translation).

Your task is to detect reasoning errors in three categories:
1. INPUT_TRACE: Trace statements not supported by SOURCE, or proposing incorrect translation semantics (e.g., hallucinated facts, wrong word meanings)
2. TRACE_OUTPUT: Trace decisions that don't match the OUTPUT (e.g., trace says "X" but output has "Y")
3. TRACE_INTERNAL: Contradictions, circular reasoning, or incoherent statements within the trace itself

IMPORTANT RULES:
- The trace will be sentence-tokenized. Reference issues by sentence index (0-indexed).
- All quotes must be EXACT substrings (copy-paste) from the provided text.
- Be strict but fair - minor rephrasing or stylistic choices are not errors.

Output ONLY valid JSON matching this schema:
{
  "has_issues": bool,
  "summary": str,  // One sentence summary of trace quality
  "issues": [
    {
      "category": "INPUT_TRACE" | "TRACE_OUTPUT" | "TRACE_INTERNAL",
      "trace_sentence_idx": int,
      "trace_quote": str,  // Exact substring from trace
      "source_quote": str | null,  // Relevant source quote if applicable
      "output_quote": str | null,  // Relevant output quote if applicable
      "rationale": str,  // 1-2 sentence explanation
      "severity": "ERROR" | "FIXED_LATER"  // Optional. FIXED_LATER if a later trace sentence corrects this mistake, otherwise ERROR
    }
  ]
}
)";

/// Audit prompt: preamble, SOURCE, the sentence-indexed TRACE ("[i] text"
/// per line), OUTPUT. An empty trace yields an empty indexed block.
inline std::string judge_prompt(std::string_view source, const TokenizedTrace& trace, std::string_view output) {
    std::string p(kJudgePreamble);
    p += "\nSOURCE:\n";
    p += source;
    p += "\n\nTRACE (sentence-indexed):\n";
    for (const auto& s : trace.sentences) {
        p += "[" + std::to_string(s.index) + "] ";
        p += s.text;
        p += '\n';
    }
    p += "\nOUTPUT:\n";
    p += output;
    return p;
}

/// Default translation instruction, degrading when language names are unknown.
inline std::string task_instruction(const LanguagePair& pair) {
    auto src = pair.source_name();
    auto tgt = pair.target_name();
    if (src && tgt)
        return "Translate the following " + std::string(*src) + " text into " + std::string(*tgt) +
               ". Return only the translation.";
    if (tgt) return "Translate the following text into " + std::string(*tgt) + ". Return only the translation.";
    return "Translate the following text. Return only the translation.";
}

/// Shared replay user message. `notes` empty means no "Additional notes" block.
inline std::string replay_user_message(const LanguagePair& pair, std::string_view source,
                                       std::string_view trace, const std::vector<std::string>& notes) {
    std::string m = task_instruction(pair);
    m += "\n\nSource:\n";
    m += source;
    m += "\n\nReasoning trace:\n";
    m += trace;
    m += '\n';
    if (!notes.empty()) {
        m += "\nAdditional notes:";
        for (const auto& n : notes) {
            m += "\n- ";
            m += n;
        }
    }
    m += "\n\n";
    m += kFollowTraceNote;
    m += '\n';
    m += kReturnFinal;
    return m;
}

inline std::string rereason_user_message(const LanguagePair& pair, std::string_view source,
                                         std::string_view rationale) {
    std::string m = task_instruction(pair);
    m += "\n\nSource:\n";
    m += source;
    m += "\n\nA problematic reasoning step was removed here. Reconsider the source carefully from this point "
         "onward and do not rely on the removed unsupported step. Target issue: ";
    m += rationale;
    m += "\nYou MUST continue reasoning internally from the provided starting point, but return only the final "
         "translation.";
    return m;
}

inline std::string hindsight_synthesis_message(const LanguagePair& pair, std::string_view source,
                                               std::string_view reference) {
    std::string m = task_instruction(pair);
    m += "\n\nSource: ";
    m += source;
    m += "\nReference translation: ";
    m += reference;
    m += "\n\nThink step-by-step about how to translate the source to match the reference.\n"
         "Analyze key phrases, idioms, and grammatical structures.\n"
         "Then produce the final translation.";
    return m;
}

}  // namespace mtaudit::prompts
