#!/usr/bin/env python3
"""Writes the byte-exact prompt goldens from tests/fixtures/golden_inputs.json.

The templates below are transcribed independently of the C++ sources, so a
drift on either side shows up as a golden mismatch. Rerun only when a prompt
template is changed on purpose (and bump kPromptTemplateVersion).
"""

import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
INPUTS = json.loads((HERE.parent / "fixtures" / "golden_inputs.json").read_text(encoding="utf-8"))

JUDGE_TEMPLATE = """You are a bilingual auditor for machine-translation reasoning traces.

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
      "rationale": str  // 1-2 sentence explanation
    }
  ]
}

SOURCE:
{source}

TRACE (sentence-indexed):
[0] {trace_sentence_0}
[1] {trace_sentence_1}
...

OUTPUT:
{output}"""

# The detector asks for severity as an optional extra field.
SEVERITY_LINE = (
    '      "rationale": str,  // 1-2 sentence explanation\n'
    '      "severity": "ERROR" | "FIXED_LATER"  // Optional. FIXED_LATER if a later trace sentence corrects '
    "this mistake, otherwise ERROR"
)

REPLAY_TEMPLATE = """{task_instruction}

Source:
{source}

Reasoning trace:
{edited_trace}
{optional_additional_notes_block}

{follow_trace_note}
Return only the final translation."""

NOTES_HEADER = "\nAdditional notes:"

REREASON_TEMPLATE = """{task_instruction}

Source:
{source}

A problematic reasoning step was removed here. Reconsider the source carefully from this point onward and do not rely on the removed unsupported step. Target issue: {issue.rationale}
You MUST continue reasoning internally from the provided starting point, but return only the final translation."""

HINDSIGHT_TEMPLATE = """{task_instruction}

Source: {source}
Reference translation: {reference}

Think step-by-step about how to translate the source to match the reference.
Analyze key phrases, idioms, and grammatical structures.
Then produce the final translation."""

FOLLOW_TRACE = "Use the reasoning trace when deciding on the translation."
HEDGE = "Possibly, but this should be verified against the source: "
NAMES = {"en": "English", "es": "Spanish"}


def task_instruction(src, tgt):
    if src in NAMES and tgt in NAMES:
        return f"Translate the following {NAMES[src]} text into {NAMES[tgt]}. Return only the translation."
    if tgt in NAMES:
        return f"Translate the following text into {NAMES[tgt]}. Return only the translation."
    return "Translate the following text. Return only the translation."


def judge_prompt(source, sentences, output):
    text = JUDGE_TEMPLATE.replace('      "rationale": str  // 1-2 sentence explanation', SEVERITY_LINE)
    indexed = "".join(f"[{i}] {s}\n" for i, s in enumerate(sentences))
    text = text.replace("[0] {trace_sentence_0}\n[1] {trace_sentence_1}\n...\n", indexed)
    return text.replace("{source}", source).replace("{output}", output)


def replay(sample, trace, notes):
    block = ""
    if notes:
        block = NOTES_HEADER + "".join("\n- " + n for n in notes)
    return (
        REPLAY_TEMPLATE.replace("{task_instruction}", task_instruction(sample["src_lang"], sample["tgt_lang"]))
        .replace("{source}", sample["source"])
        .replace("{edited_trace}", trace)
        .replace("{optional_additional_notes_block}", block)
        .replace("{follow_trace_note}", FOLLOW_TRACE)
    )


def oracle_note(issue):
    lines = []
    if issue.get("trace_quote"):
        lines.append("- Problematic trace snippet: " + issue["trace_quote"])
    if issue.get("source_quote"):
        lines.append("- Relevant source quote: " + issue["source_quote"])
    if issue.get("output_quote"):
        lines.append("- Original output quote: " + issue["output_quote"])
    if issue.get("rationale"):
        lines.append("- Why it is problematic: " + issue["rationale"])
    lines.append("- Use the source sentence to avoid carrying this error into the final translation.")
    return "\n".join(lines)


def main():
    s = INPUTS["sample"]
    sentences = INPUTS["sentences"]
    issues = INPUTS["issues"]
    trace = s["trace"]
    target = sentences[1]
    start = trace.index(target)
    end = start + len(target)

    goldens = {
        "judge_prompt.txt": judge_prompt(s["source"], sentences, s["output"]),
        "judge_prompt_empty_trace.txt": judge_prompt(s["source"], [], s["output"]),
        "replay_baseline.txt": replay(s, trace, []),
        "replay_hedging.txt": replay(s, trace[:start] + HEDGE + trace[start:], []),
        "replay_removal.txt": replay(s, trace[:start] + trace[end:], []),
        "rereason_user.txt": REREASON_TEMPLATE.replace(
            "{task_instruction}", task_instruction(s["src_lang"], s["tgt_lang"])
        )
        .replace("{source}", s["source"])
        .replace("{issue.rationale}", issues[0]["rationale"]),
        "rereason_prefix.txt": trace[:start].rstrip(),
        "hindsight_step1.txt": HINDSIGHT_TEMPLATE.replace(
            "{task_instruction}", task_instruction(s["src_lang"], s["tgt_lang"])
        )
        .replace("{source}", s["source"])
        .replace("{reference}", s["reference"]),
        "oracle_note_full.txt": oracle_note(issues[0]),
        "oracle_note_no_source.txt": oracle_note(issues[1]),
        "oracle_note_rationale_only.txt": oracle_note(issues[2]),
        "replay_oracle_1.txt": replay(
            s, trace, ["Oracle correction for one identified issue:\n" + oracle_note(issues[0])]
        ),
        "replay_oracle_k.txt": replay(
            s, trace, ["Oracle corrections for all identified issues:"] + [oracle_note(i) for i in issues]
        ),
    }
    instructions = {
        "en-es": task_instruction("en", "es"),
        "xx-es": task_instruction("xx", "es"),
        "xx-yy": task_instruction("xx", "yy"),
    }
    for name, text in goldens.items():
        (HERE / name).write_bytes(text.encode("utf-8"))
    (HERE / "task_instructions.json").write_text(json.dumps(instructions, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
