#pragma once

// Maps an issue's quote or sentence index onto whole-sentence spans of a trace.

#include <array>
#include <cstddef>
#include <concepts>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtaudit/corpus.hpp"

namespace mtaudit {

enum class MatchKind { QuoteExact, QuoteNormalized, SentenceIndex };

inline std::string_view to_string(MatchKind k) {
    switch (k) {
        case MatchKind::QuoteExact: return "QUOTE_EXACT";
        case MatchKind::QuoteNormalized: return "QUOTE_NORMALIZED";
        case MatchKind::SentenceIndex: return "SENTENCE_INDEX";
    }
    return "?";
}

inline MatchKind match_kind_from_string(std::string_view s) {
    if (s == "QUOTE_EXACT") return MatchKind::QuoteExact;
    if (s == "QUOTE_NORMALIZED") return MatchKind::QuoteNormalized;
    if (s == "SENTENCE_INDEX") return MatchKind::SentenceIndex;
    throw InputError("unknown matched_by value " + std::string(s));
}

/// A run of whole sentences [first_sentence, last_sentence] and its byte range.
struct EditSpan {
    CharSpan span;
    std::size_t first_sentence = 0;
    std::size_t last_sentence = 0;
    MatchKind matched_by = MatchKind::SentenceIndex;

    friend bool operator==(const EditSpan&, const EditSpan&) = default;
};

inline json to_json(const EditSpan& e) {
    return {{"start", e.span.start},
            {"end", e.span.end},
            {"first_sentence", e.first_sentence},
            {"last_sentence", e.last_sentence},
            {"matched_by", std::string(to_string(e.matched_by))}};
}

inline EditSpan edit_span_from_json(const json& j) {
    EditSpan e;
    e.span = {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
    e.first_sentence = j.at("first_sentence").get<std::size_t>();
    e.last_sentence = j.at("last_sentence").get<std::size_t>();
    e.matched_by = match_kind_from_string(j.at("matched_by").get<std::string>());
    return e;
}

// ---------------------------------------------------------------------------
// normalization

/// Normalized text plus, for every normalized byte, the original byte range it came from.
struct NormalizedText {
    std::string text;
    std::vector<CharSpan> origin;

    CharSpan original_range(std::size_t begin, std::size_t end) const {
        return {origin[begin].start, origin[end - 1].end};
    }
};

namespace detail {

struct Fold {
    std::string_view from;
    char to;
};

// Typographic variants folded to ASCII. Unicode spaces fold to ' ' and then
// take part in whitespace collapsing.
inline constexpr std::array<Fold, 18> kFolds{{
    {"\xE2\x80\x98", '\''}, {"\xE2\x80\x99", '\''}, {"\xE2\x80\x9A", '\''}, {"\xE2\x80\xB2", '\''},
    {"\xE2\x80\x9C", '"'},  {"\xE2\x80\x9D", '"'},  {"\xE2\x80\x9E", '"'},  {"\xE2\x80\xB3", '"'},
    {"\xE2\x80\x90", '-'},  {"\xE2\x80\x91", '-'},  {"\xE2\x80\x93", '-'},  {"\xE2\x80\x94", '-'},
    {"\xE2\x80\x95", '-'},  {"\xE2\x88\x92", '-'},  {"\xC2\xA0", ' '},      {"\xE2\x80\xAF", ' '},
    {"\xE2\x80\x89", ' '},  {"\xE3\x80\x80", ' '},
}};

}  // namespace detail

/// Normalizes `text` and records offsets back into it: whitespace runs
/// collapse to one space, ends are trimmed, ASCII letters are lowercased, and
/// curly quotes, primes, dashes and Unicode spaces fold to ASCII.
inline NormalizedText normalize_with_offsets(std::string_view text) {
    NormalizedText out;
    out.text.reserve(text.size());
    out.origin.reserve(text.size());
    bool pending_space = false;
    CharSpan space_origin;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        std::size_t len = 1;
        for (const auto& f : detail::kFolds) {
            if (text.substr(i, f.from.size()) == f.from) {
                c = f.to;
                len = f.from.size();
                break;
            }
        }
        if (is_space(static_cast<unsigned char>(c))) {
            if (!pending_space) space_origin = {i, i + len};
            space_origin.end = i + len;
            pending_space = true;
        } else {
            if (pending_space && !out.text.empty()) {
                out.text.push_back(' ');
                out.origin.push_back(space_origin);
            }
            pending_space = false;
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            out.text.push_back(c);
            out.origin.push_back({i, i + len});
        }
        i += len;
    }
    return out;
}

inline std::string normalize(std::string_view text) { return normalize_with_offsets(text).text; }

// ---------------------------------------------------------------------------
// span location

namespace detail {

// Sentences overlapping `range`, as [first, last], or nullopt if the range
// falls entirely into inter-sentence whitespace.
inline std::optional<std::pair<std::size_t, std::size_t>> covering_sentences(
    const TokenizedTrace& tok, CharSpan range) {
    std::optional<std::pair<std::size_t, std::size_t>> out;
    for (const auto& s : tok.sentences) {
        if (!s.span.overlaps(range)) continue;
        if (!out) out = std::pair{s.index, s.index};
        out->second = s.index;
    }
    return out;
}

// Among candidate match ranges, the one whose sentences lie closest to
// `hint` (0 if the hint falls inside), ties broken by earliest offset.
inline std::optional<EditSpan> best_match(const TokenizedTrace& tok, const std::vector<CharSpan>& matches,
                                          long long hint, MatchKind kind) {
    std::optional<EditSpan> best;
    long long best_distance = 0;
    for (const auto& m : matches) {
        auto cover = covering_sentences(tok, m);
        if (!cover) continue;
        auto [first, last] = *cover;
        long long distance = 0;
        if (hint < static_cast<long long>(first)) distance = static_cast<long long>(first) - hint;
        else if (hint > static_cast<long long>(last)) distance = hint - static_cast<long long>(last);
        if (best && distance >= best_distance) continue;  // matches arrive in offset order
        best = EditSpan{{tok.sentences[first].span.start, tok.sentences[last].span.end}, first, last, kind};
        best_distance = distance;
    }
    return best;
}

inline std::vector<CharSpan> find_all(std::string_view haystack, std::string_view needle) {
    std::vector<CharSpan> out;
    if (needle.empty()) return out;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1))
        out.push_back({pos, pos + needle.size()});
    return out;
}

}  // namespace detail

/// Locates the edit span for a quote / sentence-index pair.
///
/// Tries, in order: exact substring search for the quote, search in
/// normalized space mapped back to original offsets, then the sentence at
/// `sentence_idx`. Quote matches expand to the minimal run of whole
/// sentences covering them. Returns nullopt when nothing can be located.
inline std::optional<EditSpan> locate_edit_span(std::string_view quote, long long sentence_idx,
                                                std::string_view trace, const TokenizedTrace& tok) {
    if (tok.empty()) return std::nullopt;
    if (!trim(quote).empty()) {
        if (auto hit = detail::best_match(tok, detail::find_all(trace, quote), sentence_idx,
                                          MatchKind::QuoteExact))
            return hit;
        std::string nq = normalize(quote);
        if (!nq.empty()) {
            auto nt = normalize_with_offsets(trace);
            std::vector<CharSpan> mapped;
            for (const auto& m : detail::find_all(nt.text, nq))
                mapped.push_back(nt.original_range(m.start, m.end));
            if (auto hit = detail::best_match(tok, mapped, sentence_idx, MatchKind::QuoteNormalized))
                return hit;
        }
    }
    if (sentence_idx >= 0 && static_cast<std::size_t>(sentence_idx) < tok.size()) {
        const auto& s = sentence_at(tok, static_cast<std::size_t>(sentence_idx));
        return EditSpan{s.span, s.index, s.index, MatchKind::SentenceIndex};
    }
    return std::nullopt;
}

/// Anything carrying `trace_quote` and `trace_sentence_idx` (raw or aggregated issues).
template <typename IssueLike>
concept QuotedIssue = requires(const IssueLike& i) {
    { i.trace_quote } -> std::convertible_to<std::string_view>;
    { i.trace_sentence_idx } -> std::convertible_to<long long>;
};

template <QuotedIssue IssueLike>
std::optional<EditSpan> locate_issue_edit_span(const IssueLike& issue, std::string_view trace,
                                               const TokenizedTrace& tok) {
    return locate_edit_span(issue.trace_quote, issue.trace_sentence_idx, trace, tok);
}

}  // namespace mtaudit
