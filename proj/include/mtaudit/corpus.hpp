#pragma once

// Triplet corpora (source, reasoning trace, output) and sentence tokenization
// of reasoning traces.

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtaudit/util.hpp"

namespace mtaudit {

// ---------------------------------------------------------------------------
// languages

/// Display name for a language tag, or nullopt for codes outside the shipped table.
inline std::optional<std::string_view> language_name(std::string_view code) {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 20> kNames{{
        {"ar", "Arabic"},   {"cs", "Czech"},    {"de", "German"},     {"en", "English"},
        {"es", "Spanish"},  {"fr", "French"},   {"hi", "Hindi"},      {"it", "Italian"},
        {"ja", "Japanese"}, {"ko", "Korean"},   {"nl", "Dutch"},      {"pl", "Polish"},
        {"pt", "Portuguese"}, {"ru", "Russian"}, {"sw", "Swahili"},   {"tr", "Turkish"},
        {"uk", "Ukrainian"}, {"ur", "Urdu"},    {"yue", "Cantonese"}, {"zh", "Chinese"},
    }};
    for (const auto& [c, name] : kNames)
        if (c == code) return name;
    return std::nullopt;
}

inline bool is_language_tag(std::string_view code) {
    if (code.empty()) return false;
    return std::all_of(code.begin(), code.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

struct LanguagePair {
    std::string source_code;
    std::string target_code;

    LanguagePair() = default;
    LanguagePair(std::string src, std::string tgt)
        : source_code(std::move(src)), target_code(std::move(tgt)) {
        if (!is_language_tag(source_code) || !is_language_tag(target_code))
            throw std::invalid_argument("language codes must be non-empty lowercase tags");
    }

    std::optional<std::string_view> source_name() const { return language_name(source_code); }
    std::optional<std::string_view> target_name() const { return language_name(target_code); }

    /// "en-es"
    std::string label() const { return source_code + "-" + target_code; }

    friend bool operator==(const LanguagePair&, const LanguagePair&) = default;
    friend auto operator<=>(const LanguagePair&, const LanguagePair&) = default;
};

// ---------------------------------------------------------------------------
// samples

struct Sample {
    std::string id;
    LanguagePair pair;
    std::string source;
    std::string trace;
    std::string output;
    std::optional<std::string> reference;
    std::string model_tag;

    friend bool operator==(const Sample&, const Sample&) = default;
};

enum class CorpusFormat { Triplets, Parallel };

inline json to_json(const Sample& s) {
    json j = {{"id", s.id},
              {"src_lang", s.pair.source_code},
              {"tgt_lang", s.pair.target_code},
              {"source", s.source},
              {"trace", s.trace},
              {"output", s.output}};
    if (s.reference) j["reference"] = *s.reference;
    if (!s.model_tag.empty()) j["model_tag"] = s.model_tag;
    return j;
}

/// Parses one corpus record. `where` prefixes error messages ("line 2: ").
inline Sample sample_from_json(const json& j, CorpusFormat format, const std::string& where = "") {
    using detail::optional_string;
    using detail::require_string;
    Sample s;
    s.id = require_string(j, "id", where);
    if (s.id.empty()) throw InputError(where + "empty field id");
    auto src = require_string(j, "src_lang", where);
    auto tgt = require_string(j, "tgt_lang", where);
    if (!is_language_tag(src)) throw InputError(where + "field src_lang must be a lowercase language tag");
    if (!is_language_tag(tgt)) throw InputError(where + "field tgt_lang must be a lowercase language tag");
    s.pair = LanguagePair(src, tgt);
    s.source = require_string(j, "source", where);
    if (s.source.empty()) throw InputError(where + "empty field source");
    if (format == CorpusFormat::Triplets) {
        s.trace = optional_string(j, "trace", where).value_or("");
        s.output = require_string(j, "output", where);
        if (s.output.empty()) throw InputError(where + "empty field output");
        s.reference = optional_string(j, "reference", where);
    } else {
        s.reference = require_string(j, "reference", where);
    }
    s.model_tag = optional_string(j, "model_tag", where).value_or("");
    return s;
}

/// Loads a JSONL corpus in file order.
inline std::vector<Sample> load_samples(const std::filesystem::path& path,
                                        CorpusFormat format = CorpusFormat::Triplets) {
    std::vector<Sample> out;
    std::set<std::string> seen;
    for_each_jsonl(path, [&](std::size_t lineno, const json& j) {
        auto s = sample_from_json(j, format, "line " + std::to_string(lineno) + ": ");
        if (!seen.insert(s.id).second) throw InputError("duplicate sample id " + s.id);
        out.push_back(std::move(s));
    });
    return out;
}

inline void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    std::vector<json> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------
// tokenization

/// Half-open byte range into a trace.
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool contains(const CharSpan& o) const { return start <= o.start && o.end <= end; }
    bool overlaps(const CharSpan& o) const { return start < o.end && o.start < end; }

    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct TraceSentence {
    std::size_t index = 0;
    std::string text;
    CharSpan span;

    friend bool operator==(const TraceSentence&, const TraceSentence&) = default;
};

struct TokenizedTrace {
    std::vector<TraceSentence> sentences;

    std::size_t size() const { return sentences.size(); }
    bool empty() const { return sentences.empty(); }
};

namespace detail {

// Tokens ending in '.' that do not end a sentence.
inline bool is_abbreviation(std::string_view word) {
    static constexpr std::array<std::string_view, 22> kAbbrev{
        "e.g.", "i.e.", "cf.",  "vs.",  "al.",   "dr.",  "mr.",  "mrs.",
        "ms.",  "prof.", "st.", "jr.",  "sr.",   "u.s.", "u.k.", "a.m.",
        "p.m.", "approx.", "lit.", "fig.", "viz.", "resp."};
    std::string lower = ascii_lower(word);
    return std::find(kAbbrev.begin(), kAbbrev.end(), lower) != kAbbrev.end();
}

// Closing quotes and brackets that may trail a terminator. Returns the
// byte length of the closer at `i`, or 0.
inline std::size_t closer_len(std::string_view t, std::size_t i) {
    static constexpr std::array<std::string_view, 10> kClosers{
        "\"", "'", ")", "]", "\xE2\x80\x9D" /* ” */, "\xE2\x80\x99" /* ’ */, "\xC2\xBB" /* » */,
        "\xE3\x80\x8D" /* 」 */, "\xE3\x80\x8F" /* 』 */, "\xEF\xBC\x89" /* ） */};
    for (auto c : kClosers)
        if (t.substr(i, c.size()) == c) return c.size();
    return 0;
}

inline std::size_t cjk_terminator_len(std::string_view t, std::size_t i) {
    static constexpr std::array<std::string_view, 3> kTerm{
        "\xE3\x80\x82" /* 。 */, "\xEF\xBC\x81" /* ！ */, "\xEF\xBC\x9F" /* ？ */};
    for (auto c : kTerm)
        if (t.substr(i, c.size()) == c) return c.size();
    return 0;
}

inline constexpr std::string_view kEllipsisChar = "\xE2\x80\xA6";  // …

// Position of the newline that starts a blank line at `i`, i.e. `t[i]` is
// '\n' and only spaces/tabs/CR separate it from another '\n'. Returns the
// index of that second newline or npos.
inline std::size_t blank_line_end(std::string_view t, std::size_t i) {
    if (t[i] != '\n') return std::string_view::npos;
    std::size_t j = i + 1;
    while (j < t.size() && (t[j] == ' ' || t[j] == '\t' || t[j] == '\r')) ++j;
    return (j < t.size() && t[j] == '\n') ? j : std::string_view::npos;
}

// After an ellipsis: split only when the next word starts a new sentence.
inline bool ellipsis_splits(std::string_view t, std::size_t after) {
    std::size_t k = after;
    while (k < t.size() && is_space(static_cast<unsigned char>(t[k]))) {
        if (blank_line_end(t, k) != std::string_view::npos) return false;  // blank line splits anyway
        ++k;
    }
    if (k == t.size()) return true;
    return t[k] >= 'A' && t[k] <= 'Z';
}

}  // namespace detail

/// Splits a reasoning trace into indexed sentences.
///
/// Boundaries: a run of `.`, `!` or `?` (plus trailing closing quotes or
/// brackets) followed by whitespace or end of text; the CJK terminators
/// 。！？ regardless of what follows; and blank lines. A single '.' does not
/// split after a known abbreviation, a capital initial next to another
/// initial ("J. K."), or a list
/// number at the start of a line ("2."). Ellipses ("..." or "…") split
/// only when the next word is capitalized. Sentence spans exclude surrounding whitespace, so
/// the gaps between spans are whitespace only.
inline TokenizedTrace tokenize_trace(std::string_view t) {
    TokenizedTrace out;
    constexpr std::size_t npos = std::string_view::npos;
    std::size_t start = npos;

    auto close = [&](std::size_t end) {
        while (end > start && is_space(static_cast<unsigned char>(t[end - 1]))) --end;
        if (end > start) {
            std::size_t idx = out.sentences.size();
            out.sentences.push_back({idx, std::string(t.substr(start, end - start)), {start, end}});
        }
        start = npos;
    };
    auto skip_closers = [&](std::size_t j) {
        while (j < t.size()) {
            std::size_t n = detail::closer_len(t, j);
            if (n == 0) break;
            j += n;
        }
        return j;
    };
    auto followed_by_space = [&](std::size_t j) {
        return j == t.size() || is_space(static_cast<unsigned char>(t[j]));
    };

    std::size_t i = 0;
    while (i < t.size()) {
        auto c = static_cast<unsigned char>(t[i]);
        if (start == npos) {
            if (is_space(c)) {
                ++i;
                continue;
            }
            start = i;
        }
        if (c == '\n') {
            if (std::size_t j = detail::blank_line_end(t, i); j != npos) {
                close(i);
                i = j + 1;
                continue;
            }
            ++i;
            continue;
        }
        if (c == '.' || c == '!' || c == '?') {
            std::size_t j = i;
            while (j < t.size() && (t[j] == '.' || t[j] == '!' || t[j] == '?')) ++j;
            std::string_view run = t.substr(i, j - i);
            j = skip_closers(j);
            if (!followed_by_space(j)) {
                i = j;
                continue;
            }
            bool split = true;
            if (run.find_first_not_of('.') == npos) {
                if (run.size() >= 3) {
                    split = detail::ellipsis_splits(t, j);
                } else if (run.size() == 1) {
                    std::size_t w = i;
                    while (w > start && !is_space(static_cast<unsigned char>(t[w - 1]))) --w;
                    while (w < i && (t[w] == '(' || t[w] == '"' || t[w] == '\'')) ++w;
                    std::string_view word = t.substr(w, i + 1 - w);
                    auto is_initial = [](std::string_view v) {
                        return v.size() == 2 && v[0] >= 'A' && v[0] <= 'Z' && v[1] == '.';
                    };
                    // A lone capital ("means X.") ends a sentence; a run of initials does not.
                    bool initial = false;
                    if (is_initial(word)) {
                        std::size_t p = w;
                        while (p > start && is_space(static_cast<unsigned char>(t[p - 1]))) --p;
                        std::size_t q = p;
                        while (q > start && !is_space(static_cast<unsigned char>(t[q - 1]))) --q;
                        std::size_t n = j;
                        while (n < t.size() && t[n] == ' ') ++n;
                        std::size_t m = n;
                        while (m < t.size() && !is_space(static_cast<unsigned char>(t[m]))) ++m;
                        initial = (p < w && is_initial(t.substr(q, p - q))) || is_initial(t.substr(n, m - n));
                    }
                    bool line_start = w == start || (w > 0 && t[w - 1] == '\n');
                    bool list_marker = line_start && word.size() >= 2 &&
                                       word.substr(0, word.size() - 1).find_first_not_of("0123456789") == npos;
                    if (detail::is_abbreviation(word) || initial || list_marker) split = false;
                }
            }
            if (split) close(j);
            i = j;
            continue;
        }
        if (t.substr(i, detail::kEllipsisChar.size()) == detail::kEllipsisChar) {
            std::size_t j = i;
            while (t.substr(j, detail::kEllipsisChar.size()) == detail::kEllipsisChar)
                j += detail::kEllipsisChar.size();
            j = skip_closers(j);
            if (followed_by_space(j) && detail::ellipsis_splits(t, j)) close(j);
            i = j;
            continue;
        }
        if (std::size_t n = detail::cjk_terminator_len(t, i); n > 0) {
            std::size_t j = i + n;
            while (std::size_t m = detail::cjk_terminator_len(t, j)) j += m;
            j = skip_closers(j);
            close(j);
            i = j;
            continue;
        }
        i += utf8_len(c);
    }
    if (start != npos) close(t.size());
    return out;
}

/// The idx-th sentence. Throws std::out_of_range past the end.
inline const TraceSentence& sentence_at(const TokenizedTrace& tok, std::size_t idx) {
    if (idx >= tok.sentences.size())
        throw std::out_of_range("sentence index " + std::to_string(idx) + " out of range (" +
                                std::to_string(tok.sentences.size()) + " sentences)");
    return tok.sentences[idx];
}

}  // namespace mtaudit
