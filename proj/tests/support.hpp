#pragma once

// Shared helpers for the unit tests and the acceptance runner: fixture
// paths, scratch directories, seeded generators and independent oracles.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mtaudit/annotate.hpp"
#include "mtaudit/corpus.hpp"
#include "mtaudit/evaluate.hpp"
#include "mtaudit/judge.hpp"

namespace testsupport {

using mtaudit::json;
namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(MTAUDIT_TEST_DIR) / "fixtures"; }
inline fs::path goldens() { return fs::path(MTAUDIT_TEST_DIR) / "golden"; }
inline fs::path source_root() { return fs::path(MTAUDIT_SOURCE_DIR); }

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& name) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("mtaudit-" + name + "-" + std::to_string(rd()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) { return mtaudit::read_file(p); }

// ---------------------------------------------------------------------------
// generators

inline std::string random_word(std::mt19937_64& rng) {
    static const std::vector<std::string> words{
        "the",   "word",  "means", "quill", "source", "output", "pluma", "Federer", "check",  "term",
        "I",     "think", "Next",  "maybe", "it",     "may",    "be",    "down",    "perhaps", "So",
        "don’t", "“ok”",  "año",   "日本",  "x",      "Dr.",    "e.g.",  "final",   "verify", "Possibly"};
    return words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
}

/// A random sentence ending in terminal punctuation.
inline std::string random_sentence(std::mt19937_64& rng) {
    int n = std::uniform_int_distribution<int>(1, 8)(rng);
    std::string s;
    for (int i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += random_word(rng);
    }
    static const std::vector<std::string> ends{".", "!", "?", ".", "."};
    s += ends[std::uniform_int_distribution<std::size_t>(0, ends.size() - 1)(rng)];
    return s;
}

/// Random trace with assorted separators, including blank-line runs.
inline std::string random_trace(std::mt19937_64& rng, int min_sentences = 1, int max_sentences = 10) {
    static const std::vector<std::string> seps{" ", " ", "\n\n", "\n\n\n", " \n\n \n", "  ", "\n \n"};
    int n = std::uniform_int_distribution<int>(min_sentences, max_sentences)(rng);
    std::string t;
    if (std::uniform_int_distribution<int>(0, 4)(rng) == 0) t += "\n";
    for (int i = 0; i < n; ++i) {
        if (i) t += seps[std::uniform_int_distribution<std::size_t>(0, seps.size() - 1)(rng)];
        t += random_sentence(rng);
    }
    if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) t += "\n\n";
    return t;
}

// ---------------------------------------------------------------------------
// oracles

/// Independent UTF-8 decoder (no error handling beyond byte passthrough).
inline std::vector<char32_t> decode_codepoints(const std::string& s) {
    std::vector<char32_t> out;
    for (std::size_t i = 0; i < s.size();) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        int len = c < 0x80 ? 1 : (c >> 5) == 6 ? 2 : (c >> 4) == 14 ? 3 : (c >> 3) == 30 ? 4 : 1;
        if (i + static_cast<std::size_t>(len) > s.size()) len = 1;
        char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
        for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

/// Exhaustive chrF: lists every n-gram, counts clipped matches by linear
/// scans, F-beta per order, mean over orders the reference supports.
inline double brute_force_chrf(const std::string& hyp_text, const std::string& ref_text, int max_n = 6,
                               double beta = 2.0) {
    auto clean = [](const std::string& s) {
        std::vector<char32_t> v;
        for (char32_t c : decode_codepoints(s))
            if (c != U' ' && c != U'\t' && c != U'\n' && c != U'\r' && c != U'\v' && c != U'\f') v.push_back(c);
        return v;
    };
    auto hyp = clean(hyp_text);
    auto ref = clean(ref_text);
    if (hyp.empty()) return 0.0;
    double sum = 0;
    int orders = 0;
    for (int n = 1; n <= max_n; ++n) {
        std::vector<std::vector<char32_t>> hg, rg;
        for (std::size_t i = 0; i + n <= hyp.size(); ++i) hg.emplace_back(hyp.begin() + i, hyp.begin() + i + n);
        for (std::size_t i = 0; i + n <= ref.size(); ++i) rg.emplace_back(ref.begin() + i, ref.begin() + i + n);
        if (rg.empty()) continue;
        ++orders;
        if (hg.empty()) continue;
        std::vector<std::vector<char32_t>> distinct = hg;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        long long matches = 0;
        for (const auto& g : distinct) {
            long long ch = std::count(hg.begin(), hg.end(), g);
            long long cr = std::count(rg.begin(), rg.end(), g);
            matches += std::min(ch, cr);
        }
        double p = static_cast<double>(matches) / static_cast<double>(hg.size());
        double r = static_cast<double>(matches) / static_cast<double>(rg.size());
        double f = (p + r) == 0 ? 0.0 : (1 + beta * beta) * p * r / (beta * beta * p + r);
        sum += f;
    }
    return orders ? sum / orders : 0.0;
}

/// Reference majority aggregation written as a direct count over groups.
inline std::map<std::pair<int, long long>, int> oracle_vote_counts(const std::vector<mtaudit::RawJudgment>& runs) {
    std::map<std::pair<int, long long>, std::set<int>> supporters;
    for (const auto& r : runs)
        for (const auto& i : r.issues)
            supporters[{static_cast<int>(i.category), i.trace_sentence_idx}].insert(r.run_index);
    std::map<std::pair<int, long long>, int> out;
    for (const auto& [k, s] : supporters) out[k] = static_cast<int>(s.size());
    return out;
}

// ---------------------------------------------------------------------------
// golden fixture

inline json golden_inputs() { return json::parse(slurp(fixtures() / "golden_inputs.json")); }
inline std::string golden(const std::string& name) { return slurp(goldens() / name); }

inline mtaudit::Sample golden_sample() {
    return mtaudit::sample_from_json(golden_inputs()["sample"], mtaudit::CorpusFormat::Triplets);
}

inline std::vector<mtaudit::Issue> golden_issues() {
    std::vector<mtaudit::Issue> out;
    const json inputs = golden_inputs();
    for (const auto& j : inputs["issues"]) out.push_back(mtaudit::issue_from_json(j));
    return out;
}

// ---------------------------------------------------------------------------
// count fixtures for the report tables

inline mtaudit::Sample make_sample(const std::string& id, const std::string& src, const std::string& tgt,
                                   const std::string& model, const std::string& trace = "I translate it.") {
    mtaudit::Sample s;
    s.id = id;
    s.pair = {src, tgt};
    s.source = "Source sentence " + id + ".";
    s.trace = trace;
    s.output = "Output " + id + ".";
    s.reference = "Reference " + id + ".";
    s.model_tag = model;
    return s;
}

inline mtaudit::Issue make_issue(const std::string& sample_id, long long idx,
                                 mtaudit::IssueCategory cat = mtaudit::IssueCategory::InputTrace,
                                 mtaudit::Severity sev = mtaudit::Severity::Error) {
    mtaudit::Issue i;
    i.sample_id = sample_id;
    i.category = cat;
    i.trace_sentence_idx = idx;
    i.trace_quote = "";
    i.rationale = "r";
    i.severity = sev;
    i.votes = 3;
    return i;
}

/// n samples of which `errorful` carry ERROR issues, `total_issues` in all.
inline void write_detection_fixture(const fs::path& corpus, const fs::path& issues, const std::string& prefix,
                                    const std::string& tgt, long long n, long long errorful, long long total_issues) {
    std::vector<mtaudit::Sample> samples;
    std::vector<mtaudit::Issue> found;
    for (long long i = 0; i < n; ++i) samples.push_back(make_sample(prefix + std::to_string(i), "en", tgt, "model-a"));
    long long remaining = total_issues;
    for (long long i = 0; i < errorful; ++i) {
        long long here = remaining / (errorful - i);
        for (long long k = 0; k < here; ++k) found.push_back(make_issue(samples[i].id, k));
        remaining -= here;
    }
    // a FIXED_LATER issue on a clean sample must not count
    if (errorful < n)
        found.push_back(make_issue(samples[n - 1].id, 0, mtaudit::IssueCategory::TraceInternal,
                                   mtaudit::Severity::FixedLater));
    mtaudit::save_samples(corpus, samples);
    mtaudit::save_issues(issues, found);
}

/// Majority counts for one language pair in a simulated validation study.
struct ValidationCounts {
    std::string pair_tgt;
    int p1_ok, p1_not_ok, p1_tie;
    int p2_yes, p2_borderline, p2_no, p2_tie;
};

struct ValidationFixture {
    std::vector<mtaudit::Sample> samples;
    std::vector<mtaudit::Issue> issues;
    std::vector<mtaudit::AnnotationRecord> records;
};

inline mtaudit::AnnotationRecord phase1_record(const std::string& sample, const std::string& annotator,
                                               const std::string& verdict) {
    mtaudit::Phase1Record r;
    r.sample_id = sample;
    r.annotator_id = annotator;
    r.verdict = verdict;
    if (verdict == "NOT_OK") {
        r.source_error_span = "Source";
        r.translation_error_span = "Output";
    }
    r.confidence = "CONFIDENT";
    return r;
}

inline mtaudit::AnnotationRecord phase2_record(const std::string& issue, const std::string& annotator,
                                               const std::string& is_error, const std::string& reflected = "YES",
                                               const std::string& confidence = "CONFIDENT") {
    mtaudit::Phase2Record r;
    r.issue_id = issue;
    r.annotator_id = annotator;
    r.is_error = is_error;
    r.confidence = confidence;
    if (is_error != "NO") r.reflected = reflected;
    r.categories = {is_error == "NO" ? "NO_ISSUE" : "SOURCE_MISINTERPRETATION"};
    return r;
}

/// Three annotators per item; each triple has a known majority (or none).
/// Every issue lives on its own sample; Phase 1 covers the first samples.
inline ValidationFixture make_validation_fixture(const std::vector<ValidationCounts>& pairs) {
    using Triple = std::vector<std::string>;
    const Triple yes{"YES", "YES", "NO"}, borderline{"BORDERLINE", "BORDERLINE", "YES"}, no{"NO", "NO", "YES"},
        tie{"YES", "NO", "BORDERLINE"};
    const Triple ok{"OK", "OK", "NOT_OK"}, not_ok{"NOT_OK", "NOT_OK", "OK"}, p1_tie{"OK", "NOT_OK", "UNSURE"};
    const std::string annotators[3] = {"ann-a", "ann-b", "ann-c"};
    ValidationFixture f;
    for (const auto& c : pairs) {
        std::vector<Triple> p2;
        p2.insert(p2.end(), c.p2_yes, yes);
        p2.insert(p2.end(), c.p2_borderline, borderline);
        p2.insert(p2.end(), c.p2_no, no);
        p2.insert(p2.end(), c.p2_tie, tie);
        std::vector<Triple> p1;
        p1.insert(p1.end(), c.p1_ok, ok);
        p1.insert(p1.end(), c.p1_not_ok, not_ok);
        p1.insert(p1.end(), c.p1_tie, p1_tie);
        std::size_t n = std::max(p1.size(), p2.size());
        for (std::size_t i = 0; i < n; ++i) {
            auto s = make_sample(c.pair_tgt + "-" + std::to_string(i), "en", c.pair_tgt, "model-a");
            f.samples.push_back(s);
            if (i < p1.size())
                for (int a = 0; a < 3; ++a) f.records.push_back(phase1_record(s.id, annotators[a], p1[i][a]));
            if (i < p2.size()) {
                auto issue = make_issue(s.id, 0);
                f.issues.push_back(issue);
                for (int a = 0; a < 3; ++a) f.records.push_back(phase2_record(issue.id(), annotators[a], p2[i][a]));
            }
        }
    }
    return f;
}

/// Urdu and Spanish counts used by the validation-table checks.
inline ValidationFixture table_validation_fixture() {
    return make_validation_fixture({{"ur", 0, 28, 2, 176, 3, 3, 7}, {"es", 24, 5, 1, 29, 2, 22, 5}});
}

}  // namespace testsupport
