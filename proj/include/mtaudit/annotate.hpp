#pragma once

// Two-phase human validation: record types, the durable journal, the task
// queue and the validation statistics.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mtaudit/corpus.hpp"
#include "mtaudit/judge.hpp"
#include "mtaudit/locate.hpp"

namespace mtaudit {

class RecordRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string one_of(const json& obj, const char* field, std::initializer_list<std::string_view> allowed) {
    if (!obj.contains(field) || !obj[field].is_string()) throw RecordRejected(std::string(field) + " is required");
    auto v = obj[field].get<std::string>();
    for (auto a : allowed)
        if (a == v) return v;
    throw RecordRejected(std::string(field) + " has invalid value " + v);
}

inline std::string required_text(const json& obj, const char* field) {
    if (!obj.contains(field) || !obj[field].is_string() || trim(obj[field].get<std::string>()).empty())
        throw RecordRejected(std::string(field) + " is required");
    return obj[field].get<std::string>();
}

inline std::optional<std::string> optional_text(const json& obj, const char* field) {
    if (!obj.contains(field) || obj[field].is_null()) return std::nullopt;
    if (!obj[field].is_string()) throw RecordRejected(std::string(field) + " must be a string");
    return obj[field].get<std::string>();
}

inline void only_fields(const json& obj, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : obj.items()) {
        bool ok = std::any_of(allowed.begin(), allowed.end(), [&](std::string_view a) { return a == k; });
        if (!ok) throw RecordRejected("unexpected field " + k);
    }
}

}  // namespace detail

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// records

struct Phase1Record {
    std::string sample_id;
    std::string annotator_id;
    std::string verdict;  // OK | NOT_OK | UNSURE
    std::optional<std::string> source_error_span;
    std::optional<std::string> translation_error_span;
    std::string confidence;  // CONFIDENT | SOMEWHAT | NOT_CONFIDENT
    std::string timestamp;
};

struct Phase2Record {
    std::string issue_id;
    std::string annotator_id;
    std::string is_error;  // YES | NO | BORDERLINE
    std::string confidence;
    std::optional<std::string> reflected;  // YES | NO | NOT_APPLICABLE
    std::vector<std::string> categories;
    std::optional<std::string> free_text;
    std::string timestamp;
};

using AnnotationRecord = std::variant<Phase1Record, Phase2Record>;

inline int phase_of(const AnnotationRecord& r) { return r.index() == 0 ? 1 : 2; }

inline const std::string& item_of(const AnnotationRecord& r) {
    return r.index() == 0 ? std::get<Phase1Record>(r).sample_id : std::get<Phase2Record>(r).issue_id;
}

inline const std::string& annotator_of(const AnnotationRecord& r) {
    return std::visit([](const auto& x) -> const std::string& { return x.annotator_id; }, r);
}

/// Parses and validates one submitted record; RecordRejected names the rule.
inline AnnotationRecord record_from_json(const json& j) {
    if (!j.is_object()) throw RecordRejected("record must be a JSON object");
    if (!j.contains("phase") || !j["phase"].is_number_integer()) throw RecordRejected("phase is required");
    int phase = j["phase"].get<int>();
    if (phase == 1) {
        detail::only_fields(j, {"phase", "sample_id", "annotator_id", "verdict", "source_error_span",
                                "translation_error_span", "confidence", "timestamp"});
        Phase1Record r;
        r.sample_id = detail::required_text(j, "sample_id");
        r.annotator_id = detail::required_text(j, "annotator_id");
        r.verdict = detail::one_of(j, "verdict", {"OK", "NOT_OK", "UNSURE"});
        r.source_error_span = detail::optional_text(j, "source_error_span");
        r.translation_error_span = detail::optional_text(j, "translation_error_span");
        r.confidence = detail::one_of(j, "confidence", {"CONFIDENT", "SOMEWHAT", "NOT_CONFIDENT"});
        r.timestamp = detail::optional_text(j, "timestamp").value_or("");
        bool has_src = r.source_error_span && !trim(*r.source_error_span).empty();
        bool has_tgt = r.translation_error_span && !trim(*r.translation_error_span).empty();
        if (r.verdict == "NOT_OK" && !(has_src && has_tgt))
            throw RecordRejected("NOT_OK requires source_error_span and translation_error_span");
        if (r.verdict != "NOT_OK" && (r.source_error_span || r.translation_error_span))
            throw RecordRejected("error spans are only allowed when verdict is NOT_OK");
        return r;
    }
    if (phase == 2) {
        detail::only_fields(j, {"phase", "issue_id", "annotator_id", "is_error", "confidence", "reflected",
                                "categories", "free_text", "timestamp"});
        Phase2Record r;
        r.issue_id = detail::required_text(j, "issue_id");
        r.annotator_id = detail::required_text(j, "annotator_id");
        r.is_error = detail::one_of(j, "is_error", {"YES", "NO", "BORDERLINE"});
        r.confidence = detail::one_of(j, "confidence", {"CONFIDENT", "SOMEWHAT", "NOT_CONFIDENT"});
        bool gated = r.is_error != "NO";
        if (gated) r.reflected = detail::one_of(j, "reflected", {"YES", "NO", "NOT_APPLICABLE"});
        else if (j.contains("reflected") && !j["reflected"].is_null())
            throw RecordRejected("reflected is only answered when is_error is YES or BORDERLINE");
        if (!j.contains("categories") || !j["categories"].is_array() || j["categories"].empty())
            throw RecordRejected("categories must be a non-empty list");
        std::set<std::string> seen;
        for (const auto& c : j["categories"]) {
            if (!c.is_string()) throw RecordRejected("categories must be strings");
            auto v = c.get<std::string>();
            if (v != "SOURCE_MISINTERPRETATION" && v != "INTERNAL_CONTRADICTION" && v != "NO_ISSUE" &&
                v != "OTHER_UNSURE")
                throw RecordRejected("categories has invalid value " + v);
            if (!seen.insert(v).second) throw RecordRejected("categories has duplicate value " + v);
            r.categories.push_back(v);
        }
        r.free_text = detail::optional_text(j, "free_text");
        r.timestamp = detail::optional_text(j, "timestamp").value_or("");
        return r;
    }
    throw RecordRejected("phase must be 1 or 2");
}

inline json to_json(const AnnotationRecord& rec) {
    if (rec.index() == 0) {
        const auto& r = std::get<Phase1Record>(rec);
        json j = {{"phase", 1},          {"sample_id", r.sample_id},   {"annotator_id", r.annotator_id},
                  {"verdict", r.verdict}, {"confidence", r.confidence}, {"timestamp", r.timestamp}};
        if (r.source_error_span) j["source_error_span"] = *r.source_error_span;
        if (r.translation_error_span) j["translation_error_span"] = *r.translation_error_span;
        return j;
    }
    const auto& r = std::get<Phase2Record>(rec);
    json j = {{"phase", 2},           {"issue_id", r.issue_id},     {"annotator_id", r.annotator_id},
              {"is_error", r.is_error}, {"confidence", r.confidence}, {"categories", r.categories},
              {"timestamp", r.timestamp}};
    if (r.reflected) j["reflected"] = *r.reflected;
    if (r.free_text) j["free_text"] = *r.free_text;
    return j;
}

// ---------------------------------------------------------------------------
// majority

inline constexpr std::string_view kTie = "TIE";

/// Label held by at least two of three annotators, else TIE.
inline std::string majority(const std::vector<std::string>& labels) {
    if (labels.size() != 3) throw std::invalid_argument("majority needs exactly 3 labels, got " + std::to_string(labels.size()));
    if (labels[0] == labels[1] || labels[0] == labels[2]) return labels[0];
    if (labels[1] == labels[2]) return labels[1];
    return std::string(kTie);
}

// ---------------------------------------------------------------------------
// statistics

struct LanguageValidation {
    std::string pair;
    long long samples_annotated = 0;
    long long issues_annotated = 0;
    // Phase 1 majorities; OK counts as YES, NOT_OK as NO
    long long correct_yes = 0, correct_no = 0, correct_tie = 0, correct_unsure = 0;
    // Phase 2 majorities
    long long issue_yes = 0, issue_borderline = 0, issue_no = 0, issue_tie = 0;
    // individual YES/BORDERLINE annotations by their reflected answer
    long long reflected_yes = 0, reflected_no = 0, reflected_na = 0;
    // confidence in half units (CONFIDENT=2, SOMEWHAT=1, NOT_CONFIDENT=0)
    long long conf_half_sum = 0, conf_n = 0;
    long long conf_yes_half_sum = 0, conf_yes_n = 0;
    long long conf_no_half_sum = 0, conf_no_n = 0;

    long long yes_plus_borderline() const { return issue_yes + issue_borderline; }
    long long reflected_total() const { return reflected_yes + reflected_no + reflected_na; }
};

struct ValidationSummary {
    std::vector<LanguageValidation> languages;
    std::vector<std::string> coverage_warnings;
};

namespace detail {

inline long long confidence_half(const std::string& c) {
    if (c == "CONFIDENT") return 2;
    if (c == "SOMEWHAT") return 1;
    return 0;
}

inline std::string pct_or_na(long long num, long long den) { return den ? format_percent(num, den) : "n/a"; }

}  // namespace detail

/// Table-4 statistics per language pair. Items without exactly three
/// records are left out and listed in coverage_warnings.
inline ValidationSummary summarize_validation(const std::vector<AnnotationRecord>& records,
                                              const std::vector<Issue>& issues, const std::vector<Sample>& samples) {
    std::map<std::string, std::string> sample_pair;
    std::vector<std::string> pair_order;
    for (const auto& s : samples) {
        sample_pair[s.id] = s.pair.label();
        if (std::find(pair_order.begin(), pair_order.end(), s.pair.label()) == pair_order.end())
            pair_order.push_back(s.pair.label());
    }
    std::map<std::string, std::string> issue_pair;
    for (const auto& i : issues) {
        auto it = sample_pair.find(i.sample_id);
        if (it == sample_pair.end()) throw InputError("issue " + i.id() + " references unknown sample " + i.sample_id);
        issue_pair[i.id()] = it->second;
    }

    std::map<std::string, std::vector<const Phase1Record*>> p1;
    std::map<std::string, std::vector<const Phase2Record*>> p2;
    for (const auto& rec : records) {
        if (rec.index() == 0) {
            const auto& r = std::get<Phase1Record>(rec);
            if (!sample_pair.count(r.sample_id)) throw InputError("record references unknown sample " + r.sample_id);
            p1[r.sample_id].push_back(&r);
        } else {
            const auto& r = std::get<Phase2Record>(rec);
            if (!issue_pair.count(r.issue_id)) throw InputError("record references unknown issue " + r.issue_id);
            p2[r.issue_id].push_back(&r);
        }
    }

    std::map<std::string, LanguageValidation> by_pair;
    for (const auto& p : pair_order) by_pair[p].pair = p;
    ValidationSummary out;

    for (const auto& [sample_id, recs] : p1) {
        if (recs.size() != 3) {
            out.coverage_warnings.push_back("phase 1 item " + sample_id + " has " + std::to_string(recs.size()) +
                                            " records, expected 3");
            continue;
        }
        auto& lv = by_pair[sample_pair[sample_id]];
        ++lv.samples_annotated;
        auto m = majority({recs[0]->verdict, recs[1]->verdict, recs[2]->verdict});
        if (m == "OK") ++lv.correct_yes;
        else if (m == "NOT_OK") ++lv.correct_no;
        else if (m == "UNSURE") ++lv.correct_unsure;
        else ++lv.correct_tie;
    }

    for (const auto& [issue_id, recs] : p2) {
        if (recs.size() != 3) {
            out.coverage_warnings.push_back("phase 2 item " + issue_id + " has " + std::to_string(recs.size()) +
                                            " records, expected 3");
            continue;
        }
        auto& lv = by_pair[issue_pair[issue_id]];
        ++lv.issues_annotated;
        auto m = majority({recs[0]->is_error, recs[1]->is_error, recs[2]->is_error});
        if (m == "YES") ++lv.issue_yes;
        else if (m == "BORDERLINE") ++lv.issue_borderline;
        else if (m == "NO") ++lv.issue_no;
        else ++lv.issue_tie;
        for (const auto* r : recs) {
            long long half = detail::confidence_half(r->confidence);
            lv.conf_half_sum += half;
            ++lv.conf_n;
            if (r->is_error == "YES") {
                lv.conf_yes_half_sum += half;
                ++lv.conf_yes_n;
            } else if (r->is_error == "NO") {
                lv.conf_no_half_sum += half;
                ++lv.conf_no_n;
            }
            if (r->is_error == "NO") continue;
            const std::string refl = r->reflected.value_or("NOT_APPLICABLE");
            if (refl == "YES") ++lv.reflected_yes;
            else if (refl == "NO") ++lv.reflected_no;
            else ++lv.reflected_na;
        }
    }

    for (const auto& p : pair_order) out.languages.push_back(by_pair[p]);
    return out;
}

inline json to_json(const LanguageValidation& v) {
    auto conf = [](long long half, long long n) { return n ? json(format_ratio(half, 2 * n, 1, 100) + "%") : json(nullptr); };
    return {{"pair", v.pair},
            {"samples_annotated", v.samples_annotated},
            {"issues_annotated", v.issues_annotated},
            {"correctness",
             {{"yes", v.correct_yes}, {"no", v.correct_no}, {"tie", v.correct_tie}, {"unsure", v.correct_unsure}}},
            {"validation",
             {{"yes", v.issue_yes},
              {"yes_plus_borderline", v.yes_plus_borderline()},
              {"borderline", v.issue_borderline},
              {"no", v.issue_no},
              {"tie", v.issue_tie}}},
            {"reflection",
             {{"yes", v.reflected_yes},
              {"no", v.reflected_no},
              {"not_applicable", v.reflected_na},
              {"annotations", v.reflected_total()}}},
            {"confidence",
             {{"mean", conf(v.conf_half_sum, v.conf_n)},
              {"on_yes", conf(v.conf_yes_half_sum, v.conf_yes_n)},
              {"on_no", conf(v.conf_no_half_sum, v.conf_no_n)}}}};
}

inline json to_json(const ValidationSummary& s) {
    json langs = json::array();
    for (const auto& l : s.languages) langs.push_back(to_json(l));
    return {{"languages", langs}, {"coverage_warnings", s.coverage_warnings}};
}

/// Plain-text rendering laid out like the human-validation table.
inline std::string render_validation(const ValidationSummary& s) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{""};
    for (const auto& l : s.languages) header.push_back(l.pair);
    cells.push_back(header);
    auto row = [&](const std::string& label, auto fn) {
        std::vector<std::string> r{label};
        for (const auto& l : s.languages) r.push_back(fn(l));
        cells.push_back(r);
    };
    auto frac = [](long long n, long long d) { return d ? format_count_percent(n, d) : std::string("n/a"); };
    auto half = [](long long h, long long n) { return n ? format_ratio(h, 2 * n, 1, 100) + "%" : std::string("n/a"); };
    row("Samples annotated", [](const LanguageValidation& l) { return std::to_string(l.samples_annotated); });
    row("Issues annotated", [](const LanguageValidation& l) { return std::to_string(l.issues_annotated); });
    row("Correct: YES", [&](const LanguageValidation& l) { return frac(l.correct_yes, l.samples_annotated); });
    row("Correct: NO", [&](const LanguageValidation& l) { return frac(l.correct_no, l.samples_annotated); });
    row("Correct: TIE", [&](const LanguageValidation& l) { return frac(l.correct_tie, l.samples_annotated); });
    row("Correct: UNSURE", [&](const LanguageValidation& l) { return frac(l.correct_unsure, l.samples_annotated); });
    row("Error: YES only", [&](const LanguageValidation& l) { return frac(l.issue_yes, l.issues_annotated); });
    row("Error: YES + BORDERLINE",
        [&](const LanguageValidation& l) { return frac(l.yes_plus_borderline(), l.issues_annotated); });
    row("Error: NO", [&](const LanguageValidation& l) { return frac(l.issue_no, l.issues_annotated); });
    row("Error: TIE", [&](const LanguageValidation& l) { return frac(l.issue_tie, l.issues_annotated); });
    row("Reflected: YES",
        [](const LanguageValidation& l) { return detail::pct_or_na(l.reflected_yes, l.reflected_total()); });
    row("Reflected: NO",
        [](const LanguageValidation& l) { return detail::pct_or_na(l.reflected_no, l.reflected_total()); });
    row("Reflected: UNSURE",
        [](const LanguageValidation& l) { return detail::pct_or_na(l.reflected_na, l.reflected_total()); });
    row("Mean confidence", [&](const LanguageValidation& l) { return half(l.conf_half_sum, l.conf_n); });
    row("Confidence on YES", [&](const LanguageValidation& l) { return half(l.conf_yes_half_sum, l.conf_yes_n); });
    row("Confidence on NO", [&](const LanguageValidation& l) { return half(l.conf_no_half_sum, l.conf_no_n); });

    std::string out;
    std::vector<std::size_t> widths(cells.front().size(), 0);
    for (const auto& r : cells)
        for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
    for (const auto& r : cells) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) line += "  ";
            line += r[c];
            if (c + 1 < r.size()) line.append(widths[c] - r[c].size(), ' ');
        }
        out += line + "\n";
    }
    for (const auto& w : s.coverage_warnings) out += "warning: " + w + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// durable journal

/// Append-only JSONL journal. Every append is fsynced before it returns; the
/// latest record per (phase, item, annotator) wins on load. A torn final line
/// left by a crash is ignored.
class RecordStore {
public:
    explicit RecordStore(std::filesystem::path path) : path_(std::move(path)) { load(); }

    void append(const AnnotationRecord& rec) {
        std::lock_guard lock(mu_);
        std::string line = to_json(rec).dump() + "\n";
        int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd < 0) throw InputError("cannot open journal " + path_.string());
        const char* p = line.data();
        std::size_t left = line.size();
        while (left > 0) {
            ssize_t n = ::write(fd, p, left);
            if (n < 0) {
                ::close(fd);
                throw InputError("write failed on journal " + path_.string());
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        ::fsync(fd);
        ::close(fd);
        put(rec);
        ++appended_;
    }

    /// Current records, one per (phase, item, annotator), in first-seen order.
    std::vector<AnnotationRecord> records() const {
        std::lock_guard lock(mu_);
        std::vector<AnnotationRecord> out;
        out.reserve(order_.size());
        for (const auto& k : order_) out.push_back(latest_.at(k));
        return out;
    }

    /// Rewrites the journal with only the live records (write, fsync, rename).
    void compact() {
        std::lock_guard lock(mu_);
        auto tmp = path_;
        tmp += ".compact";
        std::string data;
        for (const auto& k : order_) data += to_json(latest_.at(k)).dump() + "\n";
        int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd < 0) throw InputError("cannot write " + tmp.string());
        if (::write(fd, data.data(), data.size()) != static_cast<ssize_t>(data.size())) {
            ::close(fd);
            throw InputError("short write on " + tmp.string());
        }
        ::fsync(fd);
        ::close(fd);
        std::filesystem::rename(tmp, path_);
        appended_ = 0;
    }

    std::size_t appended_since_compaction() const {
        std::lock_guard lock(mu_);
        return appended_;
    }

    const std::filesystem::path& path() const { return path_; }

private:
    using Key = std::tuple<int, std::string, std::string>;

    void put(const AnnotationRecord& rec) {
        Key k{phase_of(rec), item_of(rec), annotator_of(rec)};
        auto [it, inserted] = latest_.insert_or_assign(k, rec);
        if (inserted) order_.push_back(k);
    }

    void load() {
        if (!std::filesystem::exists(path_)) return;
        std::string text = read_file(path_);
        std::size_t pos = 0, lineno = 0;
        while (pos < text.size()) {
            std::size_t nl = text.find('\n', pos);
            bool torn = nl == std::string::npos;
            std::string_view line(text.data() + pos, (torn ? text.size() : nl) - pos);
            pos = torn ? text.size() : nl + 1;
            ++lineno;
            if (trim(line).empty()) continue;
            try {
                put(record_from_json(json::parse(line)));
            } catch (const std::exception& e) {
                if (torn) break;  // partial write at crash time
                throw InputError("journal " + path_.string() + " line " + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::map<Key, AnnotationRecord> latest_;
    std::vector<Key> order_;
    std::size_t appended_ = 0;
};

// ---------------------------------------------------------------------------
// task queue

inline constexpr int kAnnotatorsPerItem = 3;

class UnknownAnnotator : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Serves Phase 1 items (samples) and Phase 2 items (issues) so that each
/// item reaches three distinct annotators and nobody sees an item twice. An
/// annotator asking again before submitting gets the same task back.
class TaskQueue {
public:
    TaskQueue(std::vector<Sample> samples, std::vector<Issue> issues, std::vector<std::string> annotators,
              RecordStore& store)
        : samples_(std::move(samples)), issues_(std::move(issues)), store_(store) {
        for (auto& a : annotators) annotators_.insert(std::move(a));
        for (std::size_t i = 0; i < samples_.size(); ++i) sample_index_[samples_[i].id] = i;
        for (std::size_t i = 0; i < issues_.size(); ++i) {
            if (!sample_index_.count(issues_[i].sample_id))
                throw InputError("issue " + issues_[i].id() + " references unknown sample " + issues_[i].sample_id);
            issue_index_[issues_[i].id()] = i;
        }
        for (const auto& rec : store_.records()) {
            int ph = phase_of(rec);
            assigned_[ph][item_of(rec)].insert(annotator_of(rec));
            submitted_[ph][item_of(rec)].insert(annotator_of(rec));
        }
    }

    /// Task payload, or nullopt when the annotator has nothing left.
    std::optional<json> next_task(const std::string& annotator, int phase) {
        check_annotator(annotator);
        if (phase != 1 && phase != 2) throw InputError("phase must be 1 or 2");
        std::lock_guard lock(mu_);
        auto& pending = pending_[phase];
        if (auto it = pending.find(annotator); it != pending.end()) return payload(phase, it->second);
        std::size_t n = phase == 1 ? samples_.size() : issues_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::string id = phase == 1 ? samples_[i].id : issues_[i].id();
            auto& who = assigned_[phase][id];
            if (who.count(annotator) || static_cast<int>(who.size()) >= kAnnotatorsPerItem) continue;
            who.insert(annotator);
            pending[annotator] = id;
            return payload(phase, id);
        }
        return std::nullopt;
    }

    /// Validates, checks the item was served to this annotator, then persists.
    void submit(const AnnotationRecord& rec) {
        const auto& annotator = annotator_of(rec);
        check_annotator(annotator);
        int phase = phase_of(rec);
        const auto& item = item_of(rec);
        if (phase == 1 && !sample_index_.count(item)) throw RecordRejected("unknown sample " + item);
        if (phase == 2 && !issue_index_.count(item)) throw RecordRejected("unknown issue " + item);
        std::lock_guard lock(mu_);
        auto& who = assigned_[phase][item];
        if (!who.count(annotator)) throw RecordRejected("item " + item + " was not served to " + annotator);
        AnnotationRecord stored = rec;
        std::visit(
            [](auto& r) {
                if (r.timestamp.empty()) r.timestamp = utc_timestamp();
            },
            stored);
        store_.append(stored);
        submitted_[phase][item].insert(annotator);
        if (auto it = pending_[phase].find(annotator); it != pending_[phase].end() && it->second == item)
            pending_[phase].erase(it);
    }

    const std::vector<Sample>& samples() const { return samples_; }
    const std::vector<Issue>& issues() const { return issues_; }

    json payload(int phase, const std::string& id) const {
        if (phase == 1) {
            const auto& s = samples_[sample_index_.at(id)];
            return {{"phase", 1},
                    {"sample_id", s.id},
                    {"pair", s.pair.label()},
                    {"source", s.source},
                    {"translation", s.output}};
        }
        const auto& issue = issues_[issue_index_.at(id)];
        const auto& s = samples_[sample_index_.at(issue.sample_id)];
        json j = {{"phase", 2},
                  {"issue_id", id},
                  {"sample_id", s.id},
                  {"pair", s.pair.label()},
                  {"source", s.source},
                  {"translation", s.output},
                  {"trace", s.trace},
                  {"category", std::string(to_string(issue.category))},
                  {"trace_sentence_idx", issue.trace_sentence_idx}};
        auto span = locate_issue_edit_span(issue, s.trace, tokenize_trace(s.trace));
        if (span) {
            j["highlight"] = {{"start", span->span.start}, {"end", span->span.end}};
            j["highlight_utf16"] = {{"start", utf16_offset(s.trace, span->span.start)},
                                    {"end", utf16_offset(s.trace, span->span.end)}};
        } else {
            j["highlight"] = nullptr;
            j["highlight_utf16"] = nullptr;
        }
        return j;
    }

private:
    void check_annotator(const std::string& a) const {
        if (!annotators_.count(a)) throw UnknownAnnotator("unknown annotator " + a);
    }

    std::vector<Sample> samples_;
    std::vector<Issue> issues_;
    std::set<std::string> annotators_;
    std::map<std::string, std::size_t> sample_index_;
    std::map<std::string, std::size_t> issue_index_;
    RecordStore& store_;
    std::mutex mu_;
    std::map<int, std::map<std::string, std::set<std::string>>> assigned_;
    std::map<int, std::map<std::string, std::set<std::string>>> submitted_;
    std::map<int, std::map<std::string, std::string>> pending_;  // annotator -> served item
};

}  // namespace mtaudit
