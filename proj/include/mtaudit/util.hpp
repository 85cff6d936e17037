#pragma once

// Small shared helpers: errors, hashing, UTF-8, JSONL I/O, fixed-point rendering.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mtaudit {

using json = nlohmann::json;

/// Malformed or missing input data (exit code 1 at the CLI).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// hashing

/// 64-bit FNV-1a. Stable across platforms, used for prompt fingerprints and
/// content hashes in run manifests.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string content_hash(std::string_view data) { return to_hex(fnv1a64(data)); }

// ---------------------------------------------------------------------------
// text

inline bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    return ascii_lower(s.substr(0, prefix.size())) == ascii_lower(prefix);
}

/// Length in bytes of the UTF-8 sequence starting with lead byte `c`.
/// Invalid lead bytes count as a single byte.
inline std::size_t utf8_len(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 1;
}

/// Decodes UTF-8 into code points. Malformed bytes decode to themselves so
/// that arbitrary byte strings still produce a deterministic sequence.
inline std::vector<char32_t> utf8_decode(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        auto lead = static_cast<unsigned char>(s[i]);
        std::size_t n = utf8_len(lead);
        if (n == 1 || i + n > s.size()) {
            out.push_back(lead);
            ++i;
            continue;
        }
        char32_t cp = lead & (0xFF >> (n + 1));
        bool ok = true;
        for (std::size_t k = 1; k < n; ++k) {
            auto cont = static_cast<unsigned char>(s[i + k]);
            if ((cont & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cont & 0x3F);
        }
        if (!ok) {
            out.push_back(lead);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += n;
    }
    return out;
}

/// Number of UTF-16 code units in the first `byte_offset` bytes of `s`.
/// Browser clients index strings in UTF-16, the library indexes bytes.
inline std::size_t utf16_offset(std::string_view s, std::size_t byte_offset) {
    std::size_t units = 0;
    for (char32_t cp : utf8_decode(s.substr(0, byte_offset))) units += cp > 0xFFFF ? 2 : 1;
    return units;
}

// ---------------------------------------------------------------------------
// fixed-point rendering

/// Renders num/den * scale rounded half-up to `decimals` places using integer
/// arithmetic only, so 2/149 renders "1.3" on every platform.
inline std::string format_ratio(long long num, long long den, int decimals, long long scale = 1) {
    if (den <= 0) throw std::invalid_argument("format_ratio: denominator must be positive");
    long long pow10 = 1;
    for (int i = 0; i < decimals; ++i) pow10 *= 10;
    bool negative = num < 0;
    unsigned long long n = static_cast<unsigned long long>(negative ? -num : num) * scale * pow10;
    unsigned long long d = static_cast<unsigned long long>(den);
    unsigned long long q = (2 * n + d) / (2 * d);
    std::string digits = std::to_string(q);
    if (decimals > 0) {
        if (digits.size() <= static_cast<std::size_t>(decimals))
            digits.insert(0, static_cast<std::size_t>(decimals) + 1 - digits.size(), '0');
        digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
    }
    if (negative && q != 0) digits.insert(0, "-");
    return digits;
}

/// "56.0%" style percentage with one decimal.
inline std::string format_percent(long long num, long long den) {
    return format_ratio(num, den, 1, 100) + "%";
}

/// "176/189 (93.1%)"
inline std::string format_count_percent(long long num, long long den) {
    return std::to_string(num) + "/" + std::to_string(den) + " (" + format_percent(num, den) + ")";
}

/// Signed four-decimal rendering; positive values carry an explicit "+",
/// values that round to zero render as "0.0000".
inline std::string format_delta(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", value);
    std::string s = buf;
    if (s == "-0.0000" || s == "0.0000") return "0.0000";
    if (value > 0) s.insert(0, "+");
    return s;
}

// ---------------------------------------------------------------------------
// files

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

/// Calls `fn(line_number, object)` for every non-blank line. Line numbers are 1-based.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError("line " + std::to_string(lineno) + ": invalid JSON (" + e.what() + ")");
        }
        if (!obj.is_object())
            throw InputError("line " + std::to_string(lineno) + ": expected a JSON object");
        fn(lineno, obj);
    }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> out;
    for_each_jsonl(path, [&](std::size_t, const json& j) { out.push_back(j); });
    return out;
}

/// One compact object per line, keys sorted (nlohmann default), trailing newline.
inline std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump(-1, ' ', false, json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
    write_file(path, to_jsonl(rows));
}

inline void append_jsonl(const std::filesystem::path& path, const json& row) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw InputError("cannot append to " + path.string());
    out << row.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

// ---------------------------------------------------------------------------
// json field access with line-numbered errors

namespace detail {

inline std::string require_string(const json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw InputError(where + "missing field " + field);
    if (!it->is_string()) throw InputError(where + "field " + field + " must be a string");
    return it->get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* field,
                                                  const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw InputError(where + "field " + field + " must be a string");
    return it->get<std::string>();
}

}  // namespace detail

}  // namespace mtaudit
