#pragma once

// Chat-model access: request/response types, the backend interface, retry
// policy, and a bounded worker pool for concurrent requests.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mtaudit/util.hpp"

namespace mtaudit {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 4096;
    bool thinking = false;
    /// Text injected into the model's reasoning channel (re-reasoning only).
    std::optional<std::string> continuation_prefix;
    /// Distinguishes independent samples of the same prompt.
    std::optional<int> seed;
};

struct ChatResponse {
    std::string content;
    std::optional<std::string> reasoning;
    json raw;
    std::string request_id;
    /// True when a continuation prefix was folded into the user message
    /// because the backend has no native reasoning channel.
    bool emulated_continuation = false;
};

/// Transport-level failure (connection, timeout, 429/5xx). Retryable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Backend failure surfaced to callers after retries (exit code 2 at the CLI).
class BackendError : public std::runtime_error {
public:
    BackendError(std::string request_id, const std::string& what)
        : std::runtime_error("request " + request_id + ": " + what), request_id_(std::move(request_id)) {}
    const std::string& request_id() const { return request_id_; }

private:
    std::string request_id_;
};

class EmptyGeneration : public BackendError {
public:
    using BackendError::BackendError;
};

class UnscriptedPrompt : public BackendError {
public:
    using BackendError::BackendError;
};

/// Identity of a prompt independent of sampling parameters. Mock scripts
/// are keyed by it.
inline std::string prompt_fingerprint(const ChatRequest& r) {
    std::string key;
    key.reserve(r.system.size() + r.user.size() + 16);
    key += r.system;
    key += '\x1f';
    key += r.user;
    key += '\x1f';
    key += r.thinking ? '1' : '0';
    key += '\x1f';
    if (r.continuation_prefix) key += *r.continuation_prefix;
    else key += '\x00';
    return to_hex(fnv1a64(key));
}

/// Fingerprint plus sampling parameters.
inline std::string request_id(const ChatRequest& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "|t=%.6f|s=%d|m=%d", r.temperature, r.seed.value_or(-1), r.max_tokens);
    return to_hex(fnv1a64(prompt_fingerprint(r) + buf));
}

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Must be safe to call from several threads at once.
    virtual ChatResponse complete(const ChatRequest& request) = 0;

    /// Whether the backend can place text into the model's reasoning channel.
    virtual bool native_thinking() const { return false; }

    virtual std::string describe() const = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{8000};

    std::chrono::milliseconds backoff(int attempt) const {
        double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, attempt - 1);
        return std::chrono::milliseconds(
            static_cast<long long>(std::min(ms, static_cast<double>(max_backoff.count()))));
    }
};

/// Retries transport failures; other exceptions propagate untouched.
inline ChatResponse complete_with_retry(ChatBackend& backend, const ChatRequest& request,
                                        const RetryPolicy& policy) {
    const std::string id = request_id(request);
    std::string last_error;
    for (int attempt = 1; attempt <= std::max(1, policy.max_attempts); ++attempt) {
        try {
            auto resp = backend.complete(request);
            resp.request_id = id;
            return resp;
        } catch (const TransportError& e) {
            last_error = e.what();
            if (attempt < policy.max_attempts) std::this_thread::sleep_for(policy.backoff(attempt));
        }
    }
    throw BackendError(id, "failed after " + std::to_string(std::max(1, policy.max_attempts)) +
                               " attempts: " + last_error);
}

/// Appends every request/response pair to a JSONL transcript. The
/// transcript can be loaded back as a mock script.
class TranscriptBackend final : public ChatBackend {
public:
    TranscriptBackend(ChatBackend& inner, std::filesystem::path path) : inner_(inner), path_(std::move(path)) {}

    ChatResponse complete(const ChatRequest& request) override {
        auto resp = inner_.complete(request);
        json row = {{"fingerprint", prompt_fingerprint(request)},
                    {"request_id", request_id(request)},
                    {"system", request.system},
                    {"user", request.user},
                    {"thinking", request.thinking},
                    {"temperature", request.temperature},
                    {"content", resp.content}};
        if (request.seed) row["seed"] = *request.seed;
        if (request.continuation_prefix) row["continuation_prefix"] = *request.continuation_prefix;
        if (resp.reasoning) row["reasoning"] = *resp.reasoning;
        std::lock_guard lock(mu_);
        append_jsonl(path_, row);
        return resp;
    }

    bool native_thinking() const override { return inner_.native_thinking(); }
    std::string describe() const override { return inner_.describe(); }

private:
    ChatBackend& inner_;
    std::filesystem::path path_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// concurrency

/// Runs fn(i) for i in [0, n) on at most `max_concurrency` threads. Results
/// must be written by index; the first exception is rethrown after all
/// workers finish.
inline void parallel_for(std::size_t n, std::size_t max_concurrency, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = std::clamp<std::size_t>(max_concurrency, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mtaudit
