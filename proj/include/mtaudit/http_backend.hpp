#pragma once

// OpenAI-compatible chat-completions client.
//
// POST {base_url}/chat/completions with
//   {model, messages, temperature, max_tokens, seed?,
//    chat_template_kwargs: {enable_thinking}}
// Reasoning is read from message.reasoning_content (vLLM, SGLang) or
// message.reasoning. With native_thinking set, a continuation prefix is sent
// as a partial assistant turn "<think>\n{prefix}" that the server continues.
//
// Define CPPHTTPLIB_OPENSSL_SUPPORT before including for https endpoints.

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>

#include "mtaudit/chat.hpp"

namespace mtaudit {

struct HttpBackendConfig {
    std::string base_url;  // e.g. http://localhost:8000/v1
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{120};
    bool native_thinking = false;
};

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InputError("backend url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

}  // namespace detail

class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)), url_(detail::split_url(cfg_.base_url)) {
        if (cfg_.model.empty()) throw InputError("--model is required for an HTTP backend");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url_.origin.rfind("https://", 0) == 0)
            throw InputError("https backend urls need a build with OpenSSL support");
#endif
    }

    json build_body(const ChatRequest& r) const {
        json messages = json::array();
        if (!r.system.empty()) messages.push_back({{"role", "system"}, {"content", r.system}});
        messages.push_back({{"role", "user"}, {"content", r.user}});
        json body = {{"model", cfg_.model},
                     {"messages", messages},
                     {"temperature", r.temperature},
                     {"max_tokens", r.max_tokens},
                     {"chat_template_kwargs", {{"enable_thinking", r.thinking}}}};
        if (r.temperature == 0.0) body["top_p"] = 1.0;
        if (r.seed) body["seed"] = *r.seed;
        if (r.continuation_prefix && cfg_.native_thinking) {
            body["messages"].push_back({{"role", "assistant"}, {"content", "<think>\n" + *r.continuation_prefix}});
            body["continue_final_message"] = true;
            body["add_generation_prompt"] = false;
        }
        return body;
    }

    ChatResponse complete(const ChatRequest& request) override {
        const std::string id = request_id(request);
        httplib::Client client(url_.origin);
        auto secs = static_cast<time_t>(cfg_.timeout.count());
        client.set_connection_timeout(secs, 0);
        client.set_read_timeout(secs, 0);
        client.set_write_timeout(secs, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        auto res = client.Post(url_.path + "/chat/completions", headers, build_body(request).dump(),
                               "application/json");
        if (!res) throw TransportError("request " + id + ": " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransportError("request " + id + ": HTTP " + std::to_string(res->status));
        if (res->status < 200 || res->status >= 300)
            throw BackendError(id, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

        json raw;
        try {
            raw = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendError(id, std::string("malformed response body: ") + e.what());
        }
        return parse_response(raw, id);
    }

    static ChatResponse parse_response(const json& raw, const std::string& id) {
        if (!raw.contains("choices") || !raw["choices"].is_array() || raw["choices"].empty())
            throw BackendError(id, "response has no choices");
        const auto& msg = raw["choices"][0].value("message", json::object());
        ChatResponse out;
        out.raw = raw;
        out.request_id = id;
        if (msg.contains("content") && msg["content"].is_string()) out.content = msg["content"].get<std::string>();
        for (const char* field : {"reasoning_content", "reasoning"}) {
            if (msg.contains(field) && msg[field].is_string()) {
                out.reasoning = msg[field].get<std::string>();
                break;
            }
        }
        return out;
    }

    bool native_thinking() const override { return cfg_.native_thinking; }
    std::string describe() const override { return cfg_.base_url + "#" + cfg_.model; }

private:
    HttpBackendConfig cfg_;
    detail::SplitUrl url_;
};

}  // namespace mtaudit
