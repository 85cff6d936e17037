#pragma once

// Deterministic offline backend driven by a JSON script.
//
// Script format:
//   {
//     "on_unscripted": "error" | "default",
//     "default": <response>,
//     "native_thinking": false,
//     "responses": { "<prompt fingerprint>": <response> | [<response>, ...] },
//     "rules": [ { "match": ["substring", ...], "responses": <response> | [...] } ]
//   }
// A response is a string or {"content": str, "reasoning": str}. Arrays are
// indexed by the request seed (clamped to the last entry), which lets the k
// judge runs of one prompt return different judgments. Fingerprint entries
// win over rules; rules are tried in order and match when every substring
// occurs in the system or user message.

#include <algorithm>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mtaudit/chat.hpp"

namespace mtaudit {

class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(json script) : script_(std::move(script)) { validate(); }

    /// Reads a script file, or a JSONL transcript recorded by TranscriptBackend.
    static json load_script(const std::filesystem::path& path) {
        auto text = read_file(path);
        try {
            auto j = json::parse(text);
            // a one-line transcript also parses as a single document
            if (!j.is_object() || !j.contains("fingerprint")) return j;
        } catch (const json::parse_error&) {
        }
        return script_from_transcript(path);
    }

    static std::unique_ptr<MockBackend> from_file(const std::filesystem::path& path) {
        return std::make_unique<MockBackend>(load_script(path));
    }

    /// Turns a recorded transcript into a script keyed by fingerprint and seed.
    static json script_from_transcript(const std::filesystem::path& path) {
        json responses = json::object();
        for_each_jsonl(path, [&](std::size_t, const json& row) {
            std::string fp = row.at("fingerprint").get<std::string>();
            json resp = {{"content", row.at("content")}};
            if (row.contains("reasoning")) resp["reasoning"] = row["reasoning"];
            auto& slot = responses[fp];
            if (slot.is_null()) slot = json::array();
            std::size_t seed = row.contains("seed") ? row["seed"].get<std::size_t>() : 0;
            while (slot.size() <= seed) slot.push_back(nullptr);
            slot[seed] = resp;
        });
        // Fill seed gaps with the nearest earlier response (the first recorded one for leading gaps).
        for (auto& [fp, arr] : responses.items()) {
            json last;
            for (const auto& r : arr)
                if (!r.is_null()) {
                    last = r;
                    break;
                }
            for (auto& r : arr) {
                if (r.is_null()) r = last;
                else last = r;
            }
        }
        return {{"on_unscripted", "error"}, {"responses", responses}};
    }

    ChatResponse complete(const ChatRequest& request) override {
        {
            std::lock_guard lock(mu_);
            ++calls_;
        }
        const json& script = script_;
        const std::string fp = prompt_fingerprint(request);
        const json* entry = nullptr;
        if (auto it = script["responses"].find(fp); it != script["responses"].end()) entry = &*it;
        if (!entry) {
            for (const auto& rule : script["rules"]) {
                bool all = true;
                for (const auto& m : rule.at("match")) {
                    auto needle = m.get<std::string>();
                    if (request.user.find(needle) == std::string::npos &&
                        request.system.find(needle) == std::string::npos &&
                        (!request.continuation_prefix ||
                         request.continuation_prefix->find(needle) == std::string::npos)) {
                        all = false;
                        break;
                    }
                }
                if (all) {
                    entry = &rule.at("responses");
                    break;
                }
            }
        }
        if (!entry) {
            if (script.value("on_unscripted", "error") == "default" && script.contains("default"))
                entry = &script["default"];
            else
                throw UnscriptedPrompt(request_id(request), "no scripted response for fingerprint " + fp);
        }
        const json* resp = entry;
        if (entry->is_array()) {
            if (entry->empty()) throw UnscriptedPrompt(request_id(request), "empty response list for " + fp);
            std::size_t i = static_cast<std::size_t>(std::max(0, request.seed.value_or(0)));
            resp = &(*entry)[std::min(i, entry->size() - 1)];
        }
        ChatResponse out;
        if (resp->is_string()) {
            out.content = resp->get<std::string>();
        } else {
            out.content = resp->value("content", "");
            if (resp->contains("reasoning")) out.reasoning = (*resp)["reasoning"].get<std::string>();
        }
        out.raw = *resp;
        out.request_id = request_id(request);
        return out;
    }

    bool native_thinking() const override { return script_.value("native_thinking", false); }
    std::string describe() const override { return "mock"; }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    void validate() {
        if (!script_.is_object()) throw InputError("mock script must be a JSON object");
        if (!script_.contains("responses")) script_["responses"] = json::object();
        if (!script_.contains("rules")) script_["rules"] = json::array();
        if (!script_["responses"].is_object()) throw InputError("mock script: responses must be an object");
        if (!script_["rules"].is_array()) throw InputError("mock script: rules must be an array");
        auto policy = script_.value("on_unscripted", "error");
        if (policy != "error" && policy != "default")
            throw InputError("mock script: on_unscripted must be error or default");
    }

    json script_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

}  // namespace mtaudit
