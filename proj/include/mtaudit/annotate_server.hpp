#pragma once

// HTTP JSON API over the annotation task queue.
//
//   GET  /tasks/next?annotator=ID&phase=1|2  -> {"status":"task","task":{...}} | {"status":"done"}
//   POST /records                            -> {"status":"stored"} | 422 {"error": rule}
//   GET  /summary                            -> validation statistics
//   GET  /export                             -> JSONL dump of live records

#include <string>

#include <httplib.h>

#include "mtaudit/annotate.hpp"

namespace mtaudit {

class AnnotationServer {
public:
    /// Compacts the journal after this many appends.
    static constexpr std::size_t kCompactEvery = 256;

    AnnotationServer(TaskQueue& queue, RecordStore& store) : queue_(queue), store_(store) { install(); }

    httplib::Server& http() { return server_; }

    /// Binds and serves until stop(); returns false if the port cannot be bound.
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }

    /// Binds to an ephemeral port for tests; returns the port or -1.
    int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void install() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});

        server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Get("/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("annotator") || !req.has_param("phase"))
                return send_json(res, 400, {{"error", "annotator and phase are required"}});
            std::string phase_text = req.get_param_value("phase");
            if (phase_text != "1" && phase_text != "2") return send_json(res, 400, {{"error", "phase must be 1 or 2"}});
            try {
                auto task = queue_.next_task(req.get_param_value("annotator"), phase_text == "1" ? 1 : 2);
                if (!task) return send_json(res, 200, {{"status", "done"}});
                send_json(res, 200, {{"status", "task"}, {"task", *task}});
            } catch (const UnknownAnnotator& e) {
                send_json(res, 403, {{"error", e.what()}});
            }
        });

        server_.Post("/records", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error&) {
                return send_json(res, 400, {{"error", "body is not valid JSON"}});
            }
            try {
                queue_.submit(record_from_json(body));
            } catch (const RecordRejected& e) {
                return send_json(res, 422, {{"error", e.what()}});
            } catch (const UnknownAnnotator& e) {
                return send_json(res, 403, {{"error", e.what()}});
            }
            if (store_.appended_since_compaction() >= kCompactEvery) store_.compact();
            send_json(res, 200, {{"status", "stored"}});
        });

        server_.Get("/summary", [this](const httplib::Request&, httplib::Response& res) {
            auto summary = summarize_validation(store_.records(), queue_.issues(), queue_.samples());
            send_json(res, 200, to_json(summary));
        });

        server_.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
            std::string out;
            for (const auto& r : store_.records()) out += to_json(r).dump() + "\n";
            res.status = 200;
            res.set_content(out, "application/x-ndjson");
        });
    }

    TaskQueue& queue_;
    RecordStore& store_;
    httplib::Server server_;
};

}  // namespace mtaudit
