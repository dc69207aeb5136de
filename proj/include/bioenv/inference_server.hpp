#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "bioenv/model_io.hpp"
#include "bioenv/session.hpp"

namespace bioenv {

/// Warm-start model server: the bundle is loaded exactly once, before the
/// listener opens, and never mutated afterwards. Requests standardize
/// against their own samples only, so serving is a pure function of
/// (model file, request body).
class InferenceServer {
public:
    explicit InferenceServer(const std::filesystem::path& model_path) {
        LoadedModel loaded = load_model(model_path); // throws on unreadable/corrupt files
        bundle_ = std::move(loaded.bundle);
        fingerprint_ = std::move(loaded.fingerprint);
        install_routes();
    }

    const std::string& fingerprint() const { return fingerprint_; }
    const ModelBundle& bundle() const { return bundle_; }

    /// Binds and serves on a background thread; returns once the port is
    /// accepting connections. Throws IoError on bind failure.
    void start(const std::string& host, int port) {
        if (!server_.bind_to_port(host, port))
            throw IoError("inference server cannot bind " + host + ":" + std::to_string(port) +
                          " (port in use?)");
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Same as start() but on an ephemeral port; returns the bound port.
    int start_any(const std::string& host) {
        const int port = server_.bind_to_any_port(host);
        if (port <= 0) throw IoError("inference server cannot bind an ephemeral port");
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void wait() {
        if (listener_.joinable()) listener_.join();
    }

    void stop() {
        server_.stop();
        if (listener_.joinable()) listener_.join();
    }

    ~InferenceServer() { stop(); }

private:
    static void send_error(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(Json{{"error", message}}.dump(), "application/json");
    }

    static std::vector<SessionSample> parse_samples(const Json& body) {
        if (!body.contains("samples") || !body["samples"].is_array())
            throw ValidationError("request body must carry a 'samples' array");
        std::vector<SessionSample> samples;
        samples.reserve(body["samples"].size());
        std::size_t index = 0;
        for (const Json& item : body["samples"]) {
            SessionSample s;
            for (int f = 0; f < kNumFeatures; ++f) {
                const std::string key(kFeatureNames[f]);
                if (!item.is_object() || !item.contains(key) || !item[key].is_number())
                    throw ValidationError("sample index " + std::to_string(index) + ": '" + key +
                                          "' missing or not a number");
                s.features[f] = item[key].get<double>();
            }
            samples.push_back(s);
            ++index;
        }
        return samples;
    }

    void install_routes() {
        server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(Json{{"status", "ok"},
                                 {"model_loaded", true},
                                 {"model_fingerprint", fingerprint_}}
                                .dump(),
                            "application/json");
        });

        server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
            Json body;
            try {
                body = Json::parse(req.body);
            } catch (const Json::parse_error& e) {
                send_error(res, 400, std::string("invalid JSON body: ") + e.what());
                return;
            }
            try {
                Aggregation mode = Aggregation::Majority;
                if (body.contains("aggregation"))
                    mode = aggregation_from_string(body["aggregation"].get<std::string>());
                const std::vector<SessionSample> samples = parse_samples(body);
                const SessionVerdict verdict =
                    assess_session(bundle_, fingerprint_, samples, mode);
                res.set_content(verdict_to_json(verdict).dump(), "application/json");
            } catch (const ValidationError& e) {
                send_error(res, 422, e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        });
    }

    ModelBundle bundle_;
    std::string fingerprint_;
    httplib::Server server_;
    std::thread listener_;
};

} // namespace bioenv
