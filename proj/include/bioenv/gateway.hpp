#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "bioenv/errors.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/rng.hpp"
#include "bioenv/session.hpp"

namespace bioenv {

/// Stateful telemetry aggregator. Buffers 1 Hz samples until the session
/// threshold, forwards the complete session to the inference engine exactly
/// once, and exposes live status. Buffer mutations are serialized under one
/// mutex; the dispatch happens on a worker thread so a slow model never
/// blocks ingest acknowledgments.
class Gateway {
public:
    struct Options {
        std::string inference_url = "http://localhost:5000";
        int threshold = 180; // samples per session; must cover >= 1 window
        bool single_session = false;
        int retry_attempts = 3;
        double retry_delay_s = 1.0;
    };

    enum class State { Filling, Forwarding, Complete };

    static std::string_view state_name(State s) {
        switch (s) {
            case State::Filling: return "Filling";
            case State::Forwarding: return "Forwarding";
            case State::Complete: return "Complete";
        }
        return "?";
    }

    explicit Gateway(Options options) : options_(std::move(options)) {
        if (options_.threshold < kWindowSteps)
            throw ValidationError("gateway threshold must be >= the window size (" +
                                  std::to_string(kWindowSteps) + "); got " +
                                  std::to_string(options_.threshold));
        if (options_.retry_attempts < 1)
            throw ValidationError("gateway retry_attempts must be >= 1");
        token_ = Rng::splitmix64(static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count()));
        session_id_ = make_session_id();
        install_routes();
        worker_ = std::thread([this] { dispatch_loop(); });
    }

    void start(const std::string& host, int port) {
        if (!server_.bind_to_port(host, port))
            throw IoError("gateway cannot bind " + host + ":" + std::to_string(port) +
                          " (port in use?)");
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Same as start() but on an ephemeral port; returns the bound port.
    int start_any(const std::string& host) {
        const int port = server_.bind_to_any_port(host);
        if (port <= 0) throw IoError("gateway cannot bind an ephemeral port");
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void wait() {
        if (listener_.joinable()) listener_.join();
    }

    void stop() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            shutdown_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
        server_.stop();
        if (listener_.joinable()) listener_.join();
    }

    ~Gateway() { stop(); }

    /// Snapshot consistent with one linearized history.
    Json status_json() {
        std::lock_guard<std::mutex> lock(mutex_);
        Json j;
        j["session_id"] = session_id_;
        j["state"] = std::string(state_name(state_));
        j["buffered"] = buffer_.size();
        j["threshold"] = options_.threshold;
        if (verdict_) j["verdict"] = *verdict_;
        if (!error_.empty()) j["error"] = error_;
        Json history = Json::array();
        for (const Json& h : history_) history.push_back(h);
        j["history"] = std::move(history);
        return j;
    }

private:
    std::string make_session_id() {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "s-%04zu-%08llx", ++session_counter_,
                      static_cast<unsigned long long>(token_ & 0xffffffffULL));
        return std::string(buf);
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(Json{{"error", message}}.dump(), "application/json");
    }

    static SensorSample sample_from_json(const Json& body) {
        if (!body.is_object()) throw ValidationError("ingest body must be a JSON object");
        SensorSample s;
        s.subject_id = body.value("subject_id", "unknown");
        if (body.contains("timestamp_s")) s.timestamp_s = body["timestamp_s"].get<std::int64_t>();
        for (int f = 0; f < kNumFeatures; ++f) {
            const std::string key(kFeatureNames[f]);
            if (!body.contains(key) || !body[key].is_number())
                throw ValidationError("ingest body: '" + key + "' missing or not a number");
            set_feature_value(s, f, body[key].get<double>());
        }
        if (!s.all_finite()) throw ValidationError("ingest body: non-finite feature value");
        return s;
    }

    // --- state machine (callers hold mutex_) --------------------------------

    void archive_locked() {
        if (verdict_ || !error_.empty()) {
            Json record;
            record["session_id"] = session_id_;
            record["samples"] = buffer_.size();
            if (verdict_) record["verdict"] = *verdict_;
            if (!error_.empty()) record["error"] = error_;
            history_.push_back(std::move(record));
            while (history_.size() > kHistoryLimit) history_.pop_front();
        }
        verdict_.reset();
        error_.clear();
    }

    /// Completed session out, pending pre-buffer in.
    void rollover_locked() {
        archive_locked();
        buffer_ = std::move(pending_);
        pending_.clear();
        session_id_ = make_session_id();
        state_ = State::Filling;
        normalize_locked();
    }

    /// If the pre-buffer already holds a full session, trigger its dispatch.
    void normalize_locked() {
        const auto threshold = static_cast<std::size_t>(options_.threshold);
        if (state_ == State::Filling && buffer_.size() >= threshold) {
            if (buffer_.size() > threshold) {
                // Overflow keeps arrival order and precedes anything newer.
                pending_.insert(pending_.begin(), buffer_.begin() + threshold, buffer_.end());
                buffer_.resize(threshold);
            }
            state_ = State::Forwarding;
            dispatch_requested_ = true;
            cv_.notify_all();
        }
    }

    Json ingest_locked(const SensorSample& sample) {
        if (options_.single_session && state_ != State::Filling) {
            // Post-threshold telemetry is acknowledged but ignored.
            return ack_locked();
        }
        if (state_ == State::Complete) rollover_locked();
        if (state_ == State::Filling) {
            buffer_.push_back(sample);
            normalize_locked();
        } else {
            pending_.push_back(sample);
        }
        return ack_locked();
    }

    Json ack_locked() const {
        const std::size_t buffered =
            state_ == State::Filling ? buffer_.size()
                                     : static_cast<std::size_t>(options_.threshold);
        return Json{{"buffered", buffered},
                    {"threshold", options_.threshold},
                    {"state", std::string(state_name(state_))},
                    {"pending_next_session", pending_.size()},
                    {"session_id", session_id_}};
    }

    // --- dispatch worker ------------------------------------------------------

    void dispatch_loop() {
        std::unique_lock<std::mutex> lock(mutex_);
        while (true) {
            cv_.wait(lock, [this] { return dispatch_requested_ || shutdown_; });
            if (shutdown_) return;
            dispatch_requested_ = false;
            const std::vector<SensorSample> session = buffer_;
            const std::string session_id = session_id_;
            lock.unlock();

            Json verdict;
            std::string error;
            forward_session(session, verdict, error);

            lock.lock();
            if (session_id == session_id_ && state_ == State::Forwarding) {
                if (error.empty())
                    verdict_ = std::move(verdict);
                else
                    error_ = std::move(error);
                state_ = State::Complete;
            }
            cv_.notify_all();
        }
    }

    void forward_session(const std::vector<SensorSample>& session, Json& verdict,
                         std::string& error) {
        Json samples = Json::array();
        for (const SensorSample& s : session) {
            Json item;
            for (int f = 0; f < kNumFeatures; ++f)
                item[std::string(kFeatureNames[f])] = feature_value(s, f);
            samples.push_back(std::move(item));
        }
        const std::string body = Json{{"samples", std::move(samples)}}.dump();

        httplib::Client client(options_.inference_url);
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(30, 0);
        for (int attempt = 1; attempt <= options_.retry_attempts; ++attempt) {
            const auto res = client.Post("/predict", body, "application/json");
            if (res && res->status == 200) {
                try {
                    verdict = Json::parse(res->body); // stored verbatim, no re-aggregation
                    return;
                } catch (const Json::parse_error& e) {
                    error = std::string("inference engine returned unparseable JSON: ") + e.what();
                    return;
                }
            }
            if (res && res->status >= 400 && res->status < 500) {
                error = "inference engine rejected the session (status " +
                        std::to_string(res->status) + "): " + res->body;
                return;
            }
            if (attempt < options_.retry_attempts)
                std::this_thread::sleep_for(
                    std::chrono::duration<double>(options_.retry_delay_s));
        }
        error = "inference engine unreachable after " +
                std::to_string(options_.retry_attempts) + " attempts";
    }

    // --- HTTP ----------------------------------------------------------------

    void install_routes() {
        server_.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
            Json body;
            try {
                body = Json::parse(req.body);
            } catch (const Json::parse_error& e) {
                send_error(res, 400, std::string("invalid JSON body: ") + e.what());
                return;
            }
            try {
                const SensorSample sample = sample_from_json(body);
                std::lock_guard<std::mutex> lock(mutex_);
                const Json ack = ingest_locked(sample);
                res.status = 202;
                res.set_content(ack.dump(), "application/json");
            } catch (const ValidationError& e) {
                send_error(res, 400, e.what());
            }
        });

        server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(status_json().dump(), "application/json");
        });

        server_.Post("/reset", [this](const httplib::Request&, httplib::Response& res) {
            std::unique_lock<std::mutex> lock(mutex_);
            // An in-flight dispatch settles before the buffer is cleared.
            cv_.wait(lock, [this] { return state_ != State::Forwarding || shutdown_; });
            archive_locked();
            buffer_.clear();
            pending_.clear();
            state_ = State::Filling;
            session_id_ = make_session_id();
            res.set_content(Json{{"session_id", session_id_},
                                 {"state", std::string(state_name(state_))}}
                                .dump(),
                            "application/json");
        });
    }

    static constexpr std::size_t kHistoryLimit = 16;

    Options options_;
    std::uint64_t token_ = 0;

    std::mutex mutex_;
    std::condition_variable cv_;
    State state_ = State::Filling;
    std::vector<SensorSample> buffer_;
    std::vector<SensorSample> pending_;
    std::optional<Json> verdict_;
    std::string error_;
    std::deque<Json> history_;
    std::string session_id_;
    std::size_t session_counter_ = 0;
    bool dispatch_requested_ = false;
    bool shutdown_ = false;

    httplib::Server server_;
    std::thread listener_;
    std::thread worker_;
};

} // namespace bioenv
