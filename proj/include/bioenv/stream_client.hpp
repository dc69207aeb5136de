#pragma once

#include <chrono>
#include <ostream>
#include <string>
#include <thread>

#include <httplib.h>

#include "bioenv/simulator.hpp"

namespace bioenv {

inline Json sample_to_json(const SensorSample& s) {
    return Json{{"subject_id", s.subject_id},
                {"timestamp_s", s.timestamp_s},
                {"heart_rate_bpm", s.heart_rate_bpm},
                {"gsr_us", s.gsr_us},
                {"temperature_c", s.temperature_c},
                {"light_lux", s.light_lux},
                {"sound_db", s.sound_db}};
}

struct StreamOptions {
    double rate_hz = 1.0;
    std::string subject_id = "sim";
    double duration_s = -1.0;          // <= 0: play the whole scenario
    int max_consecutive_failures = 5;  // abort threshold for a dead gateway
    std::ostream* capture_csv = nullptr;
    bool quiet = true;
    std::ostream* log = nullptr;
};

struct StreamReport {
    std::size_t sent = 0;
    std::size_t acked = 0;
    std::size_t failed = 0;
    double max_drift_ms = 0.0;
    bool completed = false;
};

/// Streams scenario samples to the gateway's /ingest endpoint on a fixed-rate
/// clock: tick n fires at start + n/rate, so scheduling error never
/// accumulates. Sample content always follows the 1 Hz scenario grid; rate_hz
/// only paces transmission.
inline StreamReport stream_to_gateway(const std::string& gateway_url, const Scenario& scenario,
                                      const StreamOptions& options = {}) {
    if (options.rate_hz <= 0.0) throw ValidationError("stream: rate_hz must be > 0");
    SampleGenerator gen(scenario);
    std::int64_t ticks = gen.ticks_total();
    if (options.duration_s > 0.0)
        ticks = std::min<std::int64_t>(ticks, static_cast<std::int64_t>(options.duration_s));

    httplib::Client client(gateway_url);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(5, 0);

    StreamReport report;
    if (options.capture_csv) *options.capture_csv << kCorpusCsvHeader << '\n';

    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto period = std::chrono::duration<double>(1.0 / options.rate_hz);
    int consecutive_failures = 0;
    for (std::int64_t n = 0; n < ticks; ++n) {
        const auto ideal = start + std::chrono::duration_cast<clock::duration>(period * n);
        std::this_thread::sleep_until(ideal);
        const double drift_ms =
            std::chrono::duration<double, std::milli>(clock::now() - ideal).count();
        report.max_drift_ms = std::max(report.max_drift_ms, drift_ms);

        const SensorSample sample = gen.next(options.subject_id);
        if (options.capture_csv) *options.capture_csv << format_sample_csv_row(sample) << '\n';

        ++report.sent;
        const auto res = client.Post("/ingest", sample_to_json(sample).dump(), "application/json");
        if (res && res->status < 300) {
            ++report.acked;
            consecutive_failures = 0;
        } else {
            ++report.failed;
            if (options.log)
                *options.log << "ingest failed at tick " << n
                             << (res ? " (status " + std::to_string(res->status) + ")"
                                     : " (no connection)")
                             << '\n';
            if (++consecutive_failures >= options.max_consecutive_failures) {
                return report; // completed stays false
            }
        }
    }
    report.completed = true;
    return report;
}

} // namespace bioenv
