#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "bioenv/errors.hpp"
#include "bioenv/json_codec.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/rng.hpp"

namespace bioenv {

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

/// One scenario phase: per-feature target means and AR(1) innovation scales.
/// Feature order is the canonical hr/gsr/temp/lux/sound.
struct PhaseSpec {
    std::string name;
    double duration_s = 0.0;
    std::array<double, kNumFeatures> target{};
    std::array<double, kNumFeatures> noise_scale{};
};

/// A full generator program: phases played in order with 10 s linear ramps
/// at the boundaries, a per-subject baseline offset, AR(1) noise with
/// persistence phi, and hard plausibility clips per feature.
struct Scenario {
    std::vector<PhaseSpec> phases;
    double phi = 0.9;
    double ramp_s = 10.0;
    std::array<double, kNumFeatures> baseline_offset{};
    std::array<std::pair<double, double>, kNumFeatures> clip = default_clip();
    std::uint64_t seed = 1;

    static std::array<std::pair<double, double>, kNumFeatures> default_clip() {
        return {{{40.0, 180.0},     // heart rate, bpm
                 {0.1, 20.0},       // GSR, uS
                 {10.0, 40.0},      // temperature, C
                 {0.0, 120000.0},   // illuminance, lux
                 {20.0, 110.0}}};   // sound, dB
    }

    double total_duration_s() const {
        double total = 0.0;
        for (const PhaseSpec& p : phases) total += p.duration_s;
        return total;
    }

    void validate() const {
        if (phases.empty()) throw ValidationError("scenario: no phases");
        for (const PhaseSpec& p : phases) {
            if (p.duration_s <= 0.0)
                throw ValidationError("scenario: phase durations must be positive");
            for (int f = 0; f < kNumFeatures; ++f) {
                if (p.target[f] < clip[f].first || p.target[f] > clip[f].second)
                    throw ValidationError("scenario: phase '" + p.name +
                                          "' target outside the clip range for " +
                                          std::string(kFeatureNames[f]));
                if (p.noise_scale[f] < 0.0)
                    throw ValidationError("scenario: negative noise scale");
            }
        }
        if (!(phi >= 0.0 && phi < 1.0))
            throw ValidationError("scenario: phi must be in [0,1)");
        if (ramp_s < 0.0) throw ValidationError("scenario: ramp_s must be >= 0");
    }
};

// --- builtin phase palette ---------------------------------------------------

namespace detail {

inline PhaseSpec make_phase(std::string name, double duration_s,
                            std::array<double, kNumFeatures> target) {
    PhaseSpec p;
    p.name = std::move(name);
    p.duration_s = duration_s;
    p.target = target;
    p.noise_scale = {0.5, 0.08, 0.12, 150.0, 1.2};
    return p;
}

inline PhaseSpec palette_phase(std::string_view name, double duration_s) {
    if (name == "calm") return make_phase("calm", duration_s, {70.0, 2.0, 22.0, 5000.0, 40.0});
    if (name == "mild") return make_phase("mild", duration_s, {82.0, 4.0, 25.0, 1200.0, 55.0});
    if (name == "elevated")
        return make_phase("elevated", duration_s, {92.0, 6.0, 27.0, 700.0, 68.0});
    if (name == "stress") return make_phase("stress", duration_s, {100.0, 8.0, 29.0, 15000.0, 80.0});
    throw ValidationError("unknown phase name: " + std::string(name));
}

} // namespace detail

/// Builtin scenarios by name. "two-phase" is the default streaming program:
/// a relaxed initialization phase followed by a sustained stress event.
inline Scenario builtin_scenario(std::string_view name, std::uint64_t seed = 1) {
    Scenario sc;
    sc.seed = seed;
    if (name == "two-phase") {
        sc.phases = {detail::palette_phase("calm", 120.0), detail::palette_phase("stress", 120.0)};
    } else if (name == "four-phase") {
        sc.phases = {detail::palette_phase("calm", 90.0), detail::palette_phase("mild", 90.0),
                     detail::palette_phase("elevated", 90.0), detail::palette_phase("stress", 90.0)};
    } else if (name == "calm") {
        sc.phases = {detail::palette_phase("calm", 240.0)};
    } else {
        throw ValidationError("unknown builtin scenario: " + std::string(name));
    }
    return sc;
}

// --- scenario JSON ------------------------------------------------------------

inline Json to_json(const Scenario& sc) {
    Json phases = Json::array();
    for (const PhaseSpec& p : sc.phases) {
        Json target, noise;
        for (int f = 0; f < kNumFeatures; ++f) {
            target[std::string(kFeatureNames[f])] = p.target[f];
            noise[std::string(kFeatureNames[f])] = p.noise_scale[f];
        }
        phases.push_back(Json{{"name", p.name},
                              {"duration_s", p.duration_s},
                              {"target", target},
                              {"noise_scale", noise}});
    }
    Json clip, offset;
    for (int f = 0; f < kNumFeatures; ++f) {
        clip[std::string(kFeatureNames[f])] = Json::array({sc.clip[f].first, sc.clip[f].second});
        offset[std::string(kFeatureNames[f])] = sc.baseline_offset[f];
    }
    return Json{{"phases", phases}, {"phi", sc.phi},     {"ramp_s", sc.ramp_s},
                {"baseline_offset", offset}, {"clip", clip}, {"seed", sc.seed}};
}

inline Scenario scenario_from_json(const Json& j) {
    detail::reject_unknown_keys(
        j, {"phases", "phi", "ramp_s", "baseline_offset", "clip", "seed"}, "scenario");
    Scenario sc;
    auto read_features = [](const Json& obj, const char* context) {
        std::array<double, kNumFeatures> out{};
        for (int f = 0; f < kNumFeatures; ++f) {
            const std::string key(kFeatureNames[f]);
            if (!obj.contains(key))
                throw ValidationError(std::string(context) + ": missing feature '" + key + "'");
            out[f] = obj.at(key).get<double>();
        }
        return out;
    };
    for (const Json& pj : j.at("phases")) {
        detail::reject_unknown_keys(pj, {"name", "duration_s", "target", "noise_scale"},
                                    "scenario.phase");
        PhaseSpec p;
        p.name = pj.value("name", "");
        p.duration_s = pj.at("duration_s").get<double>();
        p.target = read_features(pj.at("target"), "scenario.phase.target");
        if (pj.contains("noise_scale"))
            p.noise_scale = read_features(pj.at("noise_scale"), "scenario.phase.noise_scale");
        sc.phases.push_back(std::move(p));
    }
    detail::assign_if(j, "phi", sc.phi);
    detail::assign_if(j, "ramp_s", sc.ramp_s);
    detail::assign_if(j, "seed", sc.seed);
    if (j.contains("baseline_offset")) {
        const auto off = read_features(j.at("baseline_offset"), "scenario.baseline_offset");
        sc.baseline_offset = off;
    }
    if (j.contains("clip")) {
        for (int f = 0; f < kNumFeatures; ++f) {
            const std::string key(kFeatureNames[f]);
            if (!j.at("clip").contains(key)) continue;
            const auto pair = j.at("clip").at(key).get<std::vector<double>>();
            if (pair.size() != 2) throw ValidationError("scenario.clip: expected [lo, hi]");
            sc.clip[f] = {pair[0], pair[1]};
        }
    }
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& builtin_or_path, std::uint64_t seed) {
    if (builtin_or_path == "two-phase" || builtin_or_path == "four-phase" ||
        builtin_or_path == "calm")
        return builtin_scenario(builtin_or_path, seed);
    std::ifstream in(builtin_or_path);
    if (!in) throw IoError("scenario file not found (and not a builtin name): " + builtin_or_path);
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw ValidationError("scenario file is not valid JSON: " + std::string(e.what()));
    }
    Scenario sc = scenario_from_json(j);
    sc.seed = seed;
    return sc;
}

// ---------------------------------------------------------------------------
// Sample generation
// ---------------------------------------------------------------------------

/// Sequential 1 Hz sample source: phase target (linearly ramped across phase
/// boundaries) + baseline offset + AR(1) noise, clipped to plausible ranges.
/// Deterministic given the scenario seed.
class SampleGenerator {
public:
    explicit SampleGenerator(Scenario scenario)
        : scenario_(std::move(scenario)), rng_(Rng(scenario_.seed).fork(0xa41)) {
        scenario_.validate();
        total_s_ = scenario_.total_duration_s();
    }

    std::int64_t ticks_total() const { return static_cast<std::int64_t>(total_s_); }
    std::int64_t ticks_emitted() const { return t_; }
    const Scenario& scenario() const { return scenario_; }

    bool done() const { return t_ >= ticks_total(); }

    SensorSample next(const std::string& subject_id) {
        if (done()) throw ValidationError("sample generator ran past the scenario duration");
        SensorSample s;
        s.subject_id = subject_id;
        s.timestamp_s = t_;
        const double time = static_cast<double>(t_);
        for (int f = 0; f < kNumFeatures; ++f) {
            noise_state_[f] = scenario_.phi * noise_state_[f] +
                              rng_.normal() * current_noise_scale(time, f);
            double v = target_at(time, f) + scenario_.baseline_offset[f] + noise_state_[f];
            v = std::clamp(v, scenario_.clip[f].first, scenario_.clip[f].second);
            set_feature_value(s, f, v);
        }
        ++t_;
        return s;
    }

private:
    struct PhasePosition {
        std::size_t index;
        double time_in_phase;
    };

    PhasePosition locate(double time) const {
        double begin = 0.0;
        for (std::size_t i = 0; i < scenario_.phases.size(); ++i) {
            const double end = begin + scenario_.phases[i].duration_s;
            if (time < end || i + 1 == scenario_.phases.size())
                return {i, time - begin};
            begin = end;
        }
        return {scenario_.phases.size() - 1, time};
    }

    double target_at(double time, int f) const {
        const PhasePosition pos = locate(time);
        const PhaseSpec& cur = scenario_.phases[pos.index];
        if (pos.index == 0 || scenario_.ramp_s <= 0.0 || pos.time_in_phase >= scenario_.ramp_s)
            return cur.target[f];
        const PhaseSpec& prev = scenario_.phases[pos.index - 1];
        const double frac = pos.time_in_phase / scenario_.ramp_s;
        return prev.target[f] + (cur.target[f] - prev.target[f]) * frac;
    }

    double current_noise_scale(double time, int f) const {
        return scenario_.phases[locate(time).index].noise_scale[f];
    }

    Scenario scenario_;
    Rng rng_;
    std::array<double, kNumFeatures> noise_state_{};
    double total_s_ = 0.0;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct CorpusSpec {
    int n_subjects = 14;
    double minutes_per_subject = 43.0;
    std::uint64_t seed = 42;
};

namespace detail {

/// Per-subject program for the default corpus: the full phase cycle with
/// subject-specific duration jitter, repeated to fill the session.
inline Scenario corpus_scenario_for_subject(const CorpusSpec& spec, int subject_index) {
    static constexpr std::array<std::pair<std::string_view, double>, 10> kCycle = {{
        {"calm", 420.0}, {"mild", 300.0}, {"calm", 180.0}, {"elevated", 300.0},
        {"stress", 240.0}, {"calm", 240.0}, {"mild", 240.0}, {"stress", 180.0},
        {"elevated", 240.0}, {"calm", 240.0},
    }};
    Rng rng = Rng(spec.seed).fork(0x5b1ec7 + static_cast<std::uint64_t>(subject_index));

    Scenario sc;
    sc.seed = rng.next_u64();
    // Subject individuality the z-score cannot fully undo: environmental
    // offsets shift which scoring band a phase lands in.
    sc.baseline_offset = {rng.uniform(-8.0, 8.0), rng.uniform(-0.8, 0.8),
                          rng.uniform(-1.6, 1.6), rng.uniform(-600.0, 600.0),
                          rng.uniform(-4.0, 4.0)};
    const double total_target = spec.minutes_per_subject * 60.0;
    double total = 0.0;
    std::size_t cycle_pos = 0;
    while (total < total_target) {
        const auto& [name, base_duration] = kCycle[cycle_pos % kCycle.size()];
        PhaseSpec phase = palette_phase(name, base_duration * rng.uniform(0.9, 1.1));
        phase.duration_s = std::min(phase.duration_s, total_target - total + 1.0);
        total += phase.duration_s;
        sc.phases.push_back(std::move(phase));
        ++cycle_pos;
    }
    return sc;
}

inline std::string subject_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%02d", index + 1);
    return std::string(buf);
}

} // namespace detail

/// In-memory corpus: one series per subject with distinct baselines and a
/// calm/stress phase mix. Deterministic given the seed.
inline std::vector<SubjectSeries> generate_corpus_series(const CorpusSpec& spec) {
    if (spec.n_subjects < 1) throw ValidationError("corpus: n_subjects must be >= 1");
    if (spec.minutes_per_subject <= 0.0)
        throw ValidationError("corpus: minutes_per_subject must be > 0");
    const auto samples_per_subject =
        static_cast<std::int64_t>(std::llround(spec.minutes_per_subject * 60.0));
    std::vector<SubjectSeries> out;
    for (int s = 0; s < spec.n_subjects; ++s) {
        SampleGenerator gen(detail::corpus_scenario_for_subject(spec, s));
        SubjectSeries series;
        series.subject_id = detail::subject_name(s);
        series.samples.reserve(static_cast<std::size_t>(samples_per_subject));
        for (std::int64_t t = 0; t < samples_per_subject; ++t)
            series.samples.push_back(gen.next(series.subject_id));
        series.stats = compute_stats(series);
        out.push_back(std::move(series));
    }
    return out;
}

inline std::string format_sample_csv_row(const SensorSample& s) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f",
                  s.subject_id.c_str(), static_cast<long long>(s.timestamp_s),
                  s.heart_rate_bpm, s.gsr_us, s.temperature_c, s.light_lux, s.sound_db);
    return std::string(buf);
}

inline constexpr std::string_view kCorpusCsvHeader =
    "subject_id,timestamp_s,heart_rate_bpm,gsr_us,temperature_c,light_lux,sound_db";

/// Writes the corpus in the pipeline CSV format. Byte-identical for a fixed
/// seed.
inline void generate_corpus(const std::filesystem::path& out_csv, const CorpusSpec& spec) {
    const std::vector<SubjectSeries> series = generate_corpus_series(spec);
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write corpus CSV: " + out_csv.string());
    out << kCorpusCsvHeader << '\n';
    for (const SubjectSeries& s : series)
        for (const SensorSample& sample : s.samples) out << format_sample_csv_row(sample) << '\n';
    if (!out) throw IoError("write failed: " + out_csv.string());
}

} // namespace bioenv
