#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bioenv/errors.hpp"

namespace bioenv {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One 1 Hz reading of the five fused channels.
struct SensorSample {
    std::string subject_id;
    std::int64_t timestamp_s = 0;
    double heart_rate_bpm = 0.0;
    double gsr_us = 0.0;
    double temperature_c = 0.0;
    double light_lux = 0.0;
    double sound_db = 0.0;

    bool all_finite() const {
        return std::isfinite(heart_rate_bpm) && std::isfinite(gsr_us) &&
               std::isfinite(temperature_c) && std::isfinite(light_lux) &&
               std::isfinite(sound_db);
    }
};

/// Risk verdict classes, ordered low to high. The ordering is total and is
/// used everywhere ties must break toward higher risk.
enum class RiskLabel : int {
    RunAsUsual = 0,
    ShowWarning = 1,
    LimitAccess = 2,
    InformBackupPerson = 3,
};

inline constexpr int kNumRiskLabels = 4;

inline constexpr std::array<std::string_view, kNumRiskLabels> kRiskLabelNames = {
    "Run as usual",
    "Show warning",
    "Limit access",
    "Inform backup person",
};

inline std::string_view to_string(RiskLabel label) {
    return kRiskLabelNames[static_cast<int>(label)];
}

inline RiskLabel risk_label_from_string(std::string_view name) {
    for (int i = 0; i < kNumRiskLabels; ++i) {
        if (kRiskLabelNames[i] == name) return static_cast<RiskLabel>(i);
    }
    throw ValidationError("unknown risk label: " + std::string(name));
}

/// One scoring band: applies to inputs in [previous upper bound, upper_bound).
/// The final band must be open-ended (upper_bound = +inf).
struct ScoreBand {
    double upper_bound;
    double score;
};

/// Environmental scoring tables plus the stress / overall-risk weights and
/// the label thresholds. Values default to the published tables but are plain
/// data so deployments can retune without a rebuild.
struct ScoringConfig {
    std::vector<ScoreBand> temp_bands;
    std::vector<ScoreBand> sound_bands;
    std::vector<ScoreBand> light_bands;
    double w_hr = 0.7;
    double w_gsr = 0.3;
    double w_stress = 0.7;
    double w_cognitive_complement = 0.3;
    std::array<double, 3> label_thresholds = {0.25, 0.50, 0.75};

    static ScoringConfig defaults() {
        constexpr double inf = std::numeric_limits<double>::infinity();
        ScoringConfig cfg;
        cfg.temp_bands = {{18.0, 0.3}, {20.0, 0.6}, {24.0, 1.0},
                          {26.0, 0.8}, {28.0, 0.5}, {inf, 0.2}};
        cfg.sound_bands = {{30.0, 1.0}, {50.0, 0.9}, {60.0, 0.7},
                           {75.0, 0.4}, {inf, 0.2}};
        cfg.light_bands = {{500.0, 0.2}, {2000.0, 0.4}, {10000.0, 1.0},
                           {20000.0, 0.7}, {inf, 0.3}};
        return cfg;
    }

    void validate() const {
        auto check_bands = [](const std::vector<ScoreBand>& bands, const char* name) {
            if (bands.empty()) throw ValidationError(std::string(name) + ": no bands");
            double prev = -std::numeric_limits<double>::infinity();
            for (const ScoreBand& b : bands) {
                if (!(b.upper_bound > prev))
                    throw ValidationError(std::string(name) + ": band bounds not strictly increasing");
                if (!(b.score >= 0.0 && b.score <= 1.0))
                    throw ValidationError(std::string(name) + ": band score outside [0,1]");
                prev = b.upper_bound;
            }
            if (bands.back().upper_bound != std::numeric_limits<double>::infinity())
                throw ValidationError(std::string(name) + ": last band must be open-ended");
        };
        check_bands(temp_bands, "temp_bands");
        check_bands(sound_bands, "sound_bands");
        check_bands(light_bands, "light_bands");
        if (std::abs(w_hr + w_gsr - 1.0) > 1e-12)
            throw ValidationError("w_hr + w_gsr must equal 1");
        if (std::abs(w_stress + w_cognitive_complement - 1.0) > 1e-12)
            throw ValidationError("w_stress + w_cognitive_complement must equal 1");
        double prev = 0.0;
        for (double t : label_thresholds) {
            if (!(t > prev && t < 1.0))
                throw ValidationError("label_thresholds must be strictly increasing inside (0,1)");
            prev = t;
        }
    }
};

/// Per-window component scores plus the assigned label.
struct RiskBreakdown {
    double temp_score = 0.0;
    double sound_score = 0.0;
    double light_score = 0.0;
    double cognitive_score = 0.0;
    double stress_score = 0.0;
    double overall_score = 0.0;
    RiskLabel label = RiskLabel::RunAsUsual;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

inline double band_score(double x, const std::vector<ScoreBand>& bands) {
    // Bands are lower-inclusive, upper-exclusive; the last is open-ended.
    for (const ScoreBand& b : bands) {
        if (x < b.upper_bound) return b.score;
    }
    return bands.back().score;
}

inline void require_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0))
        throw ValidationError(std::string(what) + " must be in [0,1]");
}

} // namespace detail

inline double score_temperature(double celsius, const ScoringConfig& cfg) {
    if (!std::isfinite(celsius)) throw ValidationError("temperature must be finite");
    return detail::band_score(celsius, cfg.temp_bands);
}

inline double score_sound(double db, const ScoringConfig& cfg) {
    if (!std::isfinite(db) || db < 0.0)
        throw ValidationError("sound level must be finite and >= 0 dB");
    return detail::band_score(db, cfg.sound_bands);
}

inline double score_light(double lux, const ScoringConfig& cfg) {
    if (!std::isfinite(lux) || lux < 0.0)
        throw ValidationError("illuminance must be finite and >= 0 lux");
    return detail::band_score(lux, cfg.light_bands);
}

/// Mean of the three environmental scores.
inline double cognitive_score(double temp_score, double sound_score, double light_score) {
    detail::require_unit(temp_score, "temp_score");
    detail::require_unit(sound_score, "sound_score");
    detail::require_unit(light_score, "light_score");
    return (temp_score + sound_score + light_score) / 3.0;
}

/// Weighted arousal: HR at 70%, GSR at 30% (inputs already min-max normalized
/// per subject).
inline double stress_score(double hr_norm, double gsr_norm, const ScoringConfig& cfg) {
    detail::require_unit(hr_norm, "hr_norm");
    detail::require_unit(gsr_norm, "gsr_norm");
    return cfg.w_hr * hr_norm + cfg.w_gsr * gsr_norm;
}

/// overall = w_stress * stress + w_cognitive_complement * (1 - cognitive).
inline double overall_score(double stress, double cognitive, const ScoringConfig& cfg) {
    detail::require_unit(stress, "stress");
    detail::require_unit(cognitive, "cognitive");
    const double v = cfg.w_stress * stress + cfg.w_cognitive_complement * (1.0 - cognitive);
    return std::clamp(v, 0.0, 1.0);
}

/// Threshold intervals are lower-inclusive, upper-exclusive; the top interval
/// includes 1.0.
inline RiskLabel assign_label(double overall, const ScoringConfig& cfg) {
    detail::require_unit(overall, "overall");
    int idx = 0;
    for (double t : cfg.label_thresholds) {
        if (overall >= t) ++idx;
    }
    return static_cast<RiskLabel>(idx);
}

/// Scores every sample of a window, averages the per-sample components, and
/// assigns the label from the window-mean overall score.
inline RiskBreakdown assess_window(std::span<const SensorSample> raw_samples,
                                   std::span<const double> norm_hr,
                                   std::span<const double> norm_gsr,
                                   const ScoringConfig& cfg) {
    const std::size_t n = raw_samples.size();
    if (n == 0) throw ValidationError("assess_window: empty window");
    if (norm_hr.size() != n || norm_gsr.size() != n)
        throw ValidationError("assess_window: sample and normalization lists differ in length");

    RiskBreakdown out;
    for (std::size_t i = 0; i < n; ++i) {
        const SensorSample& s = raw_samples[i];
        const double t = score_temperature(s.temperature_c, cfg);
        const double snd = score_sound(s.sound_db, cfg);
        const double l = score_light(s.light_lux, cfg);
        const double cog = cognitive_score(t, snd, l);
        const double str = stress_score(norm_hr[i], norm_gsr[i], cfg);
        out.temp_score += t;
        out.sound_score += snd;
        out.light_score += l;
        out.cognitive_score += cog;
        out.stress_score += str;
        out.overall_score += overall_score(str, cog, cfg);
    }
    const double count = static_cast<double>(n);
    out.temp_score /= count;
    out.sound_score /= count;
    out.light_score /= count;
    out.cognitive_score /= count;
    out.stress_score /= count;
    out.overall_score /= count;
    out.label = assign_label(out.overall_score, cfg);
    return out;
}

} // namespace bioenv
