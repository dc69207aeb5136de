#include <gtest/gtest.h>

#include <vector>

#include "bioenv/risk.hpp"
#include "bioenv/rng.hpp"

using namespace bioenv;

// ---------------------------------------------------------------------------
// Independent straight-line re-implementation of the scoring tables, the
// stress weights, the overall-score formula, and the label intervals. Kept
// deliberately dumb: literal if-chains, no shared code with the library.
// ---------------------------------------------------------------------------
namespace oracle {

double temp_score(double c) {
    if (c < 18.0) return 0.3;
    if (c < 20.0) return 0.6;
    if (c < 24.0) return 1.0;
    if (c < 26.0) return 0.8;
    if (c < 28.0) return 0.5;
    return 0.2;
}

double sound_score(double db) {
    if (db < 30.0) return 1.0;
    if (db < 50.0) return 0.9;
    if (db < 60.0) return 0.7;
    if (db < 75.0) return 0.4;
    return 0.2;
}

double light_score(double lux) {
    if (lux < 500.0) return 0.2;
    if (lux < 2000.0) return 0.4;
    if (lux < 10000.0) return 1.0;
    if (lux < 20000.0) return 0.7;
    return 0.3;
}

double cognitive(double t, double s, double l) { return (t + s + l) / 3.0; }

double stress(double hr, double gsr) { return 0.7 * hr + 0.3 * gsr; }

double overall(double stress, double cognitive) {
    return 0.7 * stress + 0.3 * (1.0 - cognitive);
}

int label(double overall) {
    if (overall < 0.25) return 0;
    if (overall < 0.50) return 1;
    if (overall < 0.75) return 2;
    return 3;
}

} // namespace oracle

namespace {

const ScoringConfig kCfg = ScoringConfig::defaults();

SensorSample make_sample(double temp, double sound, double lux) {
    SensorSample s;
    s.heart_rate_bpm = 75.0;
    s.gsr_us = 2.0;
    s.temperature_c = temp;
    s.sound_db = sound;
    s.light_lux = lux;
    return s;
}

} // namespace

TEST(ScoringConfig, DefaultsValidate) {
    EXPECT_NO_THROW(kCfg.validate());
}

TEST(ScoringConfig, RejectsBadConfigs) {
    ScoringConfig bad = ScoringConfig::defaults();
    bad.w_hr = 0.8; // no longer sums to 1 with w_gsr
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = ScoringConfig::defaults();
    bad.temp_bands.back().upper_bound = 100.0; // last band must stay open-ended
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = ScoringConfig::defaults();
    bad.label_thresholds = {0.5, 0.5, 0.75};
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ScoreTemperature, TableValues) {
    EXPECT_DOUBLE_EQ(score_temperature(22.0, kCfg), 1.0);
    EXPECT_DOUBLE_EQ(score_temperature(35.0, kCfg), 0.2);
    // boundary is lower-inclusive
    EXPECT_DOUBLE_EQ(score_temperature(20.0, kCfg), 1.0);
    EXPECT_DOUBLE_EQ(score_temperature(18.0, kCfg), 0.6);
    EXPECT_DOUBLE_EQ(score_temperature(-40.0, kCfg), 0.3);
    EXPECT_THROW(score_temperature(std::nan(""), kCfg), ValidationError);
}

TEST(ScoreSound, TableValues) {
    EXPECT_DOUBLE_EQ(score_sound(25.0, kCfg), 1.0);
    EXPECT_DOUBLE_EQ(score_sound(55.0, kCfg), 0.7);
    EXPECT_DOUBLE_EQ(score_sound(90.0, kCfg), 0.2);
    EXPECT_DOUBLE_EQ(score_sound(75.0, kCfg), 0.2);
    EXPECT_THROW(score_sound(-1.0, kCfg), ValidationError);
    EXPECT_THROW(score_sound(std::numeric_limits<double>::infinity(), kCfg), ValidationError);
}

TEST(ScoreLight, TableValues) {
    EXPECT_DOUBLE_EQ(score_light(5000.0, kCfg), 1.0);
    EXPECT_DOUBLE_EQ(score_light(100.0, kCfg), 0.2);
    EXPECT_DOUBLE_EQ(score_light(25000.0, kCfg), 0.3);
    EXPECT_DOUBLE_EQ(score_light(2000.0, kCfg), 1.0);
    EXPECT_THROW(score_light(-5.0, kCfg), ValidationError);
}

TEST(CognitiveScore, Examples) {
    EXPECT_NEAR(cognitive_score(1.0, 0.9, 1.0), 0.9666666666666667, 1e-15);
    EXPECT_DOUBLE_EQ(cognitive_score(1.0, 1.0, 1.0), 1.0);
    EXPECT_NEAR(cognitive_score(0.2, 0.2, 0.2), 0.2, 1e-15);
    EXPECT_THROW(cognitive_score(1.2, 0.5, 0.5), ValidationError);
}

TEST(StressScore, Examples) {
    EXPECT_DOUBLE_EQ(stress_score(1.0, 1.0, kCfg), 1.0);
    EXPECT_DOUBLE_EQ(stress_score(0.5, 0.5, kCfg), 0.5);
    EXPECT_DOUBLE_EQ(stress_score(1.0, 0.0, kCfg), 0.7);
    EXPECT_THROW(stress_score(-0.1, 0.5, kCfg), ValidationError);
}

TEST(OverallScore, Examples) {
    EXPECT_DOUBLE_EQ(overall_score(0.0, 1.0, kCfg), 0.0);
    EXPECT_DOUBLE_EQ(overall_score(1.0, 0.0, kCfg), 1.0);
    EXPECT_NEAR(overall_score(0.5, 0.9666666666666667, kCfg), 0.36, 1e-12);
    EXPECT_THROW(overall_score(1.5, 0.5, kCfg), ValidationError);
}

TEST(AssignLabel, TableIntervals) {
    EXPECT_EQ(assign_label(0.10, kCfg), RiskLabel::RunAsUsual);
    EXPECT_EQ(assign_label(0.60, kCfg), RiskLabel::LimitAccess);
    // thresholds are lower-inclusive
    EXPECT_EQ(assign_label(0.50, kCfg), RiskLabel::LimitAccess);
    EXPECT_EQ(assign_label(0.25, kCfg), RiskLabel::ShowWarning);
    EXPECT_EQ(assign_label(0.75, kCfg), RiskLabel::InformBackupPerson);
    EXPECT_EQ(assign_label(1.0, kCfg), RiskLabel::InformBackupPerson);
    EXPECT_THROW(assign_label(1.01, kCfg), ValidationError);
}

TEST(RiskLabel, NamesRoundTrip) {
    for (int c = 0; c < kNumRiskLabels; ++c) {
        const auto label = static_cast<RiskLabel>(c);
        EXPECT_EQ(risk_label_from_string(to_string(label)), label);
    }
    EXPECT_THROW(risk_label_from_string("panic"), ValidationError);
}

TEST(AssessWindow, SingleSampleEqualsPipeline) {
    const std::vector<SensorSample> win = {make_sample(22.0, 25.0, 5000.0)};
    const std::vector<double> hr = {0.4};
    const std::vector<double> gsr = {0.6};
    const RiskBreakdown b = assess_window(win, hr, gsr, kCfg);
    const double stress = oracle::stress(0.4, 0.6);
    const double cog = oracle::cognitive(1.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(b.stress_score, stress);
    EXPECT_DOUBLE_EQ(b.cognitive_score, cog);
    EXPECT_DOUBLE_EQ(b.overall_score, oracle::overall(stress, cog));
}

TEST(AssessWindow, ConstantCalmWindow) {
    const std::vector<SensorSample> win(30, make_sample(22.0, 25.0, 5000.0));
    const std::vector<double> zeros(30, 0.0);
    const RiskBreakdown b = assess_window(win, zeros, zeros, kCfg);
    EXPECT_DOUBLE_EQ(b.overall_score, 0.0);
    EXPECT_EQ(b.label, RiskLabel::RunAsUsual);
}

TEST(AssessWindow, ConstantWorstCaseWindow) {
    const std::vector<SensorSample> win(30, make_sample(35.0, 90.0, 100.0));
    const std::vector<double> ones(30, 1.0);
    const RiskBreakdown b = assess_window(win, ones, ones, kCfg);
    EXPECT_NEAR(b.overall_score, 0.94, 1e-12);
    EXPECT_EQ(b.label, RiskLabel::InformBackupPerson);
}

TEST(AssessWindow, RejectsBadInput) {
    EXPECT_THROW(assess_window({}, {}, {}, kCfg), ValidationError);
    const std::vector<SensorSample> win(3, make_sample(22.0, 25.0, 5000.0));
    const std::vector<double> two(2, 0.0);
    const std::vector<double> three(3, 0.0);
    EXPECT_THROW(assess_window(win, two, three, kCfg), ValidationError);
}

TEST(AssessWindow, BreakdownInvariants) {
    Rng rng(99);
    for (int it = 0; it < 200; ++it) {
        const std::size_t w = 1 + rng.below(40);
        std::vector<SensorSample> win;
        std::vector<double> hr, gsr;
        for (std::size_t i = 0; i < w; ++i) {
            win.push_back(make_sample(rng.uniform(-10, 45), rng.uniform(0, 110),
                                      rng.uniform(0, 40000)));
            hr.push_back(rng.uniform());
            gsr.push_back(rng.uniform());
        }
        const RiskBreakdown b = assess_window(win, hr, gsr, kCfg);
        EXPECT_NEAR(b.cognitive_score, (b.temp_score + b.sound_score + b.light_score) / 3.0, 1e-12);
        EXPECT_NEAR(b.overall_score, 0.7 * b.stress_score + 0.3 * (1.0 - b.cognitive_score), 1e-12);
        // window label == label of the mean per-sample overall, by brute force
        double mean_overall = 0.0;
        for (std::size_t i = 0; i < w; ++i) {
            const double t = oracle::temp_score(win[i].temperature_c);
            const double s = oracle::sound_score(win[i].sound_db);
            const double l = oracle::light_score(win[i].light_lux);
            mean_overall += oracle::overall(oracle::stress(hr[i], gsr[i]), oracle::cognitive(t, s, l));
        }
        mean_overall /= static_cast<double>(w);
        EXPECT_EQ(static_cast<int>(b.label), oracle::label(mean_overall));
    }
}

// Every finite input maps to exactly one band; scores come from the table's
// value set (the tables are non-monotone by design, so only membership is
// checked).
TEST(Bands, EveryInputMapsToOneTableScore) {
    Rng rng(7);
    const std::vector<double> temp_scores = {0.3, 0.6, 1.0, 0.8, 0.5, 0.2};
    const std::vector<double> sound_scores = {1.0, 0.9, 0.7, 0.4, 0.2};
    const std::vector<double> light_scores = {0.2, 0.4, 1.0, 0.7, 0.3};
    auto contains = [](const std::vector<double>& xs, double v) {
        return std::find(xs.begin(), xs.end(), v) != xs.end();
    };
    for (int i = 0; i < 5000; ++i) {
        EXPECT_TRUE(contains(temp_scores, score_temperature(rng.uniform(-50, 80), kCfg)));
        EXPECT_TRUE(contains(sound_scores, score_sound(rng.uniform(0, 200), kCfg)));
        EXPECT_TRUE(contains(light_scores, score_light(rng.uniform(0, 200000), kCfg)));
    }
}

TEST(OverallScore, MonotoneOnGrid) {
    // non-decreasing in stress, non-increasing in cognitive
    for (int i = 0; i <= 100; ++i) {
        for (int j = 0; j < 100; ++j) {
            const double fixed = i / 100.0;
            const double a = j / 100.0;
            const double b = (j + 1) / 100.0;
            EXPECT_LE(overall_score(a, fixed, kCfg), overall_score(b, fixed, kCfg));
            EXPECT_GE(overall_score(fixed, a, kCfg), overall_score(fixed, b, kCfg));
        }
    }
}

TEST(AssignLabel, MonotoneInOverall) {
    for (int i = 0; i < 1000; ++i) {
        const double a = i / 1000.0;
        const double b = (i + 1) / 1000.0;
        EXPECT_LE(static_cast<int>(assign_label(a, kCfg)), static_cast<int>(assign_label(b, kCfg)));
    }
}

// 10,000 random tuples against the straight-line oracle, exact agreement.
TEST(Oracle, RoundTripAgreesExactly) {
    Rng rng(20260810);
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const double temp = rng.uniform(-20.0, 50.0);
        const double sound = rng.uniform(0.0, 120.0);
        const double lux = rng.uniform(0.0, 50000.0);
        const double hr = rng.uniform();
        const double gsr = rng.uniform();

        const double t = score_temperature(temp, kCfg);
        const double s = score_sound(sound, kCfg);
        const double l = score_light(lux, kCfg);
        const double cog = cognitive_score(t, s, l);
        const double str = stress_score(hr, gsr, kCfg);
        const double overall = overall_score(str, cog, kCfg);
        const RiskLabel label = assign_label(overall, kCfg);

        if (t != oracle::temp_score(temp) || s != oracle::sound_score(sound) ||
            l != oracle::light_score(lux) || cog != oracle::cognitive(t, s, l) ||
            str != oracle::stress(hr, gsr) || overall != oracle::overall(str, cog) ||
            static_cast<int>(label) != oracle::label(overall)) {
            ++mismatches;
        }
    }
    EXPECT_EQ(mismatches, 0);
}
