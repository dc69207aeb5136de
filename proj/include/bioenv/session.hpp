#pragma once

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bioenv/errors.hpp"
#include "bioenv/json_codec.hpp"
#include "bioenv/model.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/train.hpp"

namespace bioenv {

/// How per-window predictions reduce to one verdict. Majority vote is the
/// default; max_risk takes the riskiest window's label instead.
enum class Aggregation {
    Majority,
    MaxRisk,
};

inline Aggregation aggregation_from_string(std::string_view name) {
    if (name == "majority") return Aggregation::Majority;
    if (name == "max_risk") return Aggregation::MaxRisk;
    throw ValidationError("unknown aggregation mode: " + std::string(name) +
                          " (expected 'majority' or 'max_risk')");
}

/// The single definitive output for a buffered session.
struct SessionVerdict {
    RiskLabel label = RiskLabel::RunAsUsual;
    double confidence = 0.0;
    int window_count = 0;
    std::array<double, kNumRiskLabels> per_class_fraction{};
    std::string model_fingerprint;
};

inline Json verdict_to_json(const SessionVerdict& v) {
    Json fractions;
    for (int c = 0; c < kNumRiskLabels; ++c)
        fractions[std::string(kRiskLabelNames[c])] = v.per_class_fraction[c];
    return Json{{"label", std::string(to_string(v.label))},
                {"confidence", v.confidence},
                {"window_count", v.window_count},
                {"per_class_fraction", fractions},
                {"model_fingerprint", v.model_fingerprint}};
}

inline SessionVerdict verdict_from_json(const Json& j) {
    SessionVerdict v;
    v.label = risk_label_from_string(j.at("label").get<std::string>());
    v.confidence = j.at("confidence").get<double>();
    v.window_count = j.at("window_count").get<int>();
    for (int c = 0; c < kNumRiskLabels; ++c)
        v.per_class_fraction[c] =
            j.at("per_class_fraction").at(std::string(kRiskLabelNames[c])).get<double>();
    v.model_fingerprint = j.value("model_fingerprint", "");
    return v;
}

/// Vote shares plus the winning label. Majority ties and the max-risk mode
/// both resolve toward higher risk; confidence is the mean winning-class
/// probability over the windows that voted for the winner.
inline SessionVerdict aggregate_verdict(std::span<const Prediction> predictions,
                                        Aggregation mode, std::string model_fingerprint) {
    if (predictions.empty()) throw ValidationError("aggregate_verdict: no window predictions");

    std::array<int, kNumRiskLabels> votes{};
    for (const Prediction& p : predictions) ++votes[static_cast<int>(p.label)];

    int winner = 0;
    if (mode == Aggregation::Majority) {
        for (int c = 0; c < kNumRiskLabels; ++c)
            if (votes[c] >= votes[winner]) winner = c; // >= breaks ties toward higher risk
    } else {
        for (int c = 0; c < kNumRiskLabels; ++c)
            if (votes[c] > 0) winner = c; // highest-risk label present
    }

    SessionVerdict v;
    v.label = static_cast<RiskLabel>(winner);
    v.window_count = static_cast<int>(predictions.size());
    v.model_fingerprint = std::move(model_fingerprint);
    const double inv = 1.0 / static_cast<double>(predictions.size());
    for (int c = 0; c < kNumRiskLabels; ++c) v.per_class_fraction[c] = votes[c] * inv;

    double conf_sum = 0.0;
    for (const Prediction& p : predictions)
        if (static_cast<int>(p.label) == winner) conf_sum += p.probabilities[winner];
    v.confidence = conf_sum / static_cast<double>(votes[winner]);
    return v;
}

/// One row of an inference request: the five features, no identity.
struct SessionSample {
    std::array<double, kNumFeatures> features{};
};

/// Validates a session, throwing with the offending sample index for
/// non-finite values.
inline void validate_session(std::span<const SessionSample> samples) {
    if (samples.size() < static_cast<std::size_t>(kWindowSteps))
        throw ValidationError("session has " + std::to_string(samples.size()) +
                              " samples; at least " + std::to_string(kWindowSteps) +
                              " are required");
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (int f = 0; f < kNumFeatures; ++f)
            if (!std::isfinite(samples[i].features[f]))
                throw ValidationError("non-finite value for " + std::string(kFeatureNames[f]) +
                                      " at sample index " + std::to_string(i));
}

/// Dynamic standardization: z-score each feature over the request's own
/// samples (population std; zero-variance features map to zeros), then cut
/// stride-1 windows.
inline std::vector<FeatureWindow> session_windows(std::span<const SessionSample> samples) {
    validate_session(samples);
    const std::size_t n = samples.size();
    std::array<double, kNumFeatures> mean{}, stddev{};
    for (int f = 0; f < kNumFeatures; ++f) {
        double sum = 0.0;
        for (const SessionSample& s : samples) sum += s.features[f];
        mean[f] = sum / static_cast<double>(n);
        double sq = 0.0;
        for (const SessionSample& s : samples) {
            const double d = s.features[f] - mean[f];
            sq += d * d;
        }
        stddev[f] = std::sqrt(sq / static_cast<double>(n));
    }

    std::vector<FeatureWindow> windows;
    windows.reserve(n - kWindowSteps + 1);
    for (std::size_t start = 0; start + kWindowSteps <= n; ++start) {
        FeatureWindow w;
        w.subject_id = "session";
        w.start_index = start;
        for (int t = 0; t < kWindowSteps; ++t)
            for (int f = 0; f < kNumFeatures; ++f) {
                const double v = samples[start + t].features[f];
                w.values[static_cast<std::size_t>(t) * kNumFeatures + f] =
                    stddev[f] > 0.0 ? static_cast<float>((v - mean[f]) / stddev[f]) : 0.0f;
            }
        windows.push_back(std::move(w));
    }
    return windows;
}

/// The full request pipeline shared by the inference server and the offline
/// assessment command: standardize -> window -> classify -> aggregate.
inline SessionVerdict assess_session(const ModelBundle& bundle, const std::string& fingerprint,
                                     std::span<const SessionSample> samples,
                                     Aggregation mode = Aggregation::Majority) {
    const std::vector<FeatureWindow> windows = session_windows(samples);
    const std::vector<Prediction> predictions =
        predict(bundle.params, bundle.config, windows);
    return aggregate_verdict(predictions, mode, fingerprint);
}

/// Session CSV for the offline path: accepts the full pipeline format or any
/// CSV carrying the five feature columns.
inline std::vector<SessionSample> session_from_csv(const std::filesystem::path& path,
                                                   const ColumnMapping& mapping = {}) {
    const CsvTable table = read_csv_table(path);
    std::array<std::size_t, kNumFeatures> cols{};
    for (int f = 0; f < kNumFeatures; ++f) {
        const auto idx = table.column(mapping.features[f]);
        if (!idx)
            throw ValidationError("session CSV is missing required column: " + mapping.features[f]);
        cols[f] = *idx;
    }
    std::vector<SessionSample> samples;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw ValidationError("session CSV has a malformed row");
        SessionSample s;
        for (int f = 0; f < kNumFeatures; ++f) {
            const auto v = parse_csv_number(row[cols[f]]);
            if (!v) throw ValidationError("session CSV has a non-numeric cell in column " +
                                          mapping.features[f]);
            s.features[f] = *v;
        }
        samples.push_back(s);
    }
    return samples;
}

} // namespace bioenv
