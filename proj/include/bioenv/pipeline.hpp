#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bioenv/csv.hpp"
#include "bioenv/errors.hpp"
#include "bioenv/risk.hpp"
#include "bioenv/rng.hpp"

namespace bioenv {

inline constexpr int kWindowSteps = 30;
inline constexpr int kNumFeatures = 5;

/// Canonical feature order used everywhere: matrices, CSV defaults, model
/// input. Index with kFeature* below.
inline constexpr int kFeatureHr = 0;
inline constexpr int kFeatureGsr = 1;
inline constexpr int kFeatureTemp = 2;
inline constexpr int kFeatureLux = 3;
inline constexpr int kFeatureSound = 4;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "heart_rate_bpm", "gsr_us", "temperature_c", "light_lux", "sound_db"};

inline double feature_value(const SensorSample& s, int feature) {
    switch (feature) {
        case kFeatureHr: return s.heart_rate_bpm;
        case kFeatureGsr: return s.gsr_us;
        case kFeatureTemp: return s.temperature_c;
        case kFeatureLux: return s.light_lux;
        case kFeatureSound: return s.sound_db;
        default: throw ValidationError("feature index out of range");
    }
}

inline void set_feature_value(SensorSample& s, int feature, double v) {
    switch (feature) {
        case kFeatureHr: s.heart_rate_bpm = v; return;
        case kFeatureGsr: s.gsr_us = v; return;
        case kFeatureTemp: s.temperature_c = v; return;
        case kFeatureLux: s.light_lux = v; return;
        case kFeatureSound: s.sound_db = v; return;
        default: throw ValidationError("feature index out of range");
    }
}

struct FeatureStats {
    double mean = 0.0;
    double stddev = 0.0; // population
    double min = 0.0;
    double max = 0.0;
};

/// One subject's time-ordered 1 Hz stream plus per-feature statistics over
/// the samples currently held.
struct SubjectSeries {
    std::string subject_id;
    std::vector<SensorSample> samples;
    std::array<FeatureStats, kNumFeatures> stats{};
};

/// 30x5 standardized matrix, the model's unit of prediction. values[t*5+f].
struct FeatureWindow {
    std::string subject_id;
    std::size_t start_index = 0;
    RiskLabel label = RiskLabel::RunAsUsual;
    std::array<float, kWindowSteps * kNumFeatures> values{};
};

struct LabeledDataset {
    std::vector<FeatureWindow> windows;
    std::vector<std::string> subjects; // unique, sorted

    std::array<std::size_t, kNumRiskLabels> label_histogram() const {
        std::array<std::size_t, kNumRiskLabels> h{};
        for (const FeatureWindow& w : windows) ++h[static_cast<int>(w.label)];
        return h;
    }
};

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

inline std::array<FeatureStats, kNumFeatures> compute_stats(const SubjectSeries& series) {
    if (series.samples.empty()) throw ValidationError("compute_stats: empty series");
    std::array<FeatureStats, kNumFeatures> stats{};
    const double n = static_cast<double>(series.samples.size());
    for (int f = 0; f < kNumFeatures; ++f) {
        double sum = 0.0;
        double mn = std::numeric_limits<double>::infinity();
        double mx = -std::numeric_limits<double>::infinity();
        for (const SensorSample& s : series.samples) {
            const double v = feature_value(s, f);
            sum += v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (const SensorSample& s : series.samples) {
            const double d = feature_value(s, f) - mean;
            sq += d * d;
        }
        stats[f] = {mean, std::sqrt(sq / n), mn, mx};
    }
    return stats;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Logical-field -> CSV-header mapping; defaults match the corpus generator.
struct ColumnMapping {
    std::string subject_id = "subject_id";
    std::string timestamp_s = "timestamp_s";
    std::array<std::string, kNumFeatures> features = {
        "heart_rate_bpm", "gsr_us", "temperature_c", "light_lux", "sound_db"};
};

struct CsvLoadReport {
    std::size_t rows_total = 0;
    std::size_t rows_bad = 0;
};

/// Groups rows by subject and sorts each group by timestamp. Structurally
/// unparseable rows are counted and skipped; null-valued cells become NaN
/// samples for clean() to delete.
inline std::vector<SubjectSeries> load_csv(const std::filesystem::path& path,
                                           const ColumnMapping& mapping = {},
                                           CsvLoadReport* report = nullptr) {
    const CsvTable table = read_csv_table(path);

    auto require_column = [&](const std::string& name) -> std::size_t {
        if (auto idx = table.column(name)) return *idx;
        throw ValidationError("CSV is missing required column: " + name);
    };
    const std::size_t col_subject = require_column(mapping.subject_id);
    const std::size_t col_time = require_column(mapping.timestamp_s);
    std::array<std::size_t, kNumFeatures> col_feature{};
    for (int f = 0; f < kNumFeatures; ++f) col_feature[f] = require_column(mapping.features[f]);

    CsvLoadReport local{};
    std::map<std::string, std::vector<SensorSample>> by_subject;
    for (const std::vector<std::string>& row : table.rows) {
        ++local.rows_total;
        if (row.size() != table.header.size()) {
            ++local.rows_bad;
            continue;
        }
        SensorSample s;
        s.subject_id = row[col_subject];
        const auto ts = parse_csv_number(row[col_time]);
        if (!ts || s.subject_id.empty()) {
            ++local.rows_bad;
            continue;
        }
        bool ok = std::isfinite(*ts);
        s.timestamp_s = ok ? static_cast<std::int64_t>(std::llround(*ts)) : 0;
        for (int f = 0; f < kNumFeatures && ok; ++f) {
            const auto v = parse_csv_number(row[col_feature[f]]);
            if (!v) {
                ok = false;
                break;
            }
            set_feature_value(s, f, *v);
        }
        if (!ok) {
            ++local.rows_bad;
            continue;
        }
        by_subject[s.subject_id].push_back(std::move(s));
    }
    if (report) *report = local;

    std::vector<SubjectSeries> out;
    for (auto& [subject, samples] : by_subject) {
        std::stable_sort(samples.begin(), samples.end(),
                         [](const SensorSample& a, const SensorSample& b) {
                             return a.timestamp_s < b.timestamp_s;
                         });
        SubjectSeries series;
        series.subject_id = subject;
        series.samples = std::move(samples);
        out.push_back(std::move(series));
    }
    if (out.empty()) throw ValidationError("CSV has zero usable rows: " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// Five-stage preprocessing
// ---------------------------------------------------------------------------

struct CleanReport {
    std::size_t dropped = 0;
};

/// List-wise deletion of samples with any non-finite field, then re-indexing
/// onto a contiguous 1 Hz grid (timestamps 0..n-1). Stats recomputed.
inline SubjectSeries clean(const SubjectSeries& series, CleanReport* report = nullptr) {
    SubjectSeries out;
    out.subject_id = series.subject_id;
    out.samples.reserve(series.samples.size());
    for (const SensorSample& s : series.samples) {
        if (s.all_finite()) out.samples.push_back(s);
    }
    if (report) report->dropped = series.samples.size() - out.samples.size();
    if (out.samples.empty())
        throw ValidationError("series for subject '" + series.subject_id +
                              "' is empty after cleaning");
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i].timestamp_s = static_cast<std::int64_t>(i);
    out.stats = compute_stats(out);
    return out;
}

/// Per-subject z-score with the population standard deviation; zero-variance
/// features map to all-zeros. The returned series carries the stats of the
/// standardized values.
inline SubjectSeries zscore_per_subject(const SubjectSeries& series) {
    if (series.samples.empty()) throw ValidationError("zscore_per_subject: empty series");
    const auto raw_stats = compute_stats(series);
    SubjectSeries out = series;
    for (int f = 0; f < kNumFeatures; ++f) {
        const double mean = raw_stats[f].mean;
        const double sd = raw_stats[f].stddev;
        for (SensorSample& s : out.samples) {
            const double v = feature_value(s, f);
            set_feature_value(s, f, sd > 0.0 ? (v - mean) / sd : 0.0);
        }
    }
    out.stats = compute_stats(out);
    return out;
}

/// Min-max over the subject's full cleaned series; degenerate range maps to
/// 0.5 (neutral arousal).
inline std::vector<double> minmax_normalize(std::span<const double> values) {
    if (values.empty()) throw ValidationError("minmax_normalize: empty input");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it;
    const double mx = *mx_it;
    std::vector<double> out(values.size());
    if (mx > mn) {
        const double inv = 1.0 / (mx - mn);
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mn) * inv;
    } else {
        std::fill(out.begin(), out.end(), 0.5);
    }
    return out;
}

inline std::vector<double> extract_feature(const SubjectSeries& series, int feature) {
    std::vector<double> v(series.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = feature_value(series.samples[i], feature);
    return v;
}

/// Sliding 30-step windows, stride 1, over an already-standardized series.
/// Returns length - 29 unlabeled windows.
inline std::vector<FeatureWindow> segment(const SubjectSeries& standardized,
                                          int window = kWindowSteps, int stride = 1) {
    if (window <= 0 || stride <= 0) throw ValidationError("segment: window and stride must be positive");
    const std::size_t n = standardized.samples.size();
    if (n < static_cast<std::size_t>(window))
        throw ValidationError("segment: series for subject '" + standardized.subject_id +
                              "' is shorter than one window (" + std::to_string(n) + " < " +
                              std::to_string(window) + ")");
    std::vector<FeatureWindow> out;
    out.reserve((n - window) / stride + 1);
    for (std::size_t start = 0; start + window <= n; start += stride) {
        FeatureWindow w;
        w.subject_id = standardized.subject_id;
        w.start_index = start;
        for (int t = 0; t < window; ++t) {
            const SensorSample& s = standardized.samples[start + t];
            for (int f = 0; f < kNumFeatures; ++f)
                w.values[static_cast<std::size_t>(t) * kNumFeatures + f] =
                    static_cast<float>(feature_value(s, f));
        }
        out.push_back(std::move(w));
    }
    return out;
}

/// Labels windows from the raw (cleaned, unstandardized) samples plus the
/// subject's min-max normalized HR/GSR; the stored feature matrices stay
/// z-scored.
inline void label_windows(std::vector<FeatureWindow>& windows,
                          const SubjectSeries& raw_clean,
                          std::span<const double> norm_hr,
                          std::span<const double> norm_gsr,
                          const ScoringConfig& cfg) {
    const std::size_t n = raw_clean.samples.size();
    if (norm_hr.size() != n || norm_gsr.size() != n)
        throw ValidationError("label_windows: normalization arrays do not match series length");
    for (FeatureWindow& w : windows) {
        const std::size_t end = w.start_index + kWindowSteps;
        if (end > n) throw ValidationError("label_windows: window index out of range");
        const RiskBreakdown breakdown = assess_window(
            std::span<const SensorSample>(raw_clean.samples).subspan(w.start_index, kWindowSteps),
            norm_hr.subspan(w.start_index, kWindowSteps),
            norm_gsr.subspan(w.start_index, kWindowSteps), cfg);
        w.label = breakdown.label;
    }
}

/// clean -> z-score -> segment -> label for every subject; windows ordered by
/// subject_id then start_index so parallel callers stay reproducible.
inline LabeledDataset build_labeled_dataset(const std::vector<SubjectSeries>& raw_series,
                                            const ScoringConfig& cfg,
                                            std::size_t* total_dropped = nullptr) {
    LabeledDataset ds;
    std::size_t dropped = 0;
    std::vector<const SubjectSeries*> ordered;
    ordered.reserve(raw_series.size());
    for (const SubjectSeries& s : raw_series) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const SubjectSeries* a, const SubjectSeries* b) {
                  return a->subject_id < b->subject_id;
              });
    for (const SubjectSeries* raw : ordered) {
        CleanReport creport;
        const SubjectSeries cleaned = clean(*raw, &creport);
        dropped += creport.dropped;
        const SubjectSeries standardized = zscore_per_subject(cleaned);
        std::vector<FeatureWindow> windows = segment(standardized);
        const std::vector<double> norm_hr =
            minmax_normalize(extract_feature(cleaned, kFeatureHr));
        const std::vector<double> norm_gsr =
            minmax_normalize(extract_feature(cleaned, kFeatureGsr));
        label_windows(windows, cleaned, norm_hr, norm_gsr, cfg);
        ds.subjects.push_back(cleaned.subject_id);
        for (FeatureWindow& w : windows) ds.windows.push_back(std::move(w));
    }
    if (total_dropped) *total_dropped = dropped;
    return ds;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct DatasetSplit {
    std::vector<std::string> train_subjects;
    std::vector<std::string> val_subjects;
    std::uint64_t seed = 0;
};

/// Deterministic subject-level split: shuffle by seed, first floor(ratio * n)
/// subjects train, remainder validation.
inline DatasetSplit split_by_subject(std::vector<std::string> subject_ids,
                                     double ratio, std::uint64_t seed) {
    std::sort(subject_ids.begin(), subject_ids.end());
    subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()), subject_ids.end());
    if (subject_ids.size() < 2)
        throw ValidationError("split_by_subject: need at least 2 subjects");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ValidationError("split_by_subject: ratio must be in (0,1)");
    Rng rng(seed);
    rng.shuffle(subject_ids);
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(ratio * static_cast<double>(subject_ids.size())));
    DatasetSplit split;
    split.seed = seed;
    split.train_subjects.assign(subject_ids.begin(), subject_ids.begin() + n_train);
    split.val_subjects.assign(subject_ids.begin() + n_train, subject_ids.end());
    if (split.train_subjects.empty() || split.val_subjects.empty())
        throw ValidationError("split_by_subject: ratio leaves one side empty");
    return split;
}

struct WindowSplit {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
};

/// Deliberately leaky split: windows shuffled regardless of subject. Used
/// only by the leakage experiment.
inline WindowSplit random_window_split(std::size_t n_windows, double ratio, std::uint64_t seed) {
    if (n_windows < 2) throw ValidationError("random_window_split: need at least 2 windows");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ValidationError("random_window_split: ratio must be in (0,1)");
    std::vector<std::size_t> indices(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) indices[i] = i;
    Rng rng(seed);
    rng.shuffle(indices);
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_windows)));
    WindowSplit split;
    split.seed = seed;
    split.train_indices.assign(indices.begin(), indices.begin() + n_train);
    split.test_indices.assign(indices.begin() + n_train, indices.end());
    return split;
}

} // namespace bioenv
