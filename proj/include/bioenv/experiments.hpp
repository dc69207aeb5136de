#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bioenv/json_codec.hpp"
#include "bioenv/metrics.hpp"
#include "bioenv/model.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/train.hpp"

namespace bioenv {

// ---------------------------------------------------------------------------
// Provenance fingerprints
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a64(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(14695981039346656037ULL, s.data(), s.size());
}

} // namespace detail

/// Content hash over every window: subject, start index, label, and the raw
/// float bits of the feature matrix.
inline std::uint64_t dataset_digest(const LabeledDataset& dataset) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const FeatureWindow& w : dataset.windows) {
        h = detail::fnv1a64(h, w.subject_id.data(), w.subject_id.size());
        const std::uint64_t start = w.start_index;
        h = detail::fnv1a64(h, &start, sizeof(start));
        const int label = static_cast<int>(w.label);
        h = detail::fnv1a64(h, &label, sizeof(label));
        h = detail::fnv1a64(h, w.values.data(), w.values.size() * sizeof(float));
    }
    return h;
}

/// Hash of (ModelConfig, TrainingConfig, dataset digest); embedded in every
/// report so results can be traced back to their exact configuration.
inline std::string config_fingerprint(const ModelConfig& model_cfg,
                                      const TrainingConfig& train_cfg,
                                      std::uint64_t dataset_digest_value) {
    Json j;
    j["model"] = to_json(model_cfg);
    j["training"] = to_json(train_cfg);
    j["dataset_digest"] = dataset_digest_value;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a64(j.dump())));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Grouped cross-validation
// ---------------------------------------------------------------------------

struct CVReport {
    std::vector<double> fold_accuracy;
    double mean = 0.0;
    double stddev = 0.0; // population
    std::vector<std::vector<std::string>> fold_subjects; // validation group per fold
    std::uint64_t seed = 0;
    std::string config_fingerprint;
};

inline Json to_json(const CVReport& r) {
    Json j;
    j["fold_accuracy"] = r.fold_accuracy;
    j["mean"] = r.mean;
    j["stddev"] = r.stddev;
    j["fold_subjects"] = r.fold_subjects;
    j["seed"] = r.seed;
    j["config_fingerprint"] = r.config_fingerprint;
    return j;
}

inline CVReport cv_report_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
        {"fold_accuracy", "mean", "stddev", "fold_subjects", "seed", "config_fingerprint"},
        "cv_report");
    CVReport r;
    r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("stddev").get<double>();
    r.fold_subjects = j.at("fold_subjects").get<std::vector<std::vector<std::string>>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    return r;
}

/// Subject-grouped k-fold: trains k models, each validated on its held-out
/// subject group. Accuracy per fold is the best-epoch validation accuracy of
/// that fold's model.
inline CVReport run_cv(const LabeledDataset& dataset, const ModelConfig& model_cfg,
                       const TrainingConfig& train_cfg, int k = 5, std::uint64_t seed = 42) {
    if (k < 2) throw ValidationError("run_cv: k must be at least 2");
    const auto folds = grouped_kfold(dataset.subjects, k, seed);

    CVReport report;
    report.seed = seed;
    report.fold_subjects = folds;
    report.config_fingerprint =
        config_fingerprint(model_cfg, train_cfg, dataset_digest(dataset));

    for (const std::vector<std::string>& val_subjects : folds) {
        std::vector<std::string> train_subjects;
        for (const std::string& s : dataset.subjects) {
            if (std::find(val_subjects.begin(), val_subjects.end(), s) == val_subjects.end())
                train_subjects.push_back(s);
        }
        DatasetSplit split;
        split.train_subjects = train_subjects;
        split.val_subjects = val_subjects;
        split.seed = seed;
        const TrainResult result = train(dataset, split, model_cfg, train_cfg);
        report.fold_accuracy.push_back(result.best_val_accuracy);
    }

    double sum = 0.0;
    for (double a : report.fold_accuracy) sum += a;
    report.mean = sum / static_cast<double>(report.fold_accuracy.size());
    double sq = 0.0;
    for (double a : report.fold_accuracy) sq += (a - report.mean) * (a - report.mean);
    report.stddev = std::sqrt(sq / static_cast<double>(report.fold_accuracy.size()));
    return report;
}

// ---------------------------------------------------------------------------
// Leakage experiment (random-window vs subject split)
// ---------------------------------------------------------------------------

struct LeakageReport {
    double accuracy_random_split = 0.0;
    double accuracy_subject_split = 0.0;
    double gap = 0.0; // random - subject
    std::uint64_t seed = 0;
    std::string corpus_description;
    std::string config_fingerprint;
};

inline Json to_json(const LeakageReport& r) {
    Json j;
    j["accuracy_random_split"] = r.accuracy_random_split;
    j["accuracy_subject_split"] = r.accuracy_subject_split;
    j["gap"] = r.gap;
    j["seed"] = r.seed;
    j["corpus_description"] = r.corpus_description;
    j["config_fingerprint"] = r.config_fingerprint;
    return j;
}

inline LeakageReport leakage_report_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
        {"accuracy_random_split", "accuracy_subject_split", "gap", "seed",
         "corpus_description", "config_fingerprint"},
        "leakage_report");
    LeakageReport r;
    r.accuracy_random_split = j.at("accuracy_random_split").get<double>();
    r.accuracy_subject_split = j.at("accuracy_subject_split").get<double>();
    r.gap = j.at("gap").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.corpus_description = j.at("corpus_description").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    return r;
}

/// Trains twice from identical initialization: once on a deliberately leaky
/// random-window split, once on the subject-independent split, and reports
/// the held-out accuracy of each along with the gap.
inline LeakageReport leakage_experiment(const LabeledDataset& dataset,
                                        const ModelConfig& model_cfg,
                                        TrainingConfig train_cfg, std::uint64_t seed,
                                        std::string corpus_description = "") {
    if (dataset.subjects.size() < 2)
        throw ValidationError("leakage_experiment: need at least 2 subjects");
    train_cfg.seed = seed; // identical initialization for both runs

    const WindowSplit window_split = random_window_split(dataset.windows.size(), 0.8, seed);
    const TrainResult leaky = train_on_indices(dataset, window_split.train_indices,
                                               window_split.test_indices, model_cfg, train_cfg);

    const DatasetSplit subject_split = split_by_subject(dataset.subjects, 0.8, seed);
    const TrainResult honest = train(dataset, subject_split, model_cfg, train_cfg);

    LeakageReport report;
    report.accuracy_random_split = leaky.best_val_accuracy;
    report.accuracy_subject_split = honest.best_val_accuracy;
    report.gap = report.accuracy_random_split - report.accuracy_subject_split;
    report.seed = seed;
    report.corpus_description = std::move(corpus_description);
    report.config_fingerprint =
        config_fingerprint(model_cfg, train_cfg, dataset_digest(dataset));
    return report;
}

} // namespace bioenv
