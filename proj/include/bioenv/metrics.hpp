#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bioenv/errors.hpp"
#include "bioenv/risk.hpp"
#include "bioenv/rng.hpp"

namespace bioenv {

// ---------------------------------------------------------------------------
// Confusion matrix and derived metrics
// ---------------------------------------------------------------------------

/// 4x4 counts, rows = true label, columns = predicted, fixed risk order.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumRiskLabels>, kNumRiskLabels> counts{};

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& row : counts)
            for (std::uint64_t c : row) t += c;
        return t;
    }

    std::uint64_t row_sum(int r) const {
        return std::accumulate(counts[r].begin(), counts[r].end(), std::uint64_t{0});
    }

    std::uint64_t col_sum(int c) const {
        std::uint64_t t = 0;
        for (const auto& row : counts) t += row[c];
        return t;
    }

    std::uint64_t trace() const {
        std::uint64_t t = 0;
        for (int i = 0; i < kNumRiskLabels; ++i) t += counts[i][i];
        return t;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const RiskLabel> truth,
                                        std::span<const RiskLabel> predicted) {
    if (truth.size() != predicted.size())
        throw ValidationError("confusion_matrix: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++cm.counts[static_cast<int>(truth[i])][static_cast<int>(predicted[i])];
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Zero-denominator cases report 0 with the flag cleared instead of NaN.
    bool precision_defined = false;
    bool recall_defined = false;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::array<ClassMetrics, kNumRiskLabels> per_class{};
};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ValidationError("metrics: empty confusion matrix");
    MetricsReport report;
    report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    for (int c = 0; c < kNumRiskLabels; ++c) {
        ClassMetrics& m = report.per_class[c];
        const std::uint64_t col = cm.col_sum(c);
        const std::uint64_t row = cm.row_sum(c);
        const double diag = static_cast<double>(cm.counts[c][c]);
        if (col > 0) {
            m.precision = diag / static_cast<double>(col);
            m.precision_defined = true;
        }
        if (row > 0) {
            m.recall = diag / static_cast<double>(row);
            m.recall_defined = true;
        }
        if (m.precision + m.recall > 0.0)
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return report;
}

// ---------------------------------------------------------------------------
// One-vs-rest ROC / AUC
// ---------------------------------------------------------------------------

struct AucReport {
    std::array<double, kNumRiskLabels> auc{};
    std::array<bool, kNumRiskLabels> defined{};
    double macro = 0.0; // mean over the defined classes
};

namespace detail {

/// Mann-Whitney AUC with midrank tie handling over binary outcomes.
inline double auc_midrank(std::span<const double> scores, const std::vector<bool>& positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }

    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (positive[k]) {
            rank_sum += ranks[k];
            ++n_pos;
        }
    }
    const std::size_t n_neg = n - n_pos;
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

} // namespace detail

/// Per-class one-vs-rest AUC via the rank-statistic formulation. A class with
/// no positives (or no negatives) is reported undefined and excluded from the
/// macro average.
inline AucReport roc_auc_ovr(std::span<const std::array<double, kNumRiskLabels>> probabilities,
                             std::span<const RiskLabel> truth) {
    if (probabilities.size() != truth.size())
        throw ValidationError("roc_auc_ovr: length mismatch");
    if (truth.empty()) throw ValidationError("roc_auc_ovr: empty input");
    AucReport report;
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < kNumRiskLabels; ++c) {
        std::vector<double> scores(truth.size());
        std::vector<bool> positive(truth.size());
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            scores[i] = probabilities[i][c];
            positive[i] = static_cast<int>(truth[i]) == c;
            n_pos += positive[i] ? 1 : 0;
        }
        if (n_pos == 0 || n_pos == truth.size()) continue;
        report.auc[c] = detail::auc_midrank(scores, positive);
        report.defined[c] = true;
        sum += report.auc[c];
        ++defined;
    }
    if (defined > 0) report.macro = sum / defined;
    return report;
}

/// Explicit curve points for plotting / export, one point per distinct
/// threshold (descending) plus the (0,0) origin.
struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

inline std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                       const std::vector<bool>& positive) {
    if (scores.size() != positive.size() || scores.empty())
        throw ValidationError("roc_curve: bad input");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = scores.size() - n_pos;

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            if (positive[order[i]]) ++tp; else ++fp;
            ++i;
        }
        points.push_back({n_neg ? static_cast<double>(fp) / n_neg : 0.0,
                          n_pos ? static_cast<double>(tp) / n_pos : 0.0,
                          threshold});
    }
    return points;
}

// ---------------------------------------------------------------------------
// Grouped k-fold
// ---------------------------------------------------------------------------

/// Subjects shuffled by seed, then dealt round-robin into k validation
/// groups. The groups partition the subject set.
inline std::vector<std::vector<std::string>> grouped_kfold(std::vector<std::string> subject_ids,
                                                           int k, std::uint64_t seed) {
    std::sort(subject_ids.begin(), subject_ids.end());
    subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()), subject_ids.end());
    if (k < 2) throw ValidationError("grouped_kfold: k must be at least 2");
    if (subject_ids.size() < static_cast<std::size_t>(k))
        throw ValidationError("grouped_kfold: fewer subjects than folds");
    Rng rng(seed);
    rng.shuffle(subject_ids);
    std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
        folds[i % static_cast<std::size_t>(k)].push_back(subject_ids[i]);
    return folds;
}

} // namespace bioenv
