#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bioenv/errors.hpp"
#include "bioenv/model.hpp"
#include "bioenv/pipeline.hpp"

namespace bioenv {

/// Adaptive-moment gradient descent hyperparameters plus run control.
/// With deterministic=true the seed fully determines initialization, batch
/// order, and dropout masks.
struct TrainingConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 30;
    std::uint64_t seed = 42;
    bool deterministic = true;
    bool use_class_weights = false; // inverse-frequency weights, off by default

    void validate() const {
        if (learning_rate <= 0.0) throw ValidationError("TrainingConfig: learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ValidationError("TrainingConfig: moment decays must be in [0,1)");
        if (adam_epsilon <= 0.0) throw ValidationError("TrainingConfig: adam_epsilon must be > 0");
        if (batch_size <= 0 || max_epochs <= 0)
            throw ValidationError("TrainingConfig: batch_size and max_epochs must be positive");
    }
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

using TrainingHistory = std::vector<EpochStats>;

/// Trained parameters plus everything needed to serve them.
struct ModelBundle {
    ModelConfig config;
    ModelParameters<float> params;
    std::vector<std::string> label_names; // fixed risk order

    static std::vector<std::string> default_label_names() {
        std::vector<std::string> names;
        for (auto n : kRiskLabelNames) names.emplace_back(n);
        return names;
    }
};

struct TrainResult {
    ModelBundle bundle;
    TrainingHistory history;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
};

namespace detail {

template <typename Scalar, typename F>
void zip_tensors(ModelParameters<Scalar>& a, ModelParameters<Scalar>& b,
                 ModelParameters<Scalar>& c, ModelParameters<Scalar>& d, F&& f) {
    f(a.conv_kernel, b.conv_kernel, c.conv_kernel, d.conv_kernel);
    f(a.conv_bias, b.conv_bias, c.conv_bias, d.conv_bias);
    f(a.lstm_w, b.lstm_w, c.lstm_w, d.lstm_w);
    f(a.lstm_u, b.lstm_u, c.lstm_u, d.lstm_u);
    f(a.lstm_bias, b.lstm_bias, c.lstm_bias, d.lstm_bias);
    f(a.dense_w, b.dense_w, c.dense_w, d.dense_w);
    f(a.dense_bias, b.dense_bias, c.dense_bias, d.dense_bias);
}

inline std::vector<double> inverse_frequency_weights(std::span<const int> labels, int num_classes) {
    std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
    for (int y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
    std::vector<double> weights(static_cast<std::size_t>(num_classes), 0.0);
    const double total = static_cast<double>(labels.size());
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0.0)
            weights[static_cast<std::size_t>(c)] =
                total / (static_cast<double>(num_classes) * counts[static_cast<std::size_t>(c)]);
    }
    return weights;
}

} // namespace detail

/// One Adam step; t is the 1-based step counter.
template <typename Scalar>
void adam_step(ModelParameters<Scalar>& params, ModelParameters<Scalar>& grads,
               ModelParameters<Scalar>& m, ModelParameters<Scalar>& v,
               long t, const TrainingConfig& cfg) {
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
    const Scalar eps = static_cast<Scalar>(cfg.adam_epsilon);
    const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    detail::zip_tensors<Scalar>(params, grads, m, v,
        [&](auto& w, auto& g, auto& mt, auto& vt) {
            mt.array() = b1 * mt.array() + (Scalar(1) - b1) * g.array();
            vt.array() = b2 * vt.array() + (Scalar(1) - b2) * g.array().square();
            w.array() -= lr * (mt.array() / bc1) / ((vt.array() / bc2).sqrt() + eps);
        });
}

namespace detail {

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Inference-mode loss/accuracy over a window subset.
template <typename Scalar>
EvalResult evaluate_split(const ModelParameters<Scalar>& params, const ModelConfig& cfg,
                          const LabeledDataset& dataset, std::span<const std::size_t> indices,
                          const std::vector<double>* class_weights = nullptr) {
    EvalResult result;
    if (indices.empty()) return result;
    const std::size_t batch = 512;
    double ce_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < indices.size(); begin += batch) {
        const std::size_t count = std::min(batch, indices.size() - begin);
        MatX<Scalar> x(Eigen::Index(count), Eigen::Index(cfg.input_steps) * cfg.input_features);
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) {
            const FeatureWindow& w = dataset.windows[indices[begin + i]];
            labels[i] = static_cast<int>(w.label);
            for (int j = 0; j < cfg.input_steps * cfg.input_features; ++j)
                x(Eigen::Index(i), j) = static_cast<Scalar>(w.values[static_cast<std::size_t>(j)]);
        }
        const MatX<Scalar> probs = forward(params, cfg, x, false);
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            const int y = labels[static_cast<std::size_t>(r)];
            const double p = std::max(static_cast<double>(probs(r, y)), 1e-12);
            const double w = class_weights ? (*class_weights)[static_cast<std::size_t>(y)] : 1.0;
            ce_sum -= w * std::log(p);
            int best = 0;
            for (int c = 1; c < cfg.num_classes; ++c)
                if (probs(r, c) >= probs(r, best)) best = c;
            if (best == y) ++correct;
        }
    }
    double l2 = 0.0;
    if (cfg.l2_lambda > 0.0) {
        l2 += static_cast<double>(params.conv_kernel.squaredNorm());
        l2 += static_cast<double>(params.lstm_w.squaredNorm());
        l2 += static_cast<double>(params.lstm_u.squaredNorm());
        l2 += static_cast<double>(params.dense_w.squaredNorm());
    }
    result.loss = ce_sum / static_cast<double>(indices.size()) + cfg.l2_lambda * l2;
    result.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return result;
}

} // namespace detail

/// Mini-batch Adam over the given train/validation window indices. Records
/// per-epoch metrics and returns the parameters of the epoch with the best
/// validation accuracy (earliest epoch wins ties).
inline TrainResult train_on_indices(const LabeledDataset& dataset,
                                    std::span<const std::size_t> train_indices,
                                    std::span<const std::size_t> val_indices,
                                    const ModelConfig& model_cfg,
                                    const TrainingConfig& train_cfg) {
    model_cfg.validate();
    train_cfg.validate();
    if (train_indices.empty() || val_indices.empty())
        throw TrainingError("train: empty train or validation window set");

    std::uint64_t seed = train_cfg.seed;
    if (!train_cfg.deterministic) {
        seed ^= static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count());
    }
    Rng root(seed);
    Rng dropout_rng = root.fork(0x0d0);

    std::vector<int> train_labels(train_indices.size());
    for (std::size_t i = 0; i < train_indices.size(); ++i)
        train_labels[i] = static_cast<int>(dataset.windows[train_indices[i]].label);
    std::vector<double> class_weights_storage;
    const std::vector<double>* class_weights = nullptr;
    if (train_cfg.use_class_weights) {
        class_weights_storage =
            detail::inverse_frequency_weights(train_labels, model_cfg.num_classes);
        class_weights = &class_weights_storage;
    }

    ModelParameters<float> params = init_model<float>(model_cfg, seed);
    ModelParameters<float> m, v;
    m.allocate_zero(model_cfg);
    v.allocate_zero(model_cfg);

    TrainResult result;
    result.bundle.config = model_cfg;
    result.bundle.label_names = ModelBundle::default_label_names();

    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    const std::size_t bsz = static_cast<std::size_t>(train_cfg.batch_size);
    long step = 0;
    for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = root.fork(0x5f0 + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;
        std::size_t seen = 0;
        MatX<float> x;
        std::vector<int> labels;
        ForwardCache<float> cache;
        for (std::size_t begin = 0; begin < order.size(); begin += bsz) {
            const std::size_t count = std::min(bsz, order.size() - begin);
            x.resize(Eigen::Index(count), Eigen::Index(model_cfg.input_steps) * model_cfg.input_features);
            labels.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                const FeatureWindow& w = dataset.windows[order[begin + i]];
                labels[i] = static_cast<int>(w.label);
                for (int j = 0; j < model_cfg.input_steps * model_cfg.input_features; ++j)
                    x(Eigen::Index(i), j) = w.values[static_cast<std::size_t>(j)];
            }
            const MatX<float> probs = forward(params, model_cfg, x, true, &dropout_rng, &cache);
            const double batch_loss =
                loss(probs, labels, params, model_cfg.l2_lambda, class_weights);
            if (!std::isfinite(batch_loss))
                throw TrainingError("training aborted: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", step " + std::to_string(step));
            ModelParameters<float> grads =
                backward(params, model_cfg, cache, labels, model_cfg.l2_lambda, class_weights);
            adam_step(params, grads, m, v, ++step, train_cfg);
            if (!params.all_finite())
                throw TrainingError("training aborted: non-finite parameters at epoch " +
                                    std::to_string(epoch) + ", step " + std::to_string(step));
            epoch_loss += batch_loss * static_cast<double>(count);
            for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                int best = 0;
                for (int c = 1; c < model_cfg.num_classes; ++c)
                    if (probs(r, c) >= probs(r, best)) best = c;
                if (best == labels[static_cast<std::size_t>(r)]) ++epoch_correct;
            }
            seen += count;
        }

        const detail::EvalResult val =
            detail::evaluate_split(params, model_cfg, dataset, val_indices, class_weights);
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(seen);
        stats.train_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(seen);
        stats.val_loss = val.loss;
        stats.val_accuracy = val.accuracy;
        result.history.push_back(stats);

        if (val.accuracy > result.best_val_accuracy || result.best_epoch < 0) {
            result.best_val_accuracy = val.accuracy;
            result.best_epoch = epoch;
            result.bundle.params = params;
        }
    }
    return result;
}

/// Window indices for a set of subjects, in dataset order.
inline std::vector<std::size_t> windows_for_subjects(const LabeledDataset& dataset,
                                                     std::span<const std::string> subjects) {
    const std::set<std::string> wanted(subjects.begin(), subjects.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.windows.size(); ++i)
        if (wanted.count(dataset.windows[i].subject_id)) out.push_back(i);
    return out;
}

/// Subject-independent training: no window from a validation subject is seen
/// during training.
inline TrainResult train(const LabeledDataset& dataset, const DatasetSplit& split,
                         const ModelConfig& model_cfg, const TrainingConfig& train_cfg) {
    for (const std::string& s : split.train_subjects)
        for (const std::string& v : split.val_subjects)
            if (s == v) throw TrainingError("train: split is not subject-disjoint: " + s);
    const std::vector<std::size_t> train_idx = windows_for_subjects(dataset, split.train_subjects);
    const std::vector<std::size_t> val_idx = windows_for_subjects(dataset, split.val_subjects);
    return train_on_indices(dataset, train_idx, val_idx, model_cfg, train_cfg);
}

inline void write_history_csv(const TrainingHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history CSV: " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    out.precision(10);
    for (const EpochStats& e : history)
        out << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ','
            << e.val_loss << ',' << e.val_accuracy << '\n';
}

} // namespace bioenv
