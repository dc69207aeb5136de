#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "bioenv/errors.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/rng.hpp"

namespace bioenv {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Architecture hyperparameters. Defaults are the deployed configuration:
/// Conv1D(64, k=3, valid) -> dropout 0.1 -> LSTM(128) -> dropout 0.3 ->
/// dense softmax over 4 classes, L2 lambda 0.01 on kernels.
struct ModelConfig {
    int input_steps = kWindowSteps;
    int input_features = kNumFeatures;
    int conv_filters = 64;
    int conv_kernel = 3;
    int lstm_units = 128;
    int num_classes = kNumRiskLabels;
    double l2_lambda = 0.01;
    double dropout_post_cnn = 0.1;
    double dropout_post_lstm = 0.3;

    int conv_steps() const { return input_steps - conv_kernel + 1; }

    void validate() const {
        if (input_steps <= 0 || input_features <= 0 || conv_filters <= 0 ||
            conv_kernel <= 0 || lstm_units <= 0 || num_classes <= 1)
            throw ValidationError("ModelConfig: all layer sizes must be positive");
        if (conv_kernel > input_steps)
            throw ValidationError("ModelConfig: conv kernel longer than the input window");
        if (l2_lambda < 0.0) throw ValidationError("ModelConfig: l2_lambda must be >= 0");
        if (!(dropout_post_cnn >= 0.0 && dropout_post_cnn < 1.0) ||
            !(dropout_post_lstm >= 0.0 && dropout_post_lstm < 1.0))
            throw ValidationError("ModelConfig: dropout rates must be in [0,1)");
    }
};

/// All trainable tensors. LSTM gate order is [input, forget, cell, output]
/// along the 4*units axis, both in memory and in the model file.
template <typename Scalar>
struct ModelParameters {
    MatX<Scalar> conv_kernel; // (kernel*features) x filters, row = k*features + c
    VecX<Scalar> conv_bias;   // filters
    MatX<Scalar> lstm_w;      // filters x 4*units
    MatX<Scalar> lstm_u;      // units x 4*units
    VecX<Scalar> lstm_bias;   // 4*units
    MatX<Scalar> dense_w;     // units x classes
    VecX<Scalar> dense_bias;  // classes

    void allocate_zero(const ModelConfig& cfg) {
        conv_kernel = MatX<Scalar>::Zero(cfg.conv_kernel * cfg.input_features, cfg.conv_filters);
        conv_bias = VecX<Scalar>::Zero(cfg.conv_filters);
        lstm_w = MatX<Scalar>::Zero(cfg.conv_filters, 4 * cfg.lstm_units);
        lstm_u = MatX<Scalar>::Zero(cfg.lstm_units, 4 * cfg.lstm_units);
        lstm_bias = VecX<Scalar>::Zero(4 * cfg.lstm_units);
        dense_w = MatX<Scalar>::Zero(cfg.lstm_units, cfg.num_classes);
        dense_bias = VecX<Scalar>::Zero(cfg.num_classes);
    }

    template <typename F>
    void for_each_tensor(F&& f) {
        f("conv.kernel", conv_kernel);
        f("conv.bias", conv_bias);
        f("lstm.W", lstm_w);
        f("lstm.U", lstm_u);
        f("lstm.bias", lstm_bias);
        f("dense.W", dense_w);
        f("dense.bias", dense_bias);
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        f("conv.kernel", conv_kernel);
        f("conv.bias", conv_bias);
        f("lstm.W", lstm_w);
        f("lstm.U", lstm_u);
        f("lstm.bias", lstm_bias);
        f("dense.W", dense_w);
        f("dense.bias", dense_bias);
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }

    template <typename Other>
    ModelParameters<Other> cast() const {
        ModelParameters<Other> out;
        out.conv_kernel = conv_kernel.template cast<Other>();
        out.conv_bias = conv_bias.template cast<Other>();
        out.lstm_w = lstm_w.template cast<Other>();
        out.lstm_u = lstm_u.template cast<Other>();
        out.lstm_bias = lstm_bias.template cast<Other>();
        out.dense_w = dense_w.template cast<Other>();
        out.dense_bias = dense_bias.template cast<Other>();
        return out;
    }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Fan-in-scaled uniform weights, zero biases, LSTM forget-gate bias 1.
/// Fill order is fixed so a seed reproduces the same tensors everywhere.
template <typename Scalar>
ModelParameters<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParameters<Scalar> p;
    p.allocate_zero(cfg);
    Rng rng(seed);
    auto fill_uniform = [&rng](MatX<Scalar>& m, double fan_in) {
        const double limit = std::sqrt(1.0 / fan_in);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
    };
    fill_uniform(p.conv_kernel, cfg.conv_kernel * cfg.input_features);
    fill_uniform(p.lstm_w, cfg.conv_filters);
    fill_uniform(p.lstm_u, cfg.lstm_units);
    fill_uniform(p.dense_w, cfg.lstm_units);
    p.lstm_bias.segment(cfg.lstm_units, cfg.lstm_units).setOnes();
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Everything backward() needs to replay the batch, including dropout masks.
template <typename Scalar>
struct ForwardCache {
    Eigen::Index batch = 0;
    MatX<Scalar> im2col;       // (steps*batch) x (kernel*features), row = t*batch + b
    MatX<Scalar> relu_out;     // (steps*batch) x filters
    MatX<Scalar> mask_cnn;     // same shape; empty when dropout off
    MatX<Scalar> lstm_input;   // relu_out after dropout
    std::vector<MatX<Scalar>> gates;  // per step, batch x 4*units (activated)
    std::vector<MatX<Scalar>> cell_prev;
    std::vector<MatX<Scalar>> cell_tanh;
    std::vector<MatX<Scalar>> hidden_prev;
    MatX<Scalar> hidden_last;  // batch x units, pre-dropout
    MatX<Scalar> mask_lstm;    // batch x units; empty when dropout off
    MatX<Scalar> hidden_masked;
    MatX<Scalar> probs;        // batch x classes
};

/// 0/keep-scale dropout mask with inverted scaling (train-time 1/(1-rate)).
template <typename Scalar>
MatX<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    MatX<Scalar> mask(rows, cols);
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            mask(r, c) = rng.uniform() < rate ? Scalar(0) : keep;
    return mask;
}

/// Runs the batch through conv -> ReLU -> dropout -> LSTM -> dropout ->
/// dense -> softmax. `batch` is B x (steps*features), row-major window
/// layout (t*features + f). Pass a cache to enable backward().
template <typename Scalar>
MatX<Scalar> forward(const ModelParameters<Scalar>& params, const ModelConfig& cfg,
                     const MatX<Scalar>& batch, bool train_mode, Rng* dropout_rng = nullptr,
                     std::type_identity_t<ForwardCache<Scalar>>* cache = nullptr) {
    const Eigen::Index b_count = batch.rows();
    const int steps = cfg.conv_steps();
    const int feats = cfg.input_features;
    const int filters = cfg.conv_filters;
    const int units = cfg.lstm_units;
    if (batch.cols() != Eigen::Index(cfg.input_steps) * feats)
        throw ValidationError("forward: batch width does not match input_steps*input_features");
    if (b_count == 0) throw ValidationError("forward: empty batch");
    const bool use_cnn_dropout = train_mode && cfg.dropout_post_cnn > 0.0;
    const bool use_lstm_dropout = train_mode && cfg.dropout_post_lstm > 0.0;
    if ((use_cnn_dropout || use_lstm_dropout) && dropout_rng == nullptr)
        throw ValidationError("forward: train mode with dropout needs an RNG");

    // im2col, time-major rows so each LSTM step is one contiguous block.
    MatX<Scalar> im2col(Eigen::Index(steps) * b_count, Eigen::Index(cfg.conv_kernel) * feats);
    for (int t = 0; t < steps; ++t)
        for (Eigen::Index b = 0; b < b_count; ++b)
            for (int k = 0; k < cfg.conv_kernel; ++k)
                for (int f = 0; f < feats; ++f)
                    im2col(Eigen::Index(t) * b_count + b, Eigen::Index(k) * feats + f) =
                        batch(b, Eigen::Index(t + k) * feats + f);

    MatX<Scalar> relu_out = im2col * params.conv_kernel;
    relu_out.rowwise() += params.conv_bias.transpose();
    relu_out = relu_out.cwiseMax(Scalar(0));

    MatX<Scalar> mask_cnn;
    MatX<Scalar> lstm_input;
    if (use_cnn_dropout) {
        mask_cnn = dropout_mask<Scalar>(relu_out.rows(), relu_out.cols(),
                                        cfg.dropout_post_cnn, *dropout_rng);
        lstm_input = relu_out.cwiseProduct(mask_cnn);
    } else {
        lstm_input = relu_out;
    }

    MatX<Scalar> hidden = MatX<Scalar>::Zero(b_count, units);
    MatX<Scalar> cell = MatX<Scalar>::Zero(b_count, units);
    if (cache) {
        cache->batch = b_count;
        cache->gates.assign(steps, MatX<Scalar>());
        cache->cell_prev.assign(steps, MatX<Scalar>());
        cache->cell_tanh.assign(steps, MatX<Scalar>());
        cache->hidden_prev.assign(steps, MatX<Scalar>());
    }
    MatX<Scalar> z(b_count, 4 * units);
    for (int t = 0; t < steps; ++t) {
        const auto x_t = lstm_input.middleRows(Eigen::Index(t) * b_count, b_count);
        z.noalias() = x_t * params.lstm_w;
        z.noalias() += hidden * params.lstm_u;
        z.rowwise() += params.lstm_bias.transpose();
        // gate order [input, forget, cell, output]
        auto gi = z.leftCols(units);
        auto gf = z.middleCols(units, units);
        auto gg = z.middleCols(2 * units, units);
        auto go = z.rightCols(units);
        gi = ((-gi.array()).exp() + Scalar(1)).inverse();
        gf = ((-gf.array()).exp() + Scalar(1)).inverse();
        gg = gg.array().tanh();
        go = ((-go.array()).exp() + Scalar(1)).inverse();
        if (cache) {
            cache->cell_prev[t] = cell;
            cache->hidden_prev[t] = hidden;
            cache->gates[t] = z;
        }
        cell = gf.cwiseProduct(cell) + gi.cwiseProduct(gg);
        MatX<Scalar> cell_tanh = cell.array().tanh().matrix();
        hidden = go.cwiseProduct(cell_tanh);
        if (cache) cache->cell_tanh[t] = std::move(cell_tanh);
    }

    MatX<Scalar> mask_lstm;
    MatX<Scalar> hidden_masked;
    if (use_lstm_dropout) {
        mask_lstm = dropout_mask<Scalar>(b_count, units, cfg.dropout_post_lstm, *dropout_rng);
        hidden_masked = hidden.cwiseProduct(mask_lstm);
    } else {
        hidden_masked = hidden;
    }

    MatX<Scalar> logits = hidden_masked * params.dense_w;
    logits.rowwise() += params.dense_bias.transpose();

    MatX<Scalar> probs(b_count, cfg.num_classes);
    for (Eigen::Index r = 0; r < b_count; ++r) {
        const Scalar row_max = logits.row(r).maxCoeff();
        auto e = (logits.row(r).array() - row_max).exp();
        probs.row(r) = (e / e.sum()).matrix();
    }

    if (cache) {
        cache->im2col = std::move(im2col);
        cache->relu_out = std::move(relu_out);
        cache->mask_cnn = std::move(mask_cnn);
        cache->lstm_input = std::move(lstm_input);
        cache->hidden_last = std::move(hidden);
        cache->mask_lstm = std::move(mask_lstm);
        cache->hidden_masked = std::move(hidden_masked);
        cache->probs = probs;
    }
    return probs;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean categorical cross-entropy (log clamped at 1e-12) plus
/// l2_lambda * sum of squared kernel weights; biases unregularized.
/// Optional per-class weights rescale each sample's CE term.
template <typename Scalar>
double loss(const MatX<Scalar>& probs, const std::vector<int>& labels,
            const ModelParameters<Scalar>& params, double l2_lambda,
            const std::vector<double>* class_weights = nullptr) {
    if (probs.rows() != Eigen::Index(labels.size()))
        throw ValidationError("loss: probs/labels length mismatch");
    double ce = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= probs.cols()) throw ValidationError("loss: label out of range");
        const double p = std::max(static_cast<double>(probs(r, y)), 1e-12);
        const double w = class_weights ? (*class_weights)[static_cast<std::size_t>(y)] : 1.0;
        ce -= w * std::log(p);
    }
    ce /= static_cast<double>(probs.rows());
    double l2 = 0.0;
    if (l2_lambda > 0.0) {
        l2 += static_cast<double>(params.conv_kernel.squaredNorm());
        l2 += static_cast<double>(params.lstm_w.squaredNorm());
        l2 += static_cast<double>(params.lstm_u.squaredNorm());
        l2 += static_cast<double>(params.dense_w.squaredNorm());
    }
    return ce + l2_lambda * l2;
}

// ---------------------------------------------------------------------------
// Backward pass (BPTT)
// ---------------------------------------------------------------------------

/// Analytic gradients for every parameter tensor, replaying the cached
/// dropout masks and including the L2 terms.
template <typename Scalar>
ModelParameters<Scalar> backward(const ModelParameters<Scalar>& params, const ModelConfig& cfg,
                                 const ForwardCache<Scalar>& cache, const std::vector<int>& labels,
                                 double l2_lambda,
                                 const std::vector<double>* class_weights = nullptr) {
    if (cache.batch == 0 || cache.probs.size() == 0)
        throw ValidationError("backward: forward cache is missing");
    const Eigen::Index b_count = cache.batch;
    if (Eigen::Index(labels.size()) != b_count)
        throw ValidationError("backward: labels do not match cached batch");
    const int steps = cfg.conv_steps();
    const int units = cfg.lstm_units;
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b_count);
    const Scalar two_lambda = static_cast<Scalar>(2.0 * l2_lambda);

    ModelParameters<Scalar> grads;
    grads.allocate_zero(cfg);

    // Softmax + cross-entropy: dLogits = (probs - onehot) * w_class / B.
    MatX<Scalar> d_logits = cache.probs;
    for (Eigen::Index r = 0; r < b_count; ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        d_logits(r, y) -= Scalar(1);
        const Scalar w = class_weights
            ? static_cast<Scalar>((*class_weights)[static_cast<std::size_t>(y)])
            : Scalar(1);
        d_logits.row(r) *= w * inv_b;
    }

    grads.dense_w.noalias() = cache.hidden_masked.transpose() * d_logits;
    grads.dense_bias = d_logits.colwise().sum().transpose();

    MatX<Scalar> d_hidden = d_logits * params.dense_w.transpose();
    if (cache.mask_lstm.size() > 0) d_hidden = d_hidden.cwiseProduct(cache.mask_lstm);

    MatX<Scalar> d_cell = MatX<Scalar>::Zero(b_count, units);
    MatX<Scalar> d_lstm_input(Eigen::Index(steps) * b_count, cfg.conv_filters);
    MatX<Scalar> d_z(b_count, 4 * units);
    for (int t = steps - 1; t >= 0; --t) {
        const MatX<Scalar>& gates = cache.gates[t];
        const auto gi = gates.leftCols(units).array();
        const auto gf = gates.middleCols(units, units).array();
        const auto gg = gates.middleCols(2 * units, units).array();
        const auto go = gates.rightCols(units).array();
        const auto tanh_c = cache.cell_tanh[t].array();

        const auto d_h = d_hidden.array();
        auto d_o = d_h * tanh_c;
        d_cell.array() += d_h * go * (Scalar(1) - tanh_c.square());
        const auto d_c = d_cell.array();

        d_z.leftCols(units).array() = d_c * gg * gi * (Scalar(1) - gi);              // input gate
        d_z.middleCols(units, units).array() =
            d_c * cache.cell_prev[t].array() * gf * (Scalar(1) - gf);                 // forget gate
        d_z.middleCols(2 * units, units).array() = d_c * gi * (Scalar(1) - gg.square()); // candidate
        d_z.rightCols(units).array() = d_o * go * (Scalar(1) - go);                   // output gate

        const auto x_t = cache.lstm_input.middleRows(Eigen::Index(t) * b_count, b_count);
        grads.lstm_w.noalias() += x_t.transpose() * d_z;
        grads.lstm_u.noalias() += cache.hidden_prev[t].transpose() * d_z;
        grads.lstm_bias += d_z.colwise().sum().transpose();

        d_lstm_input.middleRows(Eigen::Index(t) * b_count, b_count).noalias() =
            d_z * params.lstm_w.transpose();
        d_hidden.noalias() = d_z * params.lstm_u.transpose();
        d_cell.array() = d_c * gf;
    }

    if (cache.mask_cnn.size() > 0) d_lstm_input = d_lstm_input.cwiseProduct(cache.mask_cnn);
    // ReLU gate: pre-activation > 0 iff post-activation > 0.
    MatX<Scalar> d_conv =
        d_lstm_input.cwiseProduct((cache.relu_out.array() > Scalar(0)).template cast<Scalar>().matrix());
    grads.conv_kernel.noalias() = cache.im2col.transpose() * d_conv;
    grads.conv_bias = d_conv.colwise().sum().transpose();

    if (l2_lambda > 0.0) {
        grads.conv_kernel += two_lambda * params.conv_kernel;
        grads.lstm_w += two_lambda * params.lstm_w;
        grads.lstm_u += two_lambda * params.lstm_u;
        grads.dense_w += two_lambda * params.dense_w;
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct Prediction {
    RiskLabel label = RiskLabel::RunAsUsual;
    double confidence = 0.0;
    std::array<double, kNumRiskLabels> probabilities{};
};

template <typename Scalar>
MatX<Scalar> batch_from_windows(std::span<const FeatureWindow> windows, const ModelConfig& cfg) {
    MatX<Scalar> batch(Eigen::Index(windows.size()), Eigen::Index(cfg.input_steps) * cfg.input_features);
    for (std::size_t i = 0; i < windows.size(); ++i)
        for (int j = 0; j < cfg.input_steps * cfg.input_features; ++j)
            batch(Eigen::Index(i), j) = static_cast<Scalar>(windows[i].values[static_cast<std::size_t>(j)]);
    return batch;
}

/// Inference-mode classification of standardized windows; argmax ties break
/// toward the higher-risk class.
template <typename Scalar>
std::vector<Prediction> predict(const ModelParameters<Scalar>& params, const ModelConfig& cfg,
                                std::span<const FeatureWindow> windows,
                                std::size_t batch_size = 512) {
    if (cfg.num_classes != kNumRiskLabels)
        throw ValidationError("predict: model does not output the 4 risk classes");
    std::vector<Prediction> out;
    out.reserve(windows.size());
    for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
        const std::size_t count = std::min(batch_size, windows.size() - begin);
        const MatX<Scalar> batch =
            batch_from_windows<Scalar>(windows.subspan(begin, count), cfg);
        const MatX<Scalar> probs = forward(params, cfg, batch, false);
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            Prediction p;
            int best = 0;
            for (int c = 0; c < kNumRiskLabels; ++c) {
                p.probabilities[c] = static_cast<double>(probs(r, c));
                if (p.probabilities[c] >= p.probabilities[best]) best = c;
            }
            p.label = static_cast<RiskLabel>(best);
            p.confidence = p.probabilities[best];
            out.push_back(p);
        }
    }
    return out;
}

} // namespace bioenv
