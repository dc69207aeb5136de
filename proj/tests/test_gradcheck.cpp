#include <gtest/gtest.h>

#include <chrono>

#include "bioenv/gradcheck.hpp"

using namespace bioenv;

namespace {

// Reduced model per the verification protocol: 4 filters, 8 LSTM units,
// 4 classes, batch 3, double precision, dropout off.
ModelConfig reduced_config(double l2_lambda) {
    ModelConfig cfg;
    cfg.conv_filters = 4;
    cfg.lstm_units = 8;
    cfg.l2_lambda = l2_lambda;
    cfg.dropout_post_cnn = 0.0;
    cfg.dropout_post_lstm = 0.0;
    return cfg;
}

MatX<double> small_batch(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    MatX<double> x(3, cfg.input_steps * cfg.input_features);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform(-2.0, 2.0);
    return x;
}

const std::vector<int> kLabels = {0, 2, 3};

} // namespace

TEST(GradientCheck, PassesWithoutRegularization) {
    const ModelConfig cfg = reduced_config(0.0);
    const GradCheckReport report = gradient_check(cfg, small_batch(cfg, 1), kLabels);
    for (const auto& [name, err] : report.per_tensor)
        EXPECT_LE(err, 1e-4) << "tensor " << name;
    EXPECT_LE(report.max_rel_error, 1e-4);
    EXPECT_GE(report.coords_checked, 200u);
}

TEST(GradientCheck, PassesWithL2) {
    const ModelConfig cfg = reduced_config(0.01);
    const GradCheckReport report = gradient_check(cfg, small_batch(cfg, 2), kLabels);
    EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(GradientCheck, PerturbedDenseGradientFails) {
    // Sensitivity control: a 1% scale error on one tensor must be caught.
    ModelConfig cfg = reduced_config(0.01);
    const MatX<double> batch = small_batch(cfg, 3);
    const auto params = init_model<double>(cfg, 7);
    ForwardCache<double> cache;
    forward(params, cfg, batch, true, nullptr, &cache);
    ModelParameters<double> grads = backward(params, cfg, cache, kLabels, cfg.l2_lambda);
    grads.dense_w *= 1.01;
    const GradCheckReport report =
        finite_difference_check(params, cfg, batch, kLabels, cfg.l2_lambda, grads);
    EXPECT_GT(report.per_tensor.at("dense.W"), 1e-4);
}

TEST(GradientCheck, BiasGradientsIgnoreLambda) {
    const ModelConfig with = reduced_config(0.01);
    const ModelConfig without = reduced_config(0.0);
    const MatX<double> batch = small_batch(with, 4);
    const auto params = init_model<double>(with, 11);

    ForwardCache<double> cache;
    forward(params, with, batch, true, nullptr, &cache);
    const auto g_with = backward(params, with, cache, kLabels, with.l2_lambda);
    const auto g_without = backward(params, without, cache, kLabels, without.l2_lambda);
    EXPECT_EQ(g_with.conv_bias, g_without.conv_bias);
    EXPECT_EQ(g_with.lstm_bias, g_without.lstm_bias);
    EXPECT_EQ(g_with.dense_bias, g_without.dense_bias);
    // weights do feel lambda
    EXPECT_NE(g_with.dense_w, g_without.dense_w);
}

TEST(GradientCheck, GradientsFiniteAcrossSeeds) {
    const ModelConfig cfg = reduced_config(0.01);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto params = init_model<double>(cfg, seed);
        ForwardCache<double> cache;
        forward(params, cfg, small_batch(cfg, seed + 1000), true, nullptr, &cache);
        const auto grads = backward(params, cfg, cache, kLabels, cfg.l2_lambda);
        EXPECT_TRUE(grads.all_finite()) << "seed " << seed;
    }
}

TEST(GradientCheck, MissingCacheRejected) {
    const ModelConfig cfg = reduced_config(0.0);
    const auto params = init_model<double>(cfg, 1);
    ForwardCache<double> empty;
    EXPECT_THROW(backward(params, cfg, empty, kLabels, 0.0), ValidationError);
}

TEST(GradientCheck, RuntimeWellUnderBudget) {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig cfg = reduced_config(0.01);
    gradient_check(cfg, small_batch(cfg, 5), kLabels);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(secs, 60.0);
}
