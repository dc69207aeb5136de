#include <gtest/gtest.h>

#include "bioenv/model.hpp"
#include "bioenv/rng.hpp"

using namespace bioenv;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.conv_filters = 4;
    cfg.lstm_units = 8;
    return cfg;
}

template <typename Scalar>
MatX<Scalar> random_batch(int rows, const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    MatX<Scalar> x(rows, cfg.input_steps * cfg.input_features);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            x(r, c) = static_cast<Scalar>(rng.uniform(-2.0, 2.0));
    return x;
}

} // namespace

TEST(InitModel, DeterministicAndShaped) {
    const ModelConfig cfg; // full deployed configuration
    const auto a = init_model<float>(cfg, 99);
    const auto b = init_model<float>(cfg, 99);
    EXPECT_EQ(a.conv_kernel, b.conv_kernel);
    EXPECT_EQ(a.lstm_w, b.lstm_w);
    EXPECT_EQ(a.lstm_u, b.lstm_u);
    EXPECT_EQ(a.dense_w, b.dense_w);

    EXPECT_EQ(a.conv_kernel.rows(), 15);
    EXPECT_EQ(a.conv_kernel.cols(), 64);
    EXPECT_EQ(a.conv_bias.size(), 64);
    EXPECT_EQ(a.lstm_w.rows(), 64);
    EXPECT_EQ(a.lstm_w.cols(), 512);
    EXPECT_EQ(a.lstm_u.rows(), 128);
    EXPECT_EQ(a.lstm_u.cols(), 512);
    EXPECT_EQ(a.lstm_bias.size(), 512);
    EXPECT_EQ(a.dense_w.rows(), 128);
    EXPECT_EQ(a.dense_w.cols(), 4);

    const auto c = init_model<float>(cfg, 100);
    EXPECT_NE(a.conv_kernel, c.conv_kernel);
}

TEST(InitModel, ForgetGateBiasIsOne) {
    const ModelConfig cfg = tiny_config();
    const auto p = init_model<double>(cfg, 3);
    for (int i = 0; i < cfg.lstm_units; ++i) {
        EXPECT_EQ(p.lstm_bias(i), 0.0);                        // input gate
        EXPECT_EQ(p.lstm_bias(cfg.lstm_units + i), 1.0);       // forget gate
        EXPECT_EQ(p.lstm_bias(2 * cfg.lstm_units + i), 0.0);   // candidate
        EXPECT_EQ(p.lstm_bias(3 * cfg.lstm_units + i), 0.0);   // output gate
    }
}

TEST(Forward, SoftmaxRowsSumToOne) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<double>(cfg, 5);
    const auto x = random_batch<double>(7, cfg, 1);
    const auto probs = forward(params, cfg, x, false);
    ASSERT_EQ(probs.rows(), 7);
    ASSERT_EQ(probs.cols(), 4);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-6);
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            EXPECT_GT(probs(r, c), 0.0);
            EXPECT_LT(probs(r, c), 1.0);
        }
    }
}

TEST(Forward, ConvOutputLengthIsTwentyEight) {
    const ModelConfig cfg = tiny_config();
    EXPECT_EQ(cfg.conv_steps(), 28);
    const auto params = init_model<double>(cfg, 5);
    ForwardCache<double> cache;
    forward(params, cfg, random_batch<double>(3, cfg, 2), true, nullptr, &cache);
    EXPECT_EQ(cache.relu_out.rows(), 28 * 3);
    EXPECT_EQ(cache.relu_out.cols(), cfg.conv_filters);
    EXPECT_EQ(cache.gates.size(), 28u);
}

TEST(Forward, InferenceModeIsBitwiseRepeatable) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg, 5);
    const auto x = random_batch<float>(4, cfg, 3);
    const auto a = forward(params, cfg, x, false);
    const auto b = forward(params, cfg, x, false);
    EXPECT_EQ(a, b);
}

TEST(Forward, TrainModeWithDropoutNeedsRng) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg, 5);
    const auto x = random_batch<float>(2, cfg, 3);
    EXPECT_THROW(forward(params, cfg, x, true), ValidationError);
    Rng rng(1);
    EXPECT_NO_THROW(forward(params, cfg, x, true, &rng));
}

TEST(Forward, ShapeMismatchRejected) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg, 5);
    MatX<float> bad(2, 10);
    bad.setZero();
    EXPECT_THROW(forward(params, cfg, bad, false), ValidationError);
}

TEST(Loss, UniformPredictionIsLogFour) {
    const ModelConfig cfg = tiny_config();
    ModelParameters<double> zero;
    zero.allocate_zero(cfg);
    MatX<double> probs(6, 4);
    probs.setConstant(0.25);
    const std::vector<int> labels = {0, 1, 2, 3, 0, 1};
    EXPECT_NEAR(loss(probs, labels, zero, 0.0), std::log(4.0), 1e-12);
}

TEST(Loss, PerfectPredictionApproachesZero) {
    const ModelConfig cfg = tiny_config();
    ModelParameters<double> zero;
    zero.allocate_zero(cfg);
    MatX<double> probs(2, 4);
    probs.setZero();
    probs(0, 2) = 1.0;
    probs(1, 0) = 1.0;
    EXPECT_NEAR(loss(probs, {2, 0}, zero, 0.0), 0.0, 1e-9);
}

TEST(Loss, L2StrictlyIncreasesWithNonzeroWeights) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<double>(cfg, 8);
    MatX<double> probs(3, 4);
    probs.setConstant(0.25);
    const std::vector<int> labels = {0, 1, 2};
    const double without = loss(probs, labels, params, 0.0);
    const double with = loss(probs, labels, params, 0.01);
    EXPECT_GT(with, without);
}

TEST(Dropout, InvertedScalingIsUnbiasedOnLinearProbe) {
    // 1-layer surrogate: mean over many masks of dropout(x) equals x.
    const double rate = 0.3;
    Rng rng(424242);
    MatX<double> x(1, 64);
    x.setOnes();
    MatX<double> mean = MatX<double>::Zero(1, 64);
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        const auto mask = dropout_mask<double>(1, 64, rate, rng);
        mean += x.cwiseProduct(mask);
    }
    mean /= static_cast<double>(trials);
    for (Eigen::Index c = 0; c < mean.cols(); ++c) EXPECT_NEAR(mean(0, c), 1.0, 0.05);
}

TEST(Predict, ConfidenceBoundsAndDeterminism) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg, 77);
    std::vector<FeatureWindow> windows(9);
    Rng rng(4);
    for (auto& w : windows)
        for (auto& v : w.values) v = static_cast<float>(rng.uniform(-2, 2));
    const auto a = predict(params, cfg, windows);
    const auto b = predict(params, cfg, windows);
    ASSERT_EQ(a.size(), 9u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_GE(a[i].confidence, 0.25);
        EXPECT_LE(a[i].confidence, 1.0);
        EXPECT_EQ(a[i].label, b[i].label);
        EXPECT_EQ(a[i].confidence, b[i].confidence);
    }
}

TEST(Predict, AgreesWithForwardArgmax) {
    const ModelConfig cfg = tiny_config();
    const auto params = init_model<float>(cfg, 13);
    std::vector<FeatureWindow> windows(25);
    Rng rng(6);
    for (auto& w : windows)
        for (auto& v : w.values) v = static_cast<float>(rng.uniform(-2, 2));
    const auto preds = predict(params, cfg, windows);
    const auto batch = batch_from_windows<float>(windows, cfg);
    const auto probs = forward(params, cfg, batch, false);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        int best = 0;
        for (int c = 0; c < 4; ++c)
            if (probs(Eigen::Index(i), c) >= probs(Eigen::Index(i), best)) best = c;
        EXPECT_EQ(static_cast<int>(preds[i].label), best);
        EXPECT_FLOAT_EQ(static_cast<float>(preds[i].confidence), probs(Eigen::Index(i), best));
    }
}
