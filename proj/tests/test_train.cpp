#include <gtest/gtest.h>

#include "bioenv/train.hpp"

using namespace bioenv;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.conv_filters = 8;
    cfg.lstm_units = 12;
    return cfg;
}

// 200-window toy set dominated by two classes: class from the sign of the
// mean of feature 0, plus a little noise in the other channels.
LabeledDataset toy_dataset(std::uint64_t seed) {
    LabeledDataset ds;
    ds.subjects = {"s1", "s2", "s3", "s4"};
    Rng rng(seed);
    for (int i = 0; i < 200; ++i) {
        FeatureWindow w;
        w.subject_id = ds.subjects[static_cast<std::size_t>(i) % ds.subjects.size()];
        w.start_index = static_cast<std::size_t>(i);
        const bool high = rng.bernoulli(0.5);
        const double level = high ? 1.0 : -1.0;
        for (int t = 0; t < kWindowSteps; ++t)
            for (int f = 0; f < kNumFeatures; ++f) {
                const double base = f == 0 ? level : 0.0;
                w.values[static_cast<std::size_t>(t) * kNumFeatures + f] =
                    static_cast<float>(base + rng.uniform(-0.3, 0.3));
            }
        w.label = high ? RiskLabel::LimitAccess : RiskLabel::RunAsUsual;
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

std::vector<std::size_t> window_indices(const LabeledDataset& ds, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out;
    for (std::size_t i = begin; i < end; ++i) out.push_back(i);
    return out;
}

} // namespace

TEST(Train, LossDecreasesOnToySet) {
    const LabeledDataset ds = toy_dataset(1);
    TrainingConfig tc;
    tc.max_epochs = 5;
    tc.batch_size = 32;
    tc.seed = 9;
    const TrainResult result = train_on_indices(ds, window_indices(ds, 0, 160),
                                                window_indices(ds, 160, 200), tiny_config(), tc);
    ASSERT_EQ(result.history.size(), 5u);
    for (std::size_t e = 1; e < result.history.size(); ++e)
        EXPECT_LE(result.history[e].train_loss, result.history[e - 1].train_loss + 0.05)
            << "epoch " << e;
    // separable toy data should be essentially solved
    EXPECT_GE(result.best_val_accuracy, 0.9);
}

TEST(Train, DeterministicGivenSeed) {
    const LabeledDataset ds = toy_dataset(2);
    TrainingConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 32;
    tc.seed = 123;
    const auto a = train_on_indices(ds, window_indices(ds, 0, 160), window_indices(ds, 160, 200),
                                    tiny_config(), tc);
    const auto b = train_on_indices(ds, window_indices(ds, 0, 160), window_indices(ds, 160, 200),
                                    tiny_config(), tc);
    EXPECT_EQ(a.bundle.params.conv_kernel, b.bundle.params.conv_kernel);
    EXPECT_EQ(a.bundle.params.lstm_w, b.bundle.params.lstm_w);
    EXPECT_EQ(a.bundle.params.lstm_u, b.bundle.params.lstm_u);
    EXPECT_EQ(a.bundle.params.dense_w, b.bundle.params.dense_w);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
        EXPECT_EQ(a.history[e].val_accuracy, b.history[e].val_accuracy);
    }
}

TEST(Train, DivergenceAbortsWithDiagnostic) {
    const LabeledDataset ds = toy_dataset(3);
    TrainingConfig tc;
    tc.max_epochs = 4;
    tc.batch_size = 32;
    tc.learning_rate = 1e18; // guaranteed blow-up
    try {
        train_on_indices(ds, window_indices(ds, 0, 160), window_indices(ds, 160, 200),
                         tiny_config(), tc);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
    }
}

TEST(Train, EmptySplitRejected) {
    const LabeledDataset ds = toy_dataset(4);
    TrainingConfig tc;
    EXPECT_THROW(
        train_on_indices(ds, window_indices(ds, 0, 0), window_indices(ds, 0, 10), tiny_config(), tc),
        TrainingError);
}

TEST(Train, SubjectOverlapRejected) {
    const LabeledDataset ds = toy_dataset(5);
    DatasetSplit split;
    split.train_subjects = {"s1", "s2", "s3"};
    split.val_subjects = {"s3", "s4"};
    EXPECT_THROW(train(ds, split, tiny_config(), TrainingConfig{}), TrainingError);
}

TEST(Train, SubjectSplitTrainsAndReportsHistory) {
    const LabeledDataset ds = toy_dataset(6);
    DatasetSplit split;
    split.train_subjects = {"s1", "s2", "s3"};
    split.val_subjects = {"s4"};
    TrainingConfig tc;
    tc.max_epochs = 3;
    tc.batch_size = 32;
    const TrainResult result = train(ds, split, tiny_config(), tc);
    ASSERT_EQ(result.history.size(), 3u);
    for (const EpochStats& e : result.history) {
        EXPECT_TRUE(std::isfinite(e.train_loss));
        EXPECT_TRUE(std::isfinite(e.val_loss));
        EXPECT_GE(e.val_accuracy, 0.0);
        EXPECT_LE(e.val_accuracy, 1.0);
    }
    EXPECT_GE(result.best_epoch, 0);
    EXPECT_TRUE(result.bundle.params.all_finite());
}

TEST(Train, HistoryCsvFormat) {
    TrainingHistory history;
    history.push_back({0, 1.5, 0.4, 1.6, 0.35});
    history.push_back({1, 1.2, 0.5, 1.4, 0.45});
    const auto path = std::filesystem::temp_directory_path() / "bioenv_history_test.csv";
    write_history_csv(history, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,train_loss,train_acc,val_loss,val_acc");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 2);
    std::filesystem::remove(path);
}

TEST(Train, ClassWeightsAreInverseFrequency) {
    const std::vector<int> labels = {0, 0, 0, 1, 2, 2, 2, 2};
    const auto weights = detail::inverse_frequency_weights(labels, 4);
    // N / (K * n_c) with N=8, K=4
    EXPECT_DOUBLE_EQ(weights[0], 8.0 / (4.0 * 3.0));
    EXPECT_DOUBLE_EQ(weights[1], 8.0 / (4.0 * 1.0));
    EXPECT_DOUBLE_EQ(weights[2], 8.0 / (4.0 * 4.0));
    EXPECT_DOUBLE_EQ(weights[3], 0.0); // absent class
}
