#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "bioenv/pipeline.hpp"
#include "bioenv/simulator.hpp"

using namespace bioenv;
namespace fs = std::filesystem;

namespace {

SensorSample sample_at(std::int64_t t, double hr, double gsr = 2.0, double temp = 22.0,
                       double lux = 5000.0, double sound = 40.0) {
    SensorSample s;
    s.subject_id = "a";
    s.timestamp_s = t;
    s.heart_rate_bpm = hr;
    s.gsr_us = gsr;
    s.temperature_c = temp;
    s.light_lux = lux;
    s.sound_db = sound;
    return s;
}

SubjectSeries series_of(std::vector<SensorSample> samples) {
    SubjectSeries s;
    s.subject_id = samples.empty() ? "a" : samples.front().subject_id;
    s.samples = std::move(samples);
    return s;
}

fs::path temp_path(const char* name) {
    return fs::temp_directory_path() / (std::string("bioenv_pipeline_") + name);
}

} // namespace

TEST(Clean, IdentityWhenNoNulls) {
    auto s = series_of({sample_at(0, 70), sample_at(1, 71), sample_at(2, 72)});
    CleanReport report;
    const SubjectSeries cleaned = clean(s, &report);
    EXPECT_EQ(report.dropped, 0u);
    ASSERT_EQ(cleaned.samples.size(), 3u);
    EXPECT_EQ(cleaned.samples[1].heart_rate_bpm, 71.0);
}

TEST(Clean, ListwiseDeletionAndReindex) {
    auto middle = sample_at(1, 71);
    middle.gsr_us = std::nan("");
    auto s = series_of({sample_at(0, 70), middle, sample_at(2, 72)});
    CleanReport report;
    const SubjectSeries cleaned = clean(s, &report);
    EXPECT_EQ(report.dropped, 1u);
    ASSERT_EQ(cleaned.samples.size(), 2u);
    EXPECT_EQ(cleaned.samples[0].timestamp_s, 0);
    EXPECT_EQ(cleaned.samples[1].timestamp_s, 1);
    EXPECT_EQ(cleaned.samples[1].heart_rate_bpm, 72.0);
}

TEST(Clean, AllNullSeriesFails) {
    auto bad = sample_at(0, std::nan(""));
    EXPECT_THROW(clean(series_of({bad})), ValidationError);
}

TEST(ZScore, HandComputedExample) {
    auto s = series_of({sample_at(0, 1.0), sample_at(1, 2.0), sample_at(2, 3.0)});
    const SubjectSeries z = zscore_per_subject(s);
    EXPECT_NEAR(z.samples[0].heart_rate_bpm, -1.224744871391589, 1e-12);
    EXPECT_NEAR(z.samples[1].heart_rate_bpm, 0.0, 1e-12);
    EXPECT_NEAR(z.samples[2].heart_rate_bpm, 1.224744871391589, 1e-12);
}

TEST(ZScore, ConstantFeatureMapsToZeros) {
    auto s = series_of({sample_at(0, 70), sample_at(1, 70), sample_at(2, 70)});
    const SubjectSeries z = zscore_per_subject(s);
    for (const auto& sample : z.samples) EXPECT_EQ(sample.heart_rate_bpm, 0.0);
}

TEST(ZScore, StandardizationContract) {
    // On a non-trivial series, the standardized stats are 0 / 1 and a second
    // pass changes (almost) nothing.
    const auto corpus = generate_corpus_series({.n_subjects = 1, .minutes_per_subject = 3.0, .seed = 5});
    const SubjectSeries cleaned = clean(corpus[0]);
    const SubjectSeries z = zscore_per_subject(cleaned);
    for (int f = 0; f < kNumFeatures; ++f) {
        EXPECT_LT(std::abs(z.stats[f].mean), 1e-9);
        EXPECT_LT(std::abs(z.stats[f].stddev - 1.0), 1e-9);
    }
    const SubjectSeries z2 = zscore_per_subject(z);
    for (int f = 0; f < kNumFeatures; ++f) {
        EXPECT_LT(std::abs(z2.stats[f].mean), 1e-9);
        EXPECT_LT(std::abs(z2.stats[f].stddev - 1.0), 1e-9);
    }
}

TEST(MinMax, Examples) {
    const std::vector<double> v = {60, 80, 100};
    const auto out = minmax_normalize(v);
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_DOUBLE_EQ(out[1], 0.5);
    EXPECT_DOUBLE_EQ(out[2], 1.0);

    const std::vector<double> flat = {70, 70};
    const auto neutral = minmax_normalize(flat);
    EXPECT_DOUBLE_EQ(neutral[0], 0.5);
    EXPECT_DOUBLE_EQ(neutral[1], 0.5);
}

TEST(MinMax, ExtremesHitZeroAndOne) {
    Rng rng(3);
    for (int it = 0; it < 50; ++it) {
        std::vector<double> v;
        for (int i = 0; i < 20; ++i) v.push_back(rng.uniform(50, 120));
        v.push_back(40.0);  // forced min
        v.push_back(150.0); // forced max
        const auto out = minmax_normalize(v);
        EXPECT_DOUBLE_EQ(*std::min_element(out.begin(), out.end()), 0.0);
        EXPECT_DOUBLE_EQ(*std::max_element(out.begin(), out.end()), 1.0);
    }
}

TEST(Segment, WindowCountLaw) {
    std::vector<SensorSample> samples;
    for (int t = 0; t < 30; ++t) samples.push_back(sample_at(t, 70.0 + t));
    EXPECT_EQ(segment(series_of(samples)).size(), 1u);

    samples.pop_back();
    EXPECT_THROW(segment(series_of(samples)), ValidationError);

    std::vector<SensorSample> long_series;
    for (int t = 0; t < 2580; ++t) long_series.push_back(sample_at(t, 70.0 + (t % 13)));
    EXPECT_EQ(segment(series_of(long_series)).size(), 2551u);
}

TEST(Segment, WindowContentsMatchSeries) {
    std::vector<SensorSample> samples;
    for (int t = 0; t < 40; ++t) samples.push_back(sample_at(t, static_cast<double>(t)));
    const auto windows = segment(series_of(samples));
    ASSERT_EQ(windows.size(), 11u);
    EXPECT_EQ(windows[4].start_index, 4u);
    // window 4, step 7, feature hr == series sample 11
    EXPECT_FLOAT_EQ(windows[4].values[7 * kNumFeatures + kFeatureHr], 11.0f);
}

TEST(LabelWindows, LabelsComeFromRawValues) {
    const auto corpus = generate_corpus_series({.n_subjects = 2, .minutes_per_subject = 3.0, .seed = 11});
    const ScoringConfig cfg = ScoringConfig::defaults();
    const LabeledDataset ds = build_labeled_dataset(corpus, cfg);

    // Relabel via an independent pass over raw cleaned series; z-scoring the
    // features must not change any label.
    std::size_t checked = 0;
    for (const SubjectSeries& raw : corpus) {
        const SubjectSeries cleaned = clean(raw);
        const auto norm_hr = minmax_normalize(extract_feature(cleaned, kFeatureHr));
        const auto norm_gsr = minmax_normalize(extract_feature(cleaned, kFeatureGsr));
        for (const FeatureWindow& w : ds.windows) {
            if (w.subject_id != cleaned.subject_id) continue;
            const auto breakdown = assess_window(
                std::span<const SensorSample>(cleaned.samples).subspan(w.start_index, kWindowSteps),
                std::span<const double>(norm_hr).subspan(w.start_index, kWindowSteps),
                std::span<const double>(norm_gsr).subspan(w.start_index, kWindowSteps), cfg);
            EXPECT_EQ(breakdown.label, w.label);
            ++checked;
        }
    }
    EXPECT_EQ(checked, ds.windows.size());
}

TEST(SplitBySubject, FloorRatioAndDisjoint) {
    std::vector<std::string> subjects;
    for (int i = 0; i < 14; ++i) subjects.push_back("S" + std::to_string(i));
    const DatasetSplit split = split_by_subject(subjects, 0.8, 7);
    EXPECT_EQ(split.train_subjects.size(), 11u);
    EXPECT_EQ(split.val_subjects.size(), 3u);

    std::set<std::string> train(split.train_subjects.begin(), split.train_subjects.end());
    for (const auto& v : split.val_subjects) EXPECT_EQ(train.count(v), 0u);

    const DatasetSplit again = split_by_subject(subjects, 0.8, 7);
    EXPECT_EQ(split.train_subjects, again.train_subjects);
    EXPECT_EQ(split.val_subjects, again.val_subjects);

    const DatasetSplit other = split_by_subject(subjects, 0.8, 8);
    EXPECT_NE(split.val_subjects, other.val_subjects); // overwhelmingly likely
}

TEST(SplitBySubject, TwoSubjects) {
    const DatasetSplit split = split_by_subject({"a", "b"}, 0.8, 1);
    EXPECT_EQ(split.train_subjects.size(), 1u);
    EXPECT_EQ(split.val_subjects.size(), 1u);
    EXPECT_THROW(split_by_subject({"a"}, 0.8, 1), ValidationError);
}

TEST(RandomWindowSplit, SizesAndDeterminism) {
    const WindowSplit split = random_window_split(100, 0.8, 3);
    EXPECT_EQ(split.train_indices.size(), 80u);
    EXPECT_EQ(split.test_indices.size(), 20u);
    const WindowSplit again = random_window_split(100, 0.8, 3);
    EXPECT_EQ(split.train_indices, again.train_indices);
    EXPECT_THROW(random_window_split(1, 0.8, 3), ValidationError);
}

TEST(RandomWindowSplit, LeaksSubjectsAcrossSides) {
    // For a 2-subject corpus both subjects show up on both sides for every
    // seed tried: the split is deliberately subject-blind.
    const auto corpus = generate_corpus_series({.n_subjects = 2, .minutes_per_subject = 2.0, .seed = 2});
    const LabeledDataset ds = build_labeled_dataset(corpus, ScoringConfig::defaults());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const WindowSplit split = random_window_split(ds.windows.size(), 0.8, seed);
        std::set<std::string> train_subjects, test_subjects;
        for (auto i : split.train_indices) train_subjects.insert(ds.windows[i].subject_id);
        for (auto i : split.test_indices) test_subjects.insert(ds.windows[i].subject_id);
        EXPECT_EQ(train_subjects.size(), 2u);
        EXPECT_EQ(test_subjects.size(), 2u);
    }
}

// --- CSV ingestion -----------------------------------------------------------

TEST(LoadCsv, SmallValidFile) {
    const fs::path path = temp_path("small.csv");
    {
        std::ofstream out(path);
        out << "subject_id,timestamp_s,heart_rate_bpm,gsr_us,temperature_c,light_lux,sound_db\n"
            << "a,0,70,2,22,5000,40\n"
            << "a,1,71,2.1,22,5000,40\n"
            << "a,2,72,2.2,22,5000,40\n";
    }
    const auto series = load_csv(path);
    ASSERT_EQ(series.size(), 1u);
    EXPECT_EQ(series[0].samples.size(), 3u);
    EXPECT_EQ(series[0].samples[2].heart_rate_bpm, 72.0);
    fs::remove(path);
}

TEST(LoadCsv, MissingColumnNamesIt) {
    const fs::path path = temp_path("missing_col.csv");
    {
        std::ofstream out(path);
        out << "subject_id,timestamp_s,heart_rate_bpm,gsr_us,temperature_c,light_lux\n"
            << "a,0,70,2,22,5000\n";
    }
    try {
        load_csv(path);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("sound_db"), std::string::npos);
    }
    fs::remove(path);
}

TEST(LoadCsv, NullCellsSurviveUntilCleaning) {
    const fs::path path = temp_path("nulls.csv");
    {
        std::ofstream out(path);
        out << "subject_id,timestamp_s,heart_rate_bpm,gsr_us,temperature_c,light_lux,sound_db\n"
            << "a,0,70,,22,5000,40\n"
            << "a,1,71,2.0,22,5000,40\n"
            << "garbage row without commas\n";
    }
    CsvLoadReport report;
    const auto series = load_csv(path, {}, &report);
    EXPECT_EQ(report.rows_total, 3u);
    EXPECT_EQ(report.rows_bad, 1u);
    ASSERT_EQ(series.size(), 1u);
    ASSERT_EQ(series[0].samples.size(), 2u);
    EXPECT_TRUE(std::isnan(series[0].samples[0].gsr_us));
    CleanReport creport;
    const SubjectSeries cleaned = clean(series[0], &creport);
    EXPECT_EQ(creport.dropped, 1u);
    fs::remove(path);
}

TEST(LoadCsv, FourteenSubjectCorpus) {
    const fs::path path = temp_path("corpus14.csv");
    generate_corpus(path, {.n_subjects = 14, .minutes_per_subject = 1.0, .seed = 9});
    const auto series = load_csv(path);
    EXPECT_EQ(series.size(), 14u);
    for (const auto& s : series) EXPECT_EQ(s.samples.size(), 60u);
    fs::remove(path);
}

TEST(LoadCsv, MissingFileFails) {
    EXPECT_THROW(load_csv("/nonexistent/nowhere.csv"), IoError);
}

TEST(Pipeline, DeterministicEndToEnd) {
    const auto corpus = generate_corpus_series({.n_subjects = 3, .minutes_per_subject = 2.0, .seed = 21});
    const LabeledDataset a = build_labeled_dataset(corpus, ScoringConfig::defaults());
    const LabeledDataset b = build_labeled_dataset(corpus, ScoringConfig::defaults());
    ASSERT_EQ(a.windows.size(), b.windows.size());
    for (std::size_t i = 0; i < a.windows.size(); ++i) {
        EXPECT_EQ(a.windows[i].subject_id, b.windows[i].subject_id);
        EXPECT_EQ(a.windows[i].start_index, b.windows[i].start_index);
        EXPECT_EQ(a.windows[i].label, b.windows[i].label);
        EXPECT_EQ(a.windows[i].values, b.windows[i].values);
    }
}
