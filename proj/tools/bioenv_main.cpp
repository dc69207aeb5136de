// bioenv — risk assessment over fused physiological + environmental telemetry.
//
// One binary, subcommands for the whole workflow:
//   corpus -> label -> train -> evaluate / cv / leakage        (offline)
//   serve-inference + serve-gateway + simulate + status        (live protocol)
//   assess                                                     (offline one-shot)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "bioenv/config.hpp"
#include "bioenv/experiments.hpp"
#include "bioenv/gateway.hpp"
#include "bioenv/inference_server.hpp"
#include "bioenv/metrics.hpp"
#include "bioenv/model_io.hpp"
#include "bioenv/session.hpp"
#include "bioenv/simulator.hpp"
#include "bioenv/stream_client.hpp"

namespace fs = std::filesystem;
using bioenv::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string label_slug(bioenv::RiskLabel label) {
    std::string s(bioenv::to_string(label));
    for (char& c : s) c = (c == ' ') ? '_' : static_cast<char>(std::tolower(c));
    return s;
}

void write_json_report(const fs::path& path, const Json& j) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw bioenv::IoError("cannot write report: " + path.string());
    out << j.dump(2) << '\n';
}

bioenv::LabeledDataset load_dataset_checked(const std::string& path) {
    if (!fs::exists(path))
        throw bioenv::ValidationError("labeled dataset not found: " + path +
                                      " (run the label command first)");
    return bioenv::load_dataset(path);
}

void print_histogram(const bioenv::LabeledDataset& ds) {
    const auto h = ds.label_histogram();
    std::printf("label histogram over %zu windows:\n", ds.windows.size());
    for (int c = 0; c < bioenv::kNumRiskLabels; ++c)
        std::printf("  %-22s %zu\n",
                    std::string(bioenv::kRiskLabelNames[c]).c_str(), h[c]);
}

// --- subcommand bodies -------------------------------------------------------

int cmd_corpus(const bioenv::CorpusSpec& spec, const std::string& out) {
    bioenv::generate_corpus(out, spec);
    const auto rows = static_cast<long long>(spec.n_subjects) *
                      static_cast<long long>(std::llround(spec.minutes_per_subject * 60.0));
    std::printf("wrote %s: %d subjects, %lld rows\n", out.c_str(), spec.n_subjects, rows);
    return kExitOk;
}

int cmd_label(const bioenv::RunConfig& cfg, const std::string& input, const std::string& out) {
    bioenv::CsvLoadReport load_report;
    const auto series = bioenv::load_csv(input, cfg.columns, &load_report);
    std::size_t dropped = 0;
    const bioenv::LabeledDataset ds = bioenv::build_labeled_dataset(series, cfg.scoring, &dropped);
    bioenv::save_dataset(ds, out);
    std::printf("loaded %zu subjects (%zu rows, %zu unparseable, %zu dropped in cleaning)\n",
                series.size(), load_report.rows_total, load_report.rows_bad, dropped);
    print_histogram(ds);
    std::printf("dataset digest: %016llx\n",
                static_cast<unsigned long long>(bioenv::dataset_digest(ds)));
    std::printf("wrote %s\n", out.c_str());
    return kExitOk;
}

int cmd_train(const bioenv::RunConfig& cfg, const std::string& dataset_path,
              const std::string& model_out, const std::string& history_out, double ratio) {
    const bioenv::LabeledDataset ds = load_dataset_checked(dataset_path);
    const bioenv::DatasetSplit split = bioenv::split_by_subject(ds.subjects, ratio, cfg.seed);
    std::printf("training on %zu subjects, validating on %zu (seed %llu)\n",
                split.train_subjects.size(), split.val_subjects.size(),
                static_cast<unsigned long long>(cfg.seed));
    const bioenv::TrainResult result = bioenv::train(ds, split, cfg.model, cfg.training);
    const std::string fingerprint = bioenv::save_model(result.bundle, model_out);
    if (!history_out.empty()) {
        fs::create_directories(fs::path(history_out).parent_path().empty()
                                   ? "."
                                   : fs::path(history_out).parent_path());
        bioenv::write_history_csv(result.history, history_out);
    }
    std::printf("best epoch %d, held-out accuracy %.4f\n", result.best_epoch,
                result.best_val_accuracy);
    std::printf("model %s (fingerprint %s)\n", model_out.c_str(), fingerprint.c_str());
    if (!history_out.empty()) std::printf("history %s\n", history_out.c_str());
    return kExitOk;
}

int cmd_evaluate(const bioenv::RunConfig& cfg, const std::string& dataset_path,
                 const std::string& model_path, bool all_windows, double ratio,
                 const std::string& report_path, const std::string& roc_dir) {
    const bioenv::LabeledDataset ds = load_dataset_checked(dataset_path);
    const bioenv::LoadedModel model = bioenv::load_model(model_path);

    std::vector<std::size_t> indices;
    Json scope;
    if (all_windows) {
        indices.resize(ds.windows.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        scope["windows"] = "all";
    } else {
        const bioenv::DatasetSplit split = bioenv::split_by_subject(ds.subjects, ratio, cfg.seed);
        indices = bioenv::windows_for_subjects(ds, split.val_subjects);
        scope["windows"] = "validation-subjects";
        scope["subjects"] = split.val_subjects;
    }
    if (indices.empty()) throw bioenv::ValidationError("evaluation window set is empty");

    std::vector<bioenv::FeatureWindow> windows;
    windows.reserve(indices.size());
    std::vector<bioenv::RiskLabel> truth;
    for (std::size_t i : indices) {
        windows.push_back(ds.windows[i]);
        truth.push_back(ds.windows[i].label);
    }
    const auto predictions =
        bioenv::predict(model.bundle.params, model.bundle.config, windows);
    std::vector<bioenv::RiskLabel> predicted;
    std::vector<std::array<double, bioenv::kNumRiskLabels>> probabilities;
    for (const auto& p : predictions) {
        predicted.push_back(p.label);
        probabilities.push_back(p.probabilities);
    }

    const bioenv::ConfusionMatrix cm = bioenv::confusion_matrix(truth, predicted);
    const bioenv::MetricsReport m = bioenv::metrics(cm);
    const bioenv::AucReport auc = bioenv::roc_auc_ovr(probabilities, truth);

    Json report;
    report["scope"] = scope;
    report["accuracy"] = m.accuracy;
    Json cm_json = Json::array();
    for (const auto& row : cm.counts) cm_json.push_back(row);
    report["confusion_matrix"] = cm_json;
    Json per_class;
    for (int c = 0; c < bioenv::kNumRiskLabels; ++c) {
        per_class[std::string(bioenv::kRiskLabelNames[c])] =
            Json{{"precision", m.per_class[c].precision},
                 {"recall", m.per_class[c].recall},
                 {"f1", m.per_class[c].f1},
                 {"precision_defined", m.per_class[c].precision_defined},
                 {"recall_defined", m.per_class[c].recall_defined},
                 {"auc", auc.defined[c] ? Json(auc.auc[c]) : Json(nullptr)}};
    }
    report["per_class"] = per_class;
    report["auc_macro"] = auc.macro;
    report["model_fingerprint"] = model.fingerprint;
    report["config_fingerprint"] =
        bioenv::config_fingerprint(model.bundle.config, cfg.training, bioenv::dataset_digest(ds));
    report["config"] = cfg.to_json();
    write_json_report(report_path, report);

    // ROC curve points, one CSV per class.
    fs::create_directories(roc_dir);
    for (int c = 0; c < bioenv::kNumRiskLabels; ++c) {
        std::vector<double> scores;
        std::vector<bool> positive;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            scores.push_back(probabilities[i][c]);
            positive.push_back(static_cast<int>(truth[i]) == c);
        }
        if (std::find(positive.begin(), positive.end(), true) == positive.end()) continue;
        const auto points = bioenv::roc_curve(scores, positive);
        const fs::path path =
            fs::path(roc_dir) / ("roc_" + label_slug(static_cast<bioenv::RiskLabel>(c)) + ".csv");
        std::ofstream out(path, std::ios::trunc);
        out << "fpr,tpr,threshold\n";
        out.precision(10);
        for (const auto& pt : points) out << pt.fpr << ',' << pt.tpr << ',' << pt.threshold << '\n';
    }

    std::printf("accuracy %.4f over %zu windows; macro AUC %.4f\n", m.accuracy, truth.size(),
                auc.macro);
    std::printf("report %s\n", report_path.c_str());
    return kExitOk;
}

int cmd_cv(const bioenv::RunConfig& cfg, const std::string& dataset_path, int k,
           const std::string& report_path) {
    const bioenv::LabeledDataset ds = load_dataset_checked(dataset_path);
    const bioenv::CVReport report = bioenv::run_cv(ds, cfg.model, cfg.training, k, cfg.seed);
    Json j = bioenv::to_json(report);
    j["config"] = cfg.to_json();
    write_json_report(report_path, j);
    for (std::size_t i = 0; i < report.fold_accuracy.size(); ++i)
        std::printf("fold %zu: accuracy %.4f (validation subjects: %zu)\n", i,
                    report.fold_accuracy[i], report.fold_subjects[i].size());
    std::printf("mean %.4f, std %.4f\n", report.mean, report.stddev);
    std::printf("report %s\n", report_path.c_str());
    return kExitOk;
}

int cmd_leakage(const bioenv::RunConfig& cfg, const std::string& dataset_path,
                const std::string& report_path) {
    const bioenv::LabeledDataset ds = load_dataset_checked(dataset_path);
    const std::string description = std::to_string(ds.subjects.size()) + " subjects, " +
                                    std::to_string(ds.windows.size()) + " windows";
    const bioenv::LeakageReport report =
        bioenv::leakage_experiment(ds, cfg.model, cfg.training, cfg.seed, description);
    Json j = bioenv::to_json(report);
    j["config"] = cfg.to_json();
    write_json_report(report_path, j);
    std::printf("random-window split accuracy: %.4f\n", report.accuracy_random_split);
    std::printf("subject split accuracy:       %.4f\n", report.accuracy_subject_split);
    std::printf("leakage gap:                  %+.4f\n", report.gap);
    std::printf("report %s\n", report_path.c_str());
    return kExitOk;
}

int cmd_serve_inference(const std::string& model_path, const std::string& host, int port) {
    bioenv::InferenceServer server(model_path);
    server.start(host, port);
    std::printf("inference engine listening on %s:%d (model fingerprint %s)\n", host.c_str(),
                port, server.fingerprint().c_str());
    std::fflush(stdout);
    server.wait();
    return kExitOk;
}

int cmd_serve_gateway(const bioenv::Gateway::Options& options, const std::string& host,
                      int port) {
    bioenv::Gateway gateway(options);
    gateway.start(host, port);
    std::printf("gateway listening on %s:%d (threshold %d, inference %s%s)\n", host.c_str(), port,
                options.threshold, options.inference_url.c_str(),
                options.single_session ? ", single-session" : "");
    std::fflush(stdout);
    gateway.wait();
    return kExitOk;
}

int cmd_simulate(const std::string& gateway_url, const std::string& scenario_name,
                 std::uint64_t seed, double rate_hz, double duration_s,
                 const std::string& subject, const std::string& capture_out) {
    const bioenv::Scenario scenario = bioenv::load_scenario(scenario_name, seed);
    bioenv::StreamOptions options;
    options.rate_hz = rate_hz;
    options.subject_id = subject;
    options.duration_s = duration_s;
    options.log = &std::cerr;
    std::ofstream capture;
    if (!capture_out.empty()) {
        capture.open(capture_out, std::ios::trunc);
        if (!capture) throw bioenv::IoError("cannot write capture file: " + capture_out);
        options.capture_csv = &capture;
    }
    const bioenv::StreamReport report =
        bioenv::stream_to_gateway(gateway_url, scenario, options);
    std::printf("sent %zu, acked %zu, failed %zu, max drift %.1f ms\n", report.sent, report.acked,
                report.failed, report.max_drift_ms);
    if (!report.completed) {
        std::fprintf(stderr, "stream aborted: gateway unreachable\n");
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_assess(const bioenv::RunConfig& cfg, const std::string& input,
               const std::string& model_path, const std::string& aggregation) {
    const auto samples = bioenv::session_from_csv(input, cfg.columns);
    const bioenv::LoadedModel model = bioenv::load_model(model_path);
    const bioenv::SessionVerdict verdict = bioenv::assess_session(
        model.bundle, model.fingerprint, samples, bioenv::aggregation_from_string(aggregation));
    std::printf("%s\n", bioenv::verdict_to_json(verdict).dump().c_str());
    return kExitOk;
}

void render_status(const Json& status) {
    const std::string state = status.value("state", "?");
    std::printf("session %s  state=%-10s  buffered %lld/%lld", status.value("session_id", "?").c_str(),
                state.c_str(), static_cast<long long>(status.value("buffered", 0)),
                static_cast<long long>(status.value("threshold", 0)));
    if (status.contains("verdict")) {
        const Json& v = status["verdict"];
        std::printf("  verdict=%s (confidence %.3f, %d windows)",
                    v.value("label", "?").c_str(), v.value("confidence", 0.0),
                    v.value("window_count", 0));
    }
    if (status.contains("error")) std::printf("  error=%s", status["error"].get<std::string>().c_str());
    std::printf("\n");
    std::fflush(stdout);
}

int cmd_status(const std::string& gateway_url, bool watch) {
    httplib::Client client(gateway_url);
    client.set_connection_timeout(2, 0);
    while (true) {
        const auto res = client.Get("/status");
        if (!res) {
            std::fprintf(stderr, "gateway unreachable at %s\n", gateway_url.c_str());
            return kExitRuntime;
        }
        const Json status = Json::parse(res->body);
        render_status(status);
        if (!watch) return kExitOk;
        if (status.value("state", "") == "Complete") return kExitOk;
        std::this_thread::sleep_for(std::chrono::seconds(1));
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk assessment over physiological + environmental sensor streams"};
    app.require_subcommand(1);

    // --config seeds the defaults below; explicit flags override it.
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string_view(argv[i]) == "--config") config_path = argv[i + 1];

    bioenv::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = bioenv::RunConfig::load(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }

    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", cfg.seed, "global random seed")->capture_default_str();
    bool verbose = false;
    app.add_flag("--verbose", verbose, "chattier output");

    // corpus
    auto* corpus = app.add_subcommand("corpus", "generate a synthetic multi-subject corpus CSV");
    bioenv::CorpusSpec corpus_spec;
    std::string corpus_out = "corpus.csv";
    corpus->add_option("--corpus-out,--out", corpus_out, "output CSV path")->capture_default_str();
    corpus->add_option("--subjects", corpus_spec.n_subjects, "number of subjects")
        ->capture_default_str();
    corpus->add_option("--minutes", corpus_spec.minutes_per_subject, "minutes per subject")
        ->capture_default_str();

    // label
    auto* label = app.add_subcommand("label", "run the preprocessing pipeline and label windows");
    std::string label_input;
    std::string label_out;
    label->add_option("--input", label_input, "input CSV (defaults to config paths.dataset_csv)");
    label->add_option("--out", label_out, "labeled dataset output (.benv)");

    // train
    auto* train = app.add_subcommand("train", "train the classifier on a labeled dataset");
    std::string train_dataset, train_model_out, train_history_out;
    double train_ratio = 0.8;
    train->add_option("--dataset", train_dataset, "labeled dataset (.benv)");
    train->add_option("--model-out", train_model_out, "model file output");
    train->add_option("--history-out", train_history_out, "training history CSV");
    train->add_option("--ratio", train_ratio, "train fraction of subjects")->capture_default_str();
    train->add_option("--epochs", cfg.training.max_epochs, "max training epochs");
    train->add_option("--batch-size", cfg.training.batch_size, "mini-batch size");
    train->add_option("--learning-rate", cfg.training.learning_rate, "optimizer step size");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "metrics and ROC/AUC for a trained model");
    std::string eval_dataset, eval_model, eval_report, eval_roc_dir;
    bool eval_all = false;
    double eval_ratio = 0.8;
    evaluate->add_option("--dataset", eval_dataset, "labeled dataset (.benv)");
    evaluate->add_option("--model", eval_model, "model file");
    evaluate->add_option("--report", eval_report, "JSON report path");
    evaluate->add_option("--roc-dir", eval_roc_dir, "directory for per-class ROC CSVs");
    evaluate->add_option("--ratio", eval_ratio, "train fraction used to re-derive the split")
        ->capture_default_str();
    evaluate->add_flag("--all", eval_all, "evaluate on all windows, not the held-out subjects");

    // cv
    auto* cv = app.add_subcommand("cv", "subject-grouped k-fold cross-validation");
    std::string cv_dataset, cv_report;
    int cv_k = 5;
    cv->add_option("--dataset", cv_dataset, "labeled dataset (.benv)");
    cv->add_option("--k", cv_k, "number of folds")->capture_default_str();
    cv->add_option("--report", cv_report, "JSON report path");
    cv->add_option("--epochs", cfg.training.max_epochs, "max training epochs per fold");

    // leakage
    auto* leakage = app.add_subcommand("leakage", "random-window vs subject split audit");
    std::string leakage_dataset, leakage_report;
    leakage->add_option("--dataset", leakage_dataset, "labeled dataset (.benv)");
    leakage->add_option("--report", leakage_report, "JSON report path");
    leakage->add_option("--epochs", cfg.training.max_epochs, "max training epochs per run");

    // serve-inference
    auto* serve_inf = app.add_subcommand("serve-inference", "start the model inference engine");
    std::string inf_model, inf_host = "0.0.0.0";
    serve_inf->add_option("--model", inf_model, "model file to load at startup");
    serve_inf->add_option("--port", cfg.inference_port, "listen port")->capture_default_str();
    serve_inf->add_option("--host", inf_host, "bind address")->capture_default_str();

    // serve-gateway
    auto* serve_gw = app.add_subcommand("serve-gateway", "start the buffering gateway");
    std::string gw_host = "0.0.0.0";
    bool gw_single_session = false;
    serve_gw->add_option("--port", cfg.gateway_port, "listen port")->capture_default_str();
    serve_gw->add_option("--host", gw_host, "bind address")->capture_default_str();
    serve_gw->add_option("--inference-url", cfg.inference_url, "inference engine base URL")
        ->capture_default_str();
    serve_gw->add_option("--threshold", cfg.gateway_threshold, "samples per session")
        ->capture_default_str();
    serve_gw->add_flag("--single-session", gw_single_session,
                       "ignore telemetry after the first session");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "stream scenario telemetry to the gateway");
    std::string sim_scenario = "two-phase", sim_subject = "sim", sim_capture;
    double sim_rate = 1.0, sim_duration = -1.0;
    simulate->add_option("--gateway-url", cfg.gateway_url, "gateway base URL")
        ->capture_default_str();
    simulate->add_option("--scenario", sim_scenario, "builtin name or scenario JSON file")
        ->capture_default_str();
    simulate->add_option("--rate-hz", sim_rate, "transmission rate")->capture_default_str();
    simulate->add_option("--duration-s", sim_duration, "stop after this many samples (<=0: all)");
    simulate->add_option("--subject", sim_subject, "subject id tag")->capture_default_str();
    simulate->add_option("--capture-out", sim_capture, "also write streamed samples to this CSV");

    // assess
    auto* assess = app.add_subcommand("assess", "offline one-shot session verdict (no servers)");
    std::string assess_input, assess_model, assess_aggregation = "majority";
    assess->add_option("--input", assess_input, "session CSV")->required();
    assess->add_option("--model", assess_model, "model file");
    assess->add_option("--aggregation", assess_aggregation, "majority | max_risk")
        ->capture_default_str();

    // status
    auto* status = app.add_subcommand("status", "render gateway status");
    bool status_watch = false;
    status->add_option("--gateway-url", cfg.gateway_url, "gateway base URL")
        ->capture_default_str();
    status->add_flag("--watch", status_watch, "poll once per second until the verdict lands");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*corpus) {
            corpus_spec.seed = cfg.seed;
            return cmd_corpus(corpus_spec, corpus_out);
        }
        if (*label) {
            if (label_input.empty()) label_input = cfg.dataset_csv;
            if (label_input.empty())
                throw bioenv::ValidationError("label: no input CSV (use --input or config paths.dataset_csv)");
            if (label_out.empty()) label_out = cfg.labeled_dataset;
            return cmd_label(cfg, label_input, label_out);
        }
        if (*train) {
            if (train_dataset.empty()) train_dataset = cfg.labeled_dataset;
            if (train_model_out.empty()) train_model_out = cfg.model_file;
            if (train_history_out.empty())
                train_history_out = (fs::path(cfg.reports_dir) / "history.csv").string();
            cfg.training.seed = cfg.seed;
            return cmd_train(cfg, train_dataset, train_model_out, train_history_out, train_ratio);
        }
        if (*evaluate) {
            if (eval_dataset.empty()) eval_dataset = cfg.labeled_dataset;
            if (eval_model.empty()) eval_model = cfg.model_file;
            if (eval_report.empty())
                eval_report = (fs::path(cfg.reports_dir) / "evaluation.json").string();
            if (eval_roc_dir.empty()) eval_roc_dir = cfg.reports_dir;
            return cmd_evaluate(cfg, eval_dataset, eval_model, eval_all, eval_ratio, eval_report,
                                eval_roc_dir);
        }
        if (*cv) {
            if (cv_dataset.empty()) cv_dataset = cfg.labeled_dataset;
            if (cv_report.empty()) cv_report = (fs::path(cfg.reports_dir) / "cv.json").string();
            cfg.training.seed = cfg.seed;
            return cmd_cv(cfg, cv_dataset, cv_k, cv_report);
        }
        if (*leakage) {
            if (leakage_dataset.empty()) leakage_dataset = cfg.labeled_dataset;
            if (leakage_report.empty())
                leakage_report = (fs::path(cfg.reports_dir) / "leakage.json").string();
            return cmd_leakage(cfg, leakage_dataset, leakage_report);
        }
        if (*serve_inf) {
            if (inf_model.empty()) inf_model = cfg.model_file;
            return cmd_serve_inference(inf_model, inf_host, cfg.inference_port);
        }
        if (*serve_gw) {
            bioenv::Gateway::Options options;
            options.inference_url = cfg.inference_url;
            options.threshold = cfg.gateway_threshold;
            options.single_session = gw_single_session;
            return cmd_serve_gateway(options, gw_host, cfg.gateway_port);
        }
        if (*simulate)
            return cmd_simulate(cfg.gateway_url, sim_scenario, cfg.seed, sim_rate, sim_duration,
                                sim_subject, sim_capture);
        if (*assess) {
            if (assess_model.empty()) assess_model = cfg.model_file;
            return cmd_assess(cfg, assess_input, assess_model, assess_aggregation);
        }
        if (*status) return cmd_status(cfg.gateway_url, status_watch);
        throw bioenv::ValidationError("no subcommand given");
    } catch (const bioenv::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
