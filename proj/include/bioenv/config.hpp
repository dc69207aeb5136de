#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "bioenv/json_codec.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/train.hpp"

namespace bioenv {

/// Effective run configuration: file values overridden by CLI flags. Parsing
/// is fail-fast; unknown keys anywhere are rejected. The effective config is
/// echoed into every report for provenance.
struct RunConfig {
    // paths
    std::string dataset_csv;
    std::string labeled_dataset = "labeled.benv";
    std::string model_file = "model.benv";
    std::string reports_dir = "reports";

    ScoringConfig scoring = ScoringConfig::defaults();
    ModelConfig model;
    TrainingConfig training;
    ColumnMapping columns;

    // services
    int inference_port = 5000;
    int gateway_port = 8080;
    int gateway_threshold = 180;
    std::string inference_url = "http://localhost:5000";
    std::string gateway_url = "http://localhost:8080";

    std::uint64_t seed = 42;

    static RunConfig from_json(const Json& j) {
        detail::reject_unknown_keys(
            j, {"paths", "scoring", "model", "training", "columns", "services", "seed"},
            "config");
        RunConfig cfg;
        if (j.contains("paths")) {
            const Json& p = j["paths"];
            detail::reject_unknown_keys(
                p, {"dataset_csv", "labeled_dataset", "model_file", "reports_dir"},
                "config.paths");
            detail::assign_if(p, "dataset_csv", cfg.dataset_csv);
            detail::assign_if(p, "labeled_dataset", cfg.labeled_dataset);
            detail::assign_if(p, "model_file", cfg.model_file);
            detail::assign_if(p, "reports_dir", cfg.reports_dir);
        }
        if (j.contains("scoring")) cfg.scoring = scoring_config_from_json(j["scoring"]);
        if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);
        if (j.contains("training")) cfg.training = training_config_from_json(j["training"]);
        if (j.contains("columns")) {
            const Json& c = j["columns"];
            detail::reject_unknown_keys(c,
                {"subject_id", "timestamp_s", "heart_rate_bpm", "gsr_us", "temperature_c",
                 "light_lux", "sound_db"},
                "config.columns");
            detail::assign_if(c, "subject_id", cfg.columns.subject_id);
            detail::assign_if(c, "timestamp_s", cfg.columns.timestamp_s);
            for (int f = 0; f < kNumFeatures; ++f)
                detail::assign_if(c, std::string(kFeatureNames[f]).c_str(),
                                  cfg.columns.features[f]);
        }
        if (j.contains("services")) {
            const Json& s = j["services"];
            detail::reject_unknown_keys(s,
                {"inference_port", "gateway_port", "gateway_threshold", "inference_url",
                 "gateway_url"},
                "config.services");
            detail::assign_if(s, "inference_port", cfg.inference_port);
            detail::assign_if(s, "gateway_port", cfg.gateway_port);
            detail::assign_if(s, "gateway_threshold", cfg.gateway_threshold);
            detail::assign_if(s, "inference_url", cfg.inference_url);
            detail::assign_if(s, "gateway_url", cfg.gateway_url);
        }
        detail::assign_if(j, "seed", cfg.seed);
        return cfg;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config file not found: " + path.string());
        Json j;
        try {
            in >> j;
        } catch (const Json::parse_error& e) {
            throw ValidationError("config file is not valid JSON: " + std::string(e.what()));
        }
        return from_json(j);
    }

    Json to_json() const {
        Json j;
        j["paths"] = Json{{"dataset_csv", dataset_csv},
                          {"labeled_dataset", labeled_dataset},
                          {"model_file", model_file},
                          {"reports_dir", reports_dir}};
        j["scoring"] = bioenv::to_json(scoring);
        j["model"] = bioenv::to_json(model);
        j["training"] = bioenv::to_json(training);
        Json c;
        c["subject_id"] = columns.subject_id;
        c["timestamp_s"] = columns.timestamp_s;
        for (int f = 0; f < kNumFeatures; ++f)
            c[std::string(kFeatureNames[f])] = columns.features[f];
        j["columns"] = std::move(c);
        j["services"] = Json{{"inference_port", inference_port},
                             {"gateway_port", gateway_port},
                             {"gateway_threshold", gateway_threshold},
                             {"inference_url", inference_url},
                             {"gateway_url", gateway_url}};
        j["seed"] = seed;
        return j;
    }
};

} // namespace bioenv
