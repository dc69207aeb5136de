#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "bioenv/errors.hpp"
#include "bioenv/model.hpp"
#include "bioenv/risk.hpp"
#include "bioenv/train.hpp"

namespace bioenv {

using Json = nlohmann::json;

namespace detail {

/// Fail-fast config validation: unknown keys are rejected, not ignored.
inline void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed,
                                const std::string& context) {
    if (!obj.is_object()) throw ValidationError(context + ": expected a JSON object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) { ok = true; break; }
        if (!ok) throw ValidationError(context + ": unknown key '" + key + "'");
    }
}

template <typename T>
void assign_if(const Json& obj, const char* key, T& out) {
    if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

} // namespace detail

// --- ScoringConfig ---------------------------------------------------------

inline Json scoring_bands_to_json(const std::vector<ScoreBand>& bands) {
    Json arr = Json::array();
    for (const ScoreBand& b : bands) {
        Json j;
        j["upper_bound"] = std::isinf(b.upper_bound) ? Json(nullptr) : Json(b.upper_bound);
        j["score"] = b.score;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<ScoreBand> scoring_bands_from_json(const Json& arr, const std::string& context) {
    if (!arr.is_array()) throw ValidationError(context + ": expected an array of bands");
    std::vector<ScoreBand> bands;
    for (const Json& j : arr) {
        detail::reject_unknown_keys(j, {"upper_bound", "score"}, context);
        ScoreBand b;
        b.upper_bound = j.at("upper_bound").is_null()
                            ? std::numeric_limits<double>::infinity()
                            : j.at("upper_bound").get<double>();
        b.score = j.at("score").get<double>();
        bands.push_back(b);
    }
    return bands;
}

inline Json to_json(const ScoringConfig& cfg) {
    Json j;
    j["temp_bands"] = scoring_bands_to_json(cfg.temp_bands);
    j["sound_bands"] = scoring_bands_to_json(cfg.sound_bands);
    j["light_bands"] = scoring_bands_to_json(cfg.light_bands);
    j["w_hr"] = cfg.w_hr;
    j["w_gsr"] = cfg.w_gsr;
    j["w_stress"] = cfg.w_stress;
    j["w_cognitive_complement"] = cfg.w_cognitive_complement;
    j["label_thresholds"] = cfg.label_thresholds;
    return j;
}

inline ScoringConfig scoring_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
        {"temp_bands", "sound_bands", "light_bands", "w_hr", "w_gsr", "w_stress",
         "w_cognitive_complement", "label_thresholds"},
        "scoring");
    ScoringConfig cfg = ScoringConfig::defaults();
    if (j.contains("temp_bands")) cfg.temp_bands = scoring_bands_from_json(j["temp_bands"], "scoring.temp_bands");
    if (j.contains("sound_bands")) cfg.sound_bands = scoring_bands_from_json(j["sound_bands"], "scoring.sound_bands");
    if (j.contains("light_bands")) cfg.light_bands = scoring_bands_from_json(j["light_bands"], "scoring.light_bands");
    detail::assign_if(j, "w_hr", cfg.w_hr);
    detail::assign_if(j, "w_gsr", cfg.w_gsr);
    detail::assign_if(j, "w_stress", cfg.w_stress);
    detail::assign_if(j, "w_cognitive_complement", cfg.w_cognitive_complement);
    if (j.contains("label_thresholds")) {
        const auto t = j["label_thresholds"].get<std::vector<double>>();
        if (t.size() != 3) throw ValidationError("scoring.label_thresholds: expected 3 values");
        std::copy(t.begin(), t.end(), cfg.label_thresholds.begin());
    }
    cfg.validate();
    return cfg;
}

// --- ModelConfig ------------------------------------------------------------

inline Json to_json(const ModelConfig& cfg) {
    return Json{{"input_steps", cfg.input_steps},
                {"input_features", cfg.input_features},
                {"conv_filters", cfg.conv_filters},
                {"conv_kernel", cfg.conv_kernel},
                {"lstm_units", cfg.lstm_units},
                {"num_classes", cfg.num_classes},
                {"l2_lambda", cfg.l2_lambda},
                {"dropout_post_cnn", cfg.dropout_post_cnn},
                {"dropout_post_lstm", cfg.dropout_post_lstm}};
}

inline ModelConfig model_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
        {"input_steps", "input_features", "conv_filters", "conv_kernel", "lstm_units",
         "num_classes", "l2_lambda", "dropout_post_cnn", "dropout_post_lstm"},
        "model");
    ModelConfig cfg;
    detail::assign_if(j, "input_steps", cfg.input_steps);
    detail::assign_if(j, "input_features", cfg.input_features);
    detail::assign_if(j, "conv_filters", cfg.conv_filters);
    detail::assign_if(j, "conv_kernel", cfg.conv_kernel);
    detail::assign_if(j, "lstm_units", cfg.lstm_units);
    detail::assign_if(j, "num_classes", cfg.num_classes);
    detail::assign_if(j, "l2_lambda", cfg.l2_lambda);
    detail::assign_if(j, "dropout_post_cnn", cfg.dropout_post_cnn);
    detail::assign_if(j, "dropout_post_lstm", cfg.dropout_post_lstm);
    cfg.validate();
    return cfg;
}

// --- TrainingConfig ----------------------------------------------------------

inline Json to_json(const TrainingConfig& cfg) {
    return Json{{"learning_rate", cfg.learning_rate},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"adam_epsilon", cfg.adam_epsilon},
                {"batch_size", cfg.batch_size},
                {"max_epochs", cfg.max_epochs},
                {"seed", cfg.seed},
                {"deterministic", cfg.deterministic},
                {"use_class_weights", cfg.use_class_weights}};
}

inline TrainingConfig training_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
        {"learning_rate", "beta1", "beta2", "adam_epsilon", "batch_size", "max_epochs",
         "seed", "deterministic", "use_class_weights"},
        "training");
    TrainingConfig cfg;
    detail::assign_if(j, "learning_rate", cfg.learning_rate);
    detail::assign_if(j, "beta1", cfg.beta1);
    detail::assign_if(j, "beta2", cfg.beta2);
    detail::assign_if(j, "adam_epsilon", cfg.adam_epsilon);
    detail::assign_if(j, "batch_size", cfg.batch_size);
    detail::assign_if(j, "max_epochs", cfg.max_epochs);
    detail::assign_if(j, "seed", cfg.seed);
    detail::assign_if(j, "deterministic", cfg.deterministic);
    detail::assign_if(j, "use_class_weights", cfg.use_class_weights);
    cfg.validate();
    return cfg;
}

} // namespace bioenv
