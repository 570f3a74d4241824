#pragma once

#include <string>

#include <json.hpp>

#include "kge/config.hpp"
#include "kge/data.hpp"
#include "kge/evaluator.hpp"
#include "kge/trainer.hpp"

namespace kge {

inline constexpr const char* kReportSchema = "kge-report/1";

nlohmann::ordered_json config_json(const KeyValues& echo);

struct LinkPredictionRun {
    std::string dataset;
    bool filter = true;
    bool by_category = false;
    std::string mode = "deterministic";
    KeyValues config;  // echo of the training run
};

nlohmann::ordered_json link_prediction_json(const EvalReport& report, const LinkPredictionRun& run);
std::string link_prediction_table(const EvalReport& report, const LinkPredictionRun& run);

struct ClassificationRun {
    std::string dataset;
    bool generated_negatives = false;
    std::uint64_t negative_seed = 0;
    std::string mode = "deterministic";
    KeyValues config;
};

nlohmann::ordered_json classification_json(const ClassificationResult& result, const ClassifierThresholds& thresholds,
                                           const ClassificationRun& run, const Vocab& vocab);
std::string classification_table(const ClassificationResult& result, const ClassificationRun& run);

nlohmann::ordered_json train_report_json(const TrainReport& report, const KeyValues& config);

nlohmann::ordered_json stats_json(const Dataset& ds, const RelationStats& stats);
std::string stats_table(const Dataset& ds, const RelationStats& stats);

// Pretty JSON with a trailing newline.
std::string dump(const nlohmann::ordered_json& j);

}  // namespace kge
