#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kge/data.hpp"
#include "kge/model.hpp"
#include "kge/optimizer.hpp"
#include "kge/paths.hpp"
#include "kge/sampling.hpp"

namespace kge {

enum class Objective { Margin, Logistic };

const char* to_string(Objective o);
Objective objective_from_string(std::string_view s);

struct TrainConfig {
    ModelSpec model;
    double margin = 1.0;
    Objective objective = Objective::Margin;
    double bias = 0.0;  // b in g = -E + b
    OptimizerConfig optimizer;
    std::size_t epochs = 1000;
    std::size_t batches_per_epoch = 100;
    SamplingStrategy sampling;
    std::size_t negatives_per_positive = 1;
    std::uint64_t seed = 42;
    std::size_t valid_every = 0;  // 0: never checkpoint or validate mid-run
    bool early_stopping = false;
    std::size_t patience = 3;
    double theta_min = 0.0;  // TranSparse
    std::size_t workers = 1;  // > 1 selects lock-free parallel mode
    PathOptions paths;        // PTransE when enabled on a TransE base

    void validate() const;
    bool deterministic() const { return workers <= 1; }
};

double margin_loss(double energy_pos, double energy_neg, double margin);
double logistic_loss(double energy_pos, double energy_neg, double bias);

// Optional callbacks, called on the training thread between epochs.
struct TrainHooks {
    // Called every valid_every epochs with the current state.
    std::function<void(std::size_t epoch, const ModelParams&, const Optimizer&)> on_checkpoint;
    // Called once with the final state.
    std::function<void(const ModelParams&, const Optimizer&)> on_finish;
    // Returns filtered Hits@10 on validation data.
    std::function<double(const ModelParams&)> validate;
    // Progress line per epoch.
    std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    double wall_seconds = 0.0;
    ModelParams params;
    std::vector<std::pair<std::size_t, double>> valid_hits10;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
    std::string mode;  // "deterministic" or "parallel"
    std::size_t path_pairs = 0;
    std::size_t path_count = 0;
};

// Trains on ds.train. With paths enabled the dataset is augmented with
// inverse relations internally; the returned params then hold 2|R| relation
// rows. `initial` overrides seeded initialization.
TrainReport train(const Dataset& ds, const TrainConfig& config, const TrainHooks& hooks = {},
                  const ModelParams* initial = nullptr);

const char* mode_label(const TrainConfig& config);

}  // namespace kge
