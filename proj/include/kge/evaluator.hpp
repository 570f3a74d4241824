#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kge/data.hpp"
#include "kge/model.hpp"
#include "kge/paths.hpp"

namespace kge {

inline constexpr const char* kTiePolicy = "target-first";
inline constexpr std::size_t kHitsAt = 10;

struct RankPair {
    std::size_t raw = 0;
    std::size_t filtered = 0;
    bool flagged = false;  // target missing from the candidate set
};

// Adds the path term to energies when the model was trained with paths.
struct PathScoring {
    const PathFinder* finder = nullptr;
    Composition composition = Composition::Add;
};

// Energy of one triple including the path term when `paths` is given.
double full_energy(const ModelParams& params, const Triple& t, const PathScoring* paths = nullptr);

// Rank of the true entity among `candidates` (all entities when empty).
// rank = 1 + #candidates with strictly lower energy; the filtered rank also
// skips candidates that form a known triple.
RankPair rank_entities(const ModelParams& params, const Triple& t, Side side, const FilterIndex& filter,
                       std::span<const EntityId> candidates = {}, const PathScoring* paths = nullptr);

struct Metrics {
    std::size_t count = 0;
    double mean_rank_raw = 0.0;
    double mean_rank_filter = 0.0;
    double hits10_raw = 0.0;  // fractions in [0, 1]
    double hits10_filter = 0.0;
};

struct CategoryCell {
    Metrics head;  // predicting the head
    Metrics tail;
};

struct EvalReport {
    Metrics overall;  // both sides of every triple
    Metrics head;
    Metrics tail;
    bool by_category = false;
    std::array<CategoryCell, 4> categories{};  // indexed by Category
    bool type_constrained = false;
    std::size_t flagged = 0;
    std::string mode = "deterministic";
    std::vector<std::array<RankPair, 2>> ranks;  // [head, tail] per triple, when kept
};

struct LinkPredictionOptions {
    bool type_constraints = false;
    bool by_category = true;
    std::size_t workers = 1;
    const PathScoring* paths = nullptr;
    bool keep_ranks = false;
    std::size_t limit = 0;  // evaluate only the first `limit` triples; 0 = all
};

// Ranks both sides of every triple in `triples` (ds.test when null).
// `filter` defaults to the index of ds.
EvalReport link_prediction(const ModelParams& params, const Dataset& ds, const LinkPredictionOptions& options,
                           const std::vector<Triple>* triples = nullptr, const FilterIndex* filter = nullptr);

struct ThresholdChoice {
    double threshold = 0.0;
    double accuracy = 0.0;
};

// Scans {min-1, midpoints of consecutive distinct energies, max+1} and keeps
// the first best (smallest) threshold. Predicts positive iff energy < threshold.
ThresholdChoice best_threshold(std::vector<std::pair<double, bool>> samples);

struct ClassifierThresholds {
    std::vector<std::optional<double>> per_relation;
    double global = 0.0;
    double valid_accuracy = 0.0;  // with per-relation thresholds applied

    double threshold(RelationId r) const {
        return r < per_relation.size() && per_relation[r] ? *per_relation[r] : global;
    }
};

using EnergyFn = std::function<double(const Triple&)>;

ClassifierThresholds tune_thresholds(const EnergyFn& energy_of, std::size_t num_relations,
                                     const std::vector<Triple>& positives, const std::vector<Triple>& negatives);
ClassifierThresholds tune_thresholds(const ModelParams& params, const std::vector<Triple>& positives,
                                     const std::vector<Triple>& negatives, const PathScoring* paths = nullptr);

struct ClassificationResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t true_positive = 0, false_positive = 0, true_negative = 0, false_negative = 0;
};

ClassificationResult triple_classification(const EnergyFn& energy_of, const ClassifierThresholds& thresholds,
                                           const std::vector<Triple>& positives, const std::vector<Triple>& negatives);
ClassificationResult triple_classification(const ModelParams& params, const ClassifierThresholds& thresholds,
                                           const std::vector<Triple>& positives, const std::vector<Triple>& negatives,
                                           const PathScoring* paths = nullptr);

// One negative per positive by typed corruption with a fixed seed. Types
// come from the loaded constraints, or else from the heads and tails seen
// with each relation in training. Known triples are never emitted.
std::vector<Triple> generate_negatives(const Dataset& ds, const std::vector<Triple>& positives, std::uint64_t seed);

}  // namespace kge
