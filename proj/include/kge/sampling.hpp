#pragma once

#include <random>
#include <string_view>
#include <vector>

#include "kge/data.hpp"

namespace kge {

using Rng = std::mt19937_64;

enum class SamplingKind { Uniform, Bernoulli, Typed };

const char* to_string(SamplingKind k);
SamplingKind sampling_kind_from_string(std::string_view s);

struct SamplingStrategy {
    SamplingKind kind = SamplingKind::Uniform;
    // When set, one draw in three replaces the relation instead of an entity.
    bool also_corrupt_relation = false;
    bool reject_known_positives = false;
};

inline constexpr int kMaxCorruptionRetries = 100;

class SamplingError : public DataError {
public:
    using DataError::DataError;
};

// P(replace head) = tph / (tph + hpt); 0.5 when both are zero.
double bernoulli_head_probability(const RelationStat& s);

class Corruptor {
public:
    // `filter` is required when reject_known_positives is set. Typed sampling
    // requires ds.type_constraints; unconstrained relations fall back to all
    // entities.
    Corruptor(const Dataset& ds, const RelationStats& stats, SamplingStrategy strategy,
              const FilterIndex* filter = nullptr);

    Triple corrupt(const Triple& t, Rng& rng) const;
    double head_probability(RelationId r) const;
    const SamplingStrategy& strategy() const { return strategy_; }

private:
    Triple corrupt_once(const Triple& t, Rng& rng) const;
    bool has_alternative(const Triple& t, Side side) const;
    EntityId replace_entity(const Triple& t, Side side, Rng& rng) const;

    const Dataset& ds_;
    SamplingStrategy strategy_;
    const FilterIndex* filter_;
    std::vector<double> head_prob_;
};

// Convenience wrapper around Corruptor for one-off calls.
Triple corrupt(const Triple& t, const Dataset& ds, const RelationStats& stats, const SamplingStrategy& strategy,
               Rng& rng, const FilterIndex* filter = nullptr);

}  // namespace kge
