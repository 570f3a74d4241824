#include "kge/sampling.hpp"

#include <algorithm>

namespace kge {

namespace {

std::size_t draw_index(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

// Uniform draw from [0, n) skipping `skip` (which must be < n).
std::size_t draw_excluding(Rng& rng, std::size_t n, std::size_t skip) {
    std::size_t x = draw_index(rng, n - 1);
    return x >= skip ? x + 1 : x;
}

}  // namespace

const char* to_string(SamplingKind k) {
    switch (k) {
        case SamplingKind::Uniform: return "uniform";
        case SamplingKind::Bernoulli: return "bernoulli";
        case SamplingKind::Typed: return "typed";
    }
    return "?";
}

SamplingKind sampling_kind_from_string(std::string_view s) {
    std::string v(s);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "uniform" || v == "unif") return SamplingKind::Uniform;
    if (v == "bernoulli" || v == "bern") return SamplingKind::Bernoulli;
    if (v == "typed") return SamplingKind::Typed;
    throw ConfigError("unknown sampling strategy '" + std::string(s) + "'");
}

double bernoulli_head_probability(const RelationStat& s) {
    const double denom = s.tph + s.hpt;
    return denom > 0.0 ? s.tph / denom : 0.5;
}

Corruptor::Corruptor(const Dataset& ds, const RelationStats& stats, SamplingStrategy strategy,
                     const FilterIndex* filter)
    : ds_(ds), strategy_(strategy), filter_(filter) {
    if (strategy.kind == SamplingKind::Typed && !ds.type_constraints)
        throw ConfigError("typed sampling needs a type-constraint file");
    if (strategy.reject_known_positives && !filter)
        throw std::invalid_argument("reject_known_positives needs a filter index");
    head_prob_.assign(ds.num_relations(), 0.5);
    if (strategy.kind == SamplingKind::Bernoulli) {
        if (stats.size() != ds.num_relations()) throw std::invalid_argument("relation stats do not match dataset");
        for (std::size_t r = 0; r < stats.size(); ++r) head_prob_[r] = bernoulli_head_probability(stats.relations[r]);
    }
}

double Corruptor::head_probability(RelationId r) const { return head_prob_.at(r); }

bool Corruptor::has_alternative(const Triple& t, Side side) const {
    const EntityId orig = side == Side::Head ? t.head : t.tail;
    const TypeConstraint* c = strategy_.kind == SamplingKind::Typed ? ds_.constraint(t.relation) : nullptr;
    if (!c) return ds_.num_entities() >= 2;
    auto allowed = c->allowed(side);
    return allowed.size() >= 2 || (allowed.size() == 1 && allowed[0] != orig);
}

EntityId Corruptor::replace_entity(const Triple& t, Side side, Rng& rng) const {
    const EntityId orig = side == Side::Head ? t.head : t.tail;
    const TypeConstraint* c = strategy_.kind == SamplingKind::Typed ? ds_.constraint(t.relation) : nullptr;
    if (!c) return static_cast<EntityId>(draw_excluding(rng, ds_.num_entities(), orig));
    auto allowed = c->allowed(side);
    auto it = std::lower_bound(allowed.begin(), allowed.end(), orig);
    if (it != allowed.end() && *it == orig)
        return allowed[draw_excluding(rng, allowed.size(), static_cast<std::size_t>(it - allowed.begin()))];
    return allowed[draw_index(rng, allowed.size())];
}

Triple Corruptor::corrupt_once(const Triple& t, Rng& rng) const {
    if (strategy_.also_corrupt_relation && ds_.num_relations() >= 2) {
        std::uniform_int_distribution<int> slot(0, 2);
        if (slot(rng) == 0) {
            Triple out = t;
            out.relation = static_cast<RelationId>(draw_excluding(rng, ds_.num_relations(), t.relation));
            return out;
        }
    }
    std::bernoulli_distribution pick_head(head_prob_[t.relation]);
    Side side = pick_head(rng) ? Side::Head : Side::Tail;
    if (!has_alternative(t, side)) {
        side = side == Side::Head ? Side::Tail : Side::Head;
        if (!has_alternative(t, side))
            throw SamplingError("no replacement entity available for " + to_string(t) + " in either slot");
    }
    Triple out = t;
    (side == Side::Head ? out.head : out.tail) = replace_entity(t, side, rng);
    return out;
}

Triple Corruptor::corrupt(const Triple& t, Rng& rng) const {
    if (t.head >= ds_.num_entities() || t.tail >= ds_.num_entities() || t.relation >= ds_.num_relations())
        throw std::out_of_range("triple " + to_string(t) + " outside dataset vocabulary");
    if (!strategy_.reject_known_positives) return corrupt_once(t, rng);
    for (int attempt = 0; attempt < kMaxCorruptionRetries; ++attempt) {
        Triple c = corrupt_once(t, rng);
        if (!filter_->contains(c)) return c;
    }
    throw SamplingError("could not find an unknown corruption of " + to_string(t) + " within " +
                        std::to_string(kMaxCorruptionRetries) + " retries");
}

Triple corrupt(const Triple& t, const Dataset& ds, const RelationStats& stats, const SamplingStrategy& strategy,
               Rng& rng, const FilterIndex* filter) {
    return Corruptor(ds, stats, strategy, filter).corrupt(t, rng);
}

}  // namespace kge
