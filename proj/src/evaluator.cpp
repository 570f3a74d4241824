#include "kge/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "kge/sampling.hpp"

namespace kge {

namespace {

EntityId target_of(const Triple& t, Side side) { return side == Side::Head ? t.head : t.tail; }

bool contains_sorted(std::span<const EntityId> v, EntityId e) { return std::binary_search(v.begin(), v.end(), e); }

std::span<const EntityId> known_for(const FilterIndex& filter, const Triple& t, Side side) {
    return side == Side::Head ? filter.heads(t.relation, t.tail) : filter.tails(t.head, t.relation);
}

// Ranking with energies already computed for each candidate. `target_pos` is
// the target's index in candidates, or npos when it is absent.
RankPair rank_from_energies(std::span<const EntityId> candidates, std::span<const double> energies,
                            std::size_t target_pos, std::span<const EntityId> known) {
    RankPair out;
    if (target_pos == std::string::npos) {
        std::size_t unknown = 0;
        for (EntityId c : candidates)
            if (!contains_sorted(known, c)) ++unknown;
        out.raw = candidates.size() + 1;
        out.filtered = unknown + 1;
        out.flagged = true;
        return out;
    }
    const double target_energy = energies[target_pos];
    std::size_t better = 0, better_unknown = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (i == target_pos || !(energies[i] < target_energy)) continue;
        ++better;
        if (!contains_sorted(known, candidates[i])) ++better_unknown;
    }
    out.raw = better + 1;
    out.filtered = better_unknown + 1;
    return out;
}

void add_path_terms(const ModelParams& params, const Triple& t, Side side, const PathScoring& paths,
                    std::span<const EntityId> candidates, std::span<double> energies) {
    const PathMap found = side == Side::Tail ? paths.finder->forward(t.head) : paths.finder->backward(t.tail);
    if (found.empty()) return;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto it = found.find(candidates[i]);
        if (it != found.end()) energies[i] += path_term(params, t.relation, it->second, paths.composition);
    }
}

struct Accumulator {
    std::size_t count = 0;
    double sum_raw = 0.0, sum_filter = 0.0;
    std::size_t hits_raw = 0, hits_filter = 0;

    void add(const RankPair& r) {
        ++count;
        sum_raw += static_cast<double>(r.raw);
        sum_filter += static_cast<double>(r.filtered);
        if (r.raw <= kHitsAt) ++hits_raw;
        if (r.filtered <= kHitsAt) ++hits_filter;
    }
    Metrics metrics() const {
        Metrics m;
        m.count = count;
        if (count == 0) return m;
        const double n = static_cast<double>(count);
        m.mean_rank_raw = sum_raw / n;
        m.mean_rank_filter = sum_filter / n;
        m.hits10_raw = static_cast<double>(hits_raw) / n;
        m.hits10_filter = static_cast<double>(hits_filter) / n;
        return m;
    }
};

void check_vocab(const ModelParams& params, const Dataset& ds) {
    const std::size_t rel = ds.original_relation_count ? ds.original_relation_count : ds.num_relations();
    if (params.num_entities != ds.num_entities() || params.num_relations < rel)
        throw DataError("model vocabulary (" + std::to_string(params.num_entities) + " entities, " +
                        std::to_string(params.num_relations) + " relations) does not match dataset (" +
                        std::to_string(ds.num_entities()) + ", " + std::to_string(rel) + ")");
}

}  // namespace

double full_energy(const ModelParams& params, const Triple& t, const PathScoring* paths) {
    double e = energy(params, t);
    if (paths && paths->finder) {
        auto found = paths->finder->between(t.head, t.tail);
        if (!found.empty()) e += path_term(params, t.relation, found, paths->composition);
    }
    return e;
}

RankPair rank_entities(const ModelParams& params, const Triple& t, Side side, const FilterIndex& filter,
                       std::span<const EntityId> candidates, const PathScoring* paths) {
    std::vector<EntityId> all;
    if (candidates.empty()) {
        all.resize(params.num_entities);
        std::iota(all.begin(), all.end(), EntityId{0});
        candidates = all;
    }
    RelationScorer scorer(params, t.relation);
    std::vector<double> energies(candidates.size());
    scorer.energies(t, side, candidates, energies);
    if (paths && paths->finder) add_path_terms(params, t, side, *paths, candidates, energies);
    const EntityId target = target_of(t, side);
    auto it = std::find(candidates.begin(), candidates.end(), target);
    const std::size_t pos = it == candidates.end() ? std::string::npos : static_cast<std::size_t>(it - candidates.begin());
    return rank_from_energies(candidates, energies, pos, known_for(filter, t, side));
}

EvalReport link_prediction(const ModelParams& params, const Dataset& ds, const LinkPredictionOptions& options,
                           const std::vector<Triple>* triples, const FilterIndex* filter) {
    check_vocab(params, ds);
    if (options.type_constraints && !ds.type_constraints)
        throw ConfigError("type-constrained evaluation needs a type-constraint file");
    const auto& all_triples = triples ? *triples : ds.test;
    const std::size_t n = options.limit ? std::min(options.limit, all_triples.size()) : all_triples.size();
    std::optional<FilterIndex> own_filter;
    if (!filter) filter = &own_filter.emplace(ds);

    std::vector<Category> category(ds.num_relations(), Category::ManyToMany);
    if (options.by_category && !ds.train.empty()) {
        auto stats = compute_stats(ds);
        for (std::size_t r = 0; r < stats.size(); ++r) category[r] = stats.relations[r].category;
    }

    std::map<RelationId, std::vector<std::size_t>> by_relation;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = all_triples[i];
        if (t.head >= ds.num_entities() || t.tail >= ds.num_entities() || t.relation >= params.num_relations)
            throw DataError("evaluation triple " + to_string(t) + " outside model vocabulary");
        by_relation[t.relation].push_back(i);
    }
    std::vector<RelationId> relations;
    for (const auto& [r, idx] : by_relation) relations.push_back(r);

    std::vector<EntityId> everyone(ds.num_entities());
    std::iota(everyone.begin(), everyone.end(), EntityId{0});
    std::vector<std::array<RankPair, 2>> ranks(n);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
        try {
            std::vector<double> energies;
            for (std::size_t k = next++; k < relations.size(); k = next++) {
                const RelationId r = relations[k];
                RelationScorer scorer(params, r);
                const TypeConstraint* tc = options.type_constraints ? ds.constraint(r) : nullptr;
                for (std::size_t i : by_relation.at(r)) {
                    const Triple& t = all_triples[i];
                    for (Side side : {Side::Head, Side::Tail}) {
                        std::span<const EntityId> cands = tc ? tc->allowed(side) : std::span<const EntityId>(everyone);
                        energies.resize(cands.size());
                        scorer.energies(t, side, cands, energies);
                        if (options.paths && options.paths->finder)
                            add_path_terms(params, t, side, *options.paths, cands, energies);
                        const EntityId target = target_of(t, side);
                        std::size_t pos = std::string::npos;
                        if (!tc) {
                            pos = target;
                        } else {
                            auto it = std::lower_bound(cands.begin(), cands.end(), target);
                            if (it != cands.end() && *it == target) pos = static_cast<std::size_t>(it - cands.begin());
                        }
                        ranks[i][side == Side::Head ? 0 : 1] =
                            rank_from_energies(cands, energies, pos, known_for(*filter, t, side));
                    }
                }
            }
        } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, relations.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    EvalReport report;
    report.by_category = options.by_category;
    report.type_constrained = options.type_constraints;
    Accumulator overall, head, tail;
    std::array<std::array<Accumulator, 2>, 4> cells;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rp = ranks[i];
        overall.add(rp[0]);
        overall.add(rp[1]);
        head.add(rp[0]);
        tail.add(rp[1]);
        report.flagged += rp[0].flagged + rp[1].flagged;
        auto& cell = cells[static_cast<std::size_t>(category[all_triples[i].relation])];
        cell[0].add(rp[0]);
        cell[1].add(rp[1]);
    }
    report.overall = overall.metrics();
    report.head = head.metrics();
    report.tail = tail.metrics();
    for (std::size_t c = 0; c < 4; ++c) report.categories[c] = {cells[c][0].metrics(), cells[c][1].metrics()};
    if (options.keep_ranks) report.ranks = std::move(ranks);
    return report;
}

ThresholdChoice best_threshold(std::vector<std::pair<double, bool>> samples) {
    if (samples.empty()) throw std::invalid_argument("no samples to tune a threshold on");
    for (const auto& s : samples)
        if (!std::isfinite(s.first)) throw NumericError("non-finite energy in threshold tuning");
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    std::size_t negatives = 0;
    for (const auto& s : samples) negatives += !s.second;

    // Below the minimum everything is predicted negative.
    ThresholdChoice best{samples.front().first - 1.0, double(negatives) / double(n)};
    std::size_t pos_below = 0, neg_below = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && samples[j].first == samples[i].first) {
            (samples[j].second ? pos_below : neg_below) += 1;
            ++j;
        }
        const double delta = j < n ? samples[i].first + (samples[j].first - samples[i].first) / 2.0 : samples[i].first + 1.0;
        const double acc = double(pos_below + (negatives - neg_below)) / double(n);
        if (acc > best.accuracy) best = {delta, acc};
        i = j;
    }
    return best;
}

ClassifierThresholds tune_thresholds(const EnergyFn& energy_of, std::size_t num_relations,
                                     const std::vector<Triple>& positives, const std::vector<Triple>& negatives) {
    if (negatives.empty())
        throw DataError("threshold tuning needs labeled negatives; generate them for datasets without labels");
    if (positives.empty()) throw DataError("threshold tuning needs labeled positives");
    std::vector<std::vector<std::pair<double, bool>>> per(num_relations);
    std::vector<std::pair<double, bool>> all;
    auto add = [&](const std::vector<Triple>& ts, bool label) {
        for (const auto& t : ts) {
            if (t.relation >= num_relations) throw DataError("triple " + to_string(t) + " has unknown relation");
            const double e = energy_of(t);
            per[t.relation].emplace_back(e, label);
            all.emplace_back(e, label);
        }
    };
    add(positives, true);
    add(negatives, false);

    ClassifierThresholds out;
    out.global = best_threshold(all).threshold;
    out.per_relation.resize(num_relations);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < num_relations; ++r) {
        if (per[r].empty()) continue;
        out.per_relation[r] = best_threshold(per[r]).threshold;
        for (const auto& [e, label] : per[r]) correct += (e < *out.per_relation[r]) == label;
    }
    out.valid_accuracy = double(correct) / double(all.size());
    return out;
}

ClassifierThresholds tune_thresholds(const ModelParams& params, const std::vector<Triple>& positives,
                                     const std::vector<Triple>& negatives, const PathScoring* paths) {
    return tune_thresholds([&](const Triple& t) { return full_energy(params, t, paths); }, params.num_relations,
                           positives, negatives);
}

ClassificationResult triple_classification(const EnergyFn& energy_of, const ClassifierThresholds& thresholds,
                                           const std::vector<Triple>& positives, const std::vector<Triple>& negatives) {
    ClassificationResult out;
    for (const auto& t : positives) {
        const bool pred = energy_of(t) < thresholds.threshold(t.relation);
        (pred ? out.true_positive : out.false_negative) += 1;
    }
    for (const auto& t : negatives) {
        const bool pred = energy_of(t) < thresholds.threshold(t.relation);
        (pred ? out.false_positive : out.true_negative) += 1;
    }
    out.total = positives.size() + negatives.size();
    out.correct = out.true_positive + out.true_negative;
    out.accuracy = out.total ? double(out.correct) / double(out.total) : 0.0;
    return out;
}

ClassificationResult triple_classification(const ModelParams& params, const ClassifierThresholds& thresholds,
                                           const std::vector<Triple>& positives, const std::vector<Triple>& negatives,
                                           const PathScoring* paths) {
    return triple_classification([&](const Triple& t) { return full_energy(params, t, paths); }, thresholds, positives,
                                 negatives);
}

std::vector<Triple> generate_negatives(const Dataset& ds, const std::vector<Triple>& positives, std::uint64_t seed) {
    Dataset typed;
    typed.vocab = ds.vocab;
    typed.train = ds.train;
    typed.valid = ds.valid;
    typed.test = ds.test;
    if (ds.type_constraints) {
        typed.type_constraints = ds.type_constraints;
    } else {
        std::vector<std::optional<TypeConstraint>> tc(ds.num_relations());
        for (const auto& t : ds.train) {
            if (!tc[t.relation]) tc[t.relation].emplace();
            tc[t.relation]->heads.push_back(t.head);
            tc[t.relation]->tails.push_back(t.tail);
        }
        for (auto& c : tc) {
            if (!c) continue;
            for (auto* v : {&c->heads, &c->tails}) {
                std::sort(v->begin(), v->end());
                v->erase(std::unique(v->begin(), v->end()), v->end());
            }
        }
        typed.type_constraints = std::move(tc);
    }
    const FilterIndex filter(ds);
    const RelationStats no_stats;
    const Corruptor typed_corruptor(typed, no_stats, {SamplingKind::Typed, false, true}, &filter);
    const Corruptor uniform_corruptor(typed, no_stats, {SamplingKind::Uniform, false, true}, &filter);
    Rng rng(seed);
    std::vector<Triple> out;
    out.reserve(positives.size());
    for (const auto& t : positives) {
        try {
            out.push_back(typed_corruptor.corrupt(t, rng));
        } catch (const SamplingError&) {
            // Relation types too narrow to yield an unknown triple.
            out.push_back(uniform_corruptor.corrupt(t, rng));
        }
    }
    return out;
}

}  // namespace kge
