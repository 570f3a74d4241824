#include <doctest.h>

#include "../support/oracles.hpp"

using namespace kge;
using namespace kge::testing;

namespace {

// d = 1 TransE-L1 on a line: energy(h, r, t) = |x_h + r - x_t|.
ModelParams line_model(const std::vector<float>& x, float r) {
    auto p = allocate_params<float>({ModelKind::TransE_L1, Norm::L1, 1, 0}, x.size(), 1);
    p.get(Block::Entity).data = x;
    p.get(Block::Relation).data = {r};
    return p;
}

Dataset line_dataset(std::size_t n, std::vector<Triple> train, std::vector<Triple> test) {
    Dataset ds;
    for (std::size_t e = 0; e < n; ++e) ds.vocab.entity_names.push_back("e" + std::to_string(e));
    ds.vocab.relation_names = {"r"};
    ds.train = std::move(train);
    ds.test = std::move(test);
    return ds;
}

// Exhaustive sweep: every distinct energy plus/minus a little, and the ends.
ThresholdChoice sweep(std::vector<std::pair<double, bool>> s) {
    std::vector<double> cand;
    for (auto& [e, l] : s) cand.push_back(e);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    std::vector<double> th{cand.front() - 1};
    for (std::size_t i = 0; i + 1 < cand.size(); ++i) th.push_back((cand[i] + cand[i + 1]) / 2);
    th.push_back(cand.back() + 1);
    ThresholdChoice best{0, -1};
    for (double t : th) {
        std::size_t ok = 0;
        for (auto& [e, l] : s) ok += (e < t) == l;
        const double acc = double(ok) / double(s.size());
        if (acc > best.accuracy) best = {t, acc};
    }
    return best;
}

}  // namespace

TEST_CASE("unique best target ranks first") {
    const auto p = line_model({0, 1, 5}, 1);
    const Dataset ds = line_dataset(3, {}, {{0, 0, 1}});
    const FilterIndex f(ds);
    const auto r = rank_entities(p, {0, 0, 1}, Side::Tail, f);
    CHECK(r.raw == 1);
    CHECK(r.filtered == 1);
}

TEST_CASE("a better known triple costs one raw rank but no filtered rank") {
    // (0, r, 1) is in train and scores perfectly; the test target is (0, r, 2).
    const auto p = line_model({0, 1, 1.5f, 9}, 1);
    const Dataset ds = line_dataset(4, {{0, 0, 1}}, {{0, 0, 2}});
    const FilterIndex f(ds);
    const auto r = rank_entities(p, {0, 0, 2}, Side::Tail, f);
    CHECK(r.raw == 2);
    CHECK(r.filtered == 1);
}

TEST_CASE("ties rank the target first") {
    const auto p = line_model({0, 1, 1}, 1);
    const Dataset ds = line_dataset(3, {}, {{0, 0, 2}});
    const FilterIndex f(ds);
    CHECK(rank_entities(p, {0, 0, 2}, Side::Tail, f).raw == 1);
    CHECK(std::string(kTiePolicy) == "target-first");
}

TEST_CASE("ranks equal the brute-force oracle") {
    const auto o = rank_property();
    INFO(o.detail);
    CHECK(o.ok);
}

TEST_CASE("filtered rank never exceeds raw rank") {
    const auto o = filtered_not_worse_property();
    INFO(o.detail);
    CHECK(o.ok);
}

TEST_CASE("hand-set model gives hand-computed metrics") {
    // x = 0..5, r = 1: the true tail of (i, r, i+1) is exact.
    const auto p = line_model({0, 1, 2, 3, 4, 5}, 1);
    const Dataset ds = line_dataset(6, {{0, 0, 1}}, {{1, 0, 2}, {2, 0, 4}});
    LinkPredictionOptions opt;
    opt.by_category = false;
    const auto rep = link_prediction(p, ds, opt);
    // (1,r,2): tail rank 1, head rank 1. (2,r,4): energies |x_c - 4| vs target 1:
    // tail candidates with |3 - x| < 1 -> {3}: rank 2; head candidates |x + 1 - 4| < 1 -> {3}: rank 2.
    CHECK(rep.overall.mean_rank_raw == doctest::Approx(1.5));
    CHECK(rep.tail.mean_rank_raw == doctest::Approx(1.5));
    CHECK(rep.head.mean_rank_raw == doctest::Approx(1.5));
    CHECK(rep.overall.hits10_raw == 1.0);
    CHECK(rep.overall.count == 4);
}

TEST_CASE("vacuous constraints change nothing; a 3-entity tail set caps the candidates") {
    const Dataset base = random_dataset(10, 2, 20, 6, 3);
    const auto p = random_params<float>(small_spec(ModelKind::TransE_L2), 10, 2, 3);
    Dataset all = base;
    std::vector<std::optional<TypeConstraint>> cons(2);
    TypeConstraint every;
    for (EntityId e = 0; e < 10; ++e) every.heads.push_back(e), every.tails.push_back(e);
    cons[0] = cons[1] = every;
    all.type_constraints = cons;
    LinkPredictionOptions plain, tc;
    plain.keep_ranks = tc.keep_ranks = true;
    tc.type_constraints = true;
    const auto a = link_prediction(p, base, plain), b = link_prediction(p, all, tc);
    for (std::size_t i = 0; i < a.ranks.size(); ++i)
        for (int s = 0; s < 2; ++s) {
            CHECK(a.ranks[i][s].raw == b.ranks[i][s].raw);
            CHECK(a.ranks[i][s].filtered == b.ranks[i][s].filtered);
        }

    Dataset three = base;
    TypeConstraint nat = every;
    nat.tails = {1, 4, 7};
    cons[0] = nat;
    three.type_constraints = cons;
    const FilterIndex f(three);
    for (const auto& t : three.test)
        if (t.relation == 0) CHECK(rank_entities(p, t, Side::Tail, f, nat.tails).raw <= 4);
}

TEST_CASE("+TC without constraints is a config error; vocab mismatch is a data error") {
    const Dataset ds = random_dataset(10, 2, 20, 6, 3);
    LinkPredictionOptions tc;
    tc.type_constraints = true;
    const auto p = random_params<float>(small_spec(ModelKind::TransE_L2), 10, 2, 3);
    CHECK_THROWS_AS(link_prediction(p, ds, tc), ConfigError);
    const auto wrong = random_params<float>(small_spec(ModelKind::TransE_L2), 9, 2, 3);
    CHECK_THROWS_AS(link_prediction(wrong, ds, {}), DataError);
}

TEST_CASE("parallel evaluation equals single-threaded evaluation") {
    const Dataset ds = random_dataset(40, 5, 100, 60, 9);
    const auto p = random_params<float>(small_spec(ModelKind::TransH), 40, 5, 9);
    LinkPredictionOptions one, many;
    many.workers = 6;
    const auto a = link_prediction(p, ds, one), b = link_prediction(p, ds, many);
    CHECK(a.overall.mean_rank_raw == b.overall.mean_rank_raw);
    CHECK(a.overall.mean_rank_filter == b.overall.mean_rank_filter);
    CHECK(a.overall.hits10_filter == b.overall.hits10_filter);
    for (std::size_t c = 0; c < 4; ++c) CHECK(a.categories[c].tail.hits10_raw == b.categories[c].tail.hits10_raw);
}

TEST_CASE("threshold selection") {
    SUBCASE("separable energies reach full accuracy") {
        const auto c = best_threshold({{0.1, true}, {0.2, true}, {0.9, false}, {1.3, false}});
        CHECK(c.accuracy == 1.0);
        CHECK(c.threshold == doctest::Approx(0.55));
    }
    SUBCASE("all-equal energies give the majority label frequency") {
        const auto c = best_threshold({{1, true}, {1, false}, {1, false}});
        CHECK(c.accuracy == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("random sets match an exhaustive sweep") {
        std::mt19937_64 rng(4);
        for (int rep = 0; rep < 200; ++rep) {
            std::vector<std::pair<double, bool>> s;
            const int n = 1 + int(rng() % 12);
            for (int i = 0; i < n; ++i) s.push_back({double(rng() % 7) / 2.0, rng() % 2 == 0});
            const auto want = sweep(s);
            const auto got = best_threshold(s);
            CHECK(got.accuracy == doctest::Approx(want.accuracy));
            CHECK(got.threshold == doctest::Approx(want.threshold));
        }
    }
}

TEST_CASE("per-relation thresholds with a global fallback") {
    // energy = relation-specific offsets, known by construction
    const EnergyFn e = [](const Triple& t) { return double(t.head) + 10.0 * t.relation; };
    const std::vector<Triple> pos{{1, 0, 0}, {2, 0, 0}, {11, 1, 0}}, neg{{5, 0, 0}, {6, 0, 0}, {19, 1, 0}};
    const auto th = tune_thresholds(e, 3, pos, neg);
    CHECK(th.per_relation[0].has_value());
    CHECK(*th.per_relation[0] == doctest::Approx(3.5));
    CHECK(!th.per_relation[2].has_value());
    CHECK(th.threshold(2) == th.global);
    CHECK(th.valid_accuracy == 1.0);

    const auto res = triple_classification(e, th, {{0, 0, 0}, {12, 1, 0}}, {{4, 0, 0}, {3, 0, 0}, {40, 1, 0}});
    // positives: 0 < 3.5 ok, 22 vs r1 threshold 25 ok; negatives 4 ok, 3 wrong (< 3.5), 50 ok
    CHECK(res.correct == 4);
    CHECK(res.total == 5);
    CHECK(res.true_positive == 2);
    CHECK(res.false_positive == 1);
    CHECK(res.true_negative == 2);
    CHECK(res.false_negative == 0);
    CHECK(res.accuracy == doctest::Approx(0.8));

    ClassifierThresholds minus_inf;
    minus_inf.global = -std::numeric_limits<double>::infinity();
    const auto r2 = triple_classification(e, minus_inf, pos, neg);
    CHECK(r2.accuracy == doctest::Approx(0.5));  // negative-label fraction
    CHECK_THROWS_AS(tune_thresholds(e, 3, pos, {}), DataError);
}

TEST_CASE("generated negatives are unknown, typed and reproducible") {
    Dataset ds = load_dataset(fixture("toy"));
    load_type_constraints(fixture("toy") + "/type_constrain.txt", ds);
    const auto a = generate_negatives(ds, ds.test, 7), b = generate_negatives(ds, ds.test, 7);
    CHECK(a == b);
    CHECK(a.size() == ds.test.size());
    const FilterIndex f(ds);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Triple& t = ds.test[i];
        CHECK_FALSE(f.contains(a[i]));
        CHECK(a[i].relation == t.relation);
        // Typed corruption has an unknown candidate unless every allowed
        // replacement is known; only then may it fall back to uniform.
        const auto* c = ds.constraint(t.relation);
        bool typed_possible = false;
        for (EntityId e : c->heads) typed_possible |= !f.contains({e, t.relation, t.tail});
        for (EntityId e : c->tails) typed_possible |= !f.contains({t.head, t.relation, e});
        if (typed_possible) {
            CHECK(c->allows(Side::Head, a[i].head));
            CHECK(c->allows(Side::Tail, a[i].tail));
        }
    }
}
