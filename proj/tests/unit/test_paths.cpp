#include <doctest.h>

#include "../support/oracles.hpp"

using namespace kge;
using namespace kge::testing;

namespace {

Dataset graph(std::size_t entities, std::size_t relations, std::vector<Triple> train) {
    Dataset ds;
    for (std::size_t e = 0; e < entities; ++e) ds.vocab.entity_names.push_back("e" + std::to_string(e));
    for (std::size_t r = 0; r < relations; ++r) ds.vocab.relation_names.push_back("r" + std::to_string(r));
    ds.train = std::move(train);
    ds.original_relation_count = relations;
    return ds;
}

// TransE params with d = 2 and hand-set relation rows.
ModelParams relations_2d(std::size_t entities, const std::vector<std::vector<float>>& rels) {
    auto p = allocate_params<float>({ModelKind::TransE_L1, Norm::L1, 2, 0}, entities, rels.size());
    for (std::size_t r = 0; r < rels.size(); ++r) std::copy(rels[r].begin(), rels[r].end(), p.row(Block::Relation, r).begin());
    return p;
}

}  // namespace

TEST_CASE("inverse relations double the relation set") {
    const Dataset ds = load_dataset(fixture("toy"));
    const Dataset aug = add_inverse_relations(ds);
    CHECK(aug.num_relations() == 2 * ds.num_relations());
    CHECK(aug.original_relation_count == ds.num_relations());
    CHECK(aug.train.size() == 2 * ds.train.size());
    CHECK(aug.vocab.relation_names[3] == "lives_in\xE2\x81\xBB\xC2\xB9");
    const std::set<Triple> s(aug.train.begin(), aug.train.end());
    for (const auto& t : ds.train) CHECK(s.count({t.tail, t.relation + 3, t.head}) == 1);
    CHECK(aug.test == ds.test);
    const PathGraph g(aug);
    std::size_t edges = 0;
    for (EntityId e = 0; e < aug.num_entities(); ++e) edges += g.out_edges(e).size();
    CHECK(edges == 2 * ds.train.size());
}

TEST_CASE("chain gives reliability 1") {
    const Dataset ds = graph(3, 2, {{0, 0, 1}, {1, 1, 2}});
    const PathGraph g(ds);
    const auto p = PathFinder(g, 2, 0.0).between(0, 2);
    REQUIRE(p.size() == 1);
    CHECK(p[0].relations == std::vector<RelationId>{0, 1});
    CHECK(p[0].reliability == 1.0);
}

TEST_CASE("split resource gives reliability 0.5") {
    // a -r1-> {b1, b2}; b1 -r2-> c
    const Dataset ds = graph(4, 2, {{0, 0, 1}, {0, 0, 2}, {1, 1, 3}});
    const PathGraph g(ds);
    const auto p = PathFinder(g, 2, 0.0).between(0, 3);
    REQUIRE(p.size() == 1);
    CHECK(p[0].reliability == 0.5);
}

TEST_CASE("unconnected pair has no paths") {
    const Dataset ds = graph(5, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}});
    const PathGraph g(ds);
    CHECK(PathFinder(g, 2, 0.0).between(0, 4).empty());
    CHECK(PathFinder(g, 3, 0.0).between(0, 4).empty());
    CHECK(PathFinder(g, 3, 0.0).between(0, 3).size() == 1);
}

TEST_CASE("threshold prunes weak paths") {
    std::vector<Triple> t;
    for (EntityId e = 1; e <= 4; ++e) t.push_back({0, 0, e});
    t.push_back({1, 1, 5});
    const Dataset ds = graph(6, 2, t);
    const PathGraph g(ds);
    CHECK(PathFinder(g, 2, 0.2).between(0, 5).size() == 1);  // R = 0.25
    CHECK(PathFinder(g, 2, 0.3).between(0, 5).empty());
}

TEST_CASE("PCRA conservation and oracle agreement") {
    const auto o = pcra_property();
    INFO(o.detail);
    CHECK(o.ok);
}

TEST_CASE("enumerate_paths covers training pairs and is worker-independent") {
    const Dataset aug = add_inverse_relations(random_dataset(20, 3, 50, 0, 4));
    PathOptions opt;
    opt.enabled = true;
    const auto one = enumerate_paths(aug, opt, 1);
    const auto four = enumerate_paths(aug, opt, 4);
    std::ostringstream a, b;
    one.dump(a);
    four.dump(b);
    CHECK(a.str() == b.str());
    CHECK(one.num_paths() > 0);
    const PathGraph g(aug);
    const PathFinder f(g, opt.max_len, opt.threshold);
    for (const auto& t : aug.train) {
        const auto want = f.between(t.head, t.tail);
        const auto* got = one.find(t.head, t.tail);
        CHECK((got ? got->size() : 0) == want.size());
    }
    opt.memory_budget_mb = 0;
    CHECK_THROWS_AS(enumerate_paths(aug, opt, 1), PathBudgetError);
}

TEST_CASE("path composition") {
    const auto p = relations_2d(1, {{1, 0}, {0, 1}, {2, 3}, {4, 5}});
    const std::vector<RelationId> single{0}, add{0, 1}, mul{2, 3};
    CHECK(compose_path(single, p, Composition::Add) == std::vector<double>{1, 0});
    CHECK(compose_path(add, p, Composition::Add) == std::vector<double>{1, 1});
    CHECK(compose_path(mul, p, Composition::Mul) == std::vector<double>{8, 15});
}

TEST_CASE("PTransE score") {
    auto p = relations_2d(3, {{1, 1}, {1, 0}, {0, 1}, {3, 3}});
    const Triple t{0, 0, 1};
    const double base = energy(p, t);
    PathIndex index;
    SUBCASE("empty path set gives plain TransE") { CHECK(score_ptranse(p, t, index, Composition::Add) == base); }
    SUBCASE("path equal to r contributes zero") {
        index.insert(0, 1, {{{1, 2}, 1.0}});
        CHECK(score_ptranse(p, t, index, Composition::Add) == base);
    }
    SUBCASE("weighted sum of two paths") {
        index.insert(0, 1, {{{1, 2}, 0.5}, {{3}, 0.5}});
        // ||(1,1)-(1,1)||_1 = 0 and ||(3,3)-(1,1)||_1 = 4; Z = 1
        CHECK(score_ptranse(p, t, index, Composition::Add) == doctest::Approx(base + 0.5 * 0 + 0.5 * 4));
    }
    SUBCASE("the single-edge path equal to r is skipped") {
        index.insert(0, 1, {{{0}, 0.5}, {{3}, 0.5}});
        // only (3) remains, Z = 0.5
        CHECK(score_ptranse(p, t, index, Composition::Add) == doctest::Approx(base + 4.0));
    }
}

TEST_CASE("path loss gradient matches central differences") {
    for (Composition mode : {Composition::Add, Composition::Mul})
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            auto p = random_params<double>({ModelKind::TransE_L1, Norm::L1, 5, 0}, 3, 4, seed);
            const std::vector<RelationPath> paths{{{1, 2}, 0.7}, {{3}, 0.2}, {{2, 1, 3}, 0.1}};
            Gradient g;
            path_margin_loss(p, 0, 3, paths, mode, 5.0, 1.0, &g);  // large margin keeps every hinge active
            auto& rel = p.get(Block::Relation);
            for (std::size_t i = 0; i < rel.data.size(); ++i) {
                const double saved = rel.data[i], h = 1e-5;
                rel.data[i] = saved + h;
                const double up = path_margin_loss(p, 0, 3, paths, mode, 5.0, 1.0, nullptr);
                rel.data[i] = saved - h;
                const double down = path_margin_loss(p, 0, 3, paths, mode, 5.0, 1.0, nullptr);
                rel.data[i] = saved;
                const double* row = g.find(Block::Relation, i / 5);
                const double analytic = row ? row[i % 5] : 0.0;
                CHECK(analytic == doctest::Approx((up - down) / (2 * h)).epsilon(1e-3).scale(1e-6));
            }
        }
}

TEST_CASE("PTransE trains end to end") {
    TrainConfig cfg;
    cfg.model = {ModelKind::TransE_L1, Norm::L1, 8, 0};
    cfg.paths.enabled = true;
    cfg.epochs = 30;
    cfg.batches_per_epoch = 2;
    const Dataset ds = load_dataset(fixture("toy"));
    const auto rep = train(ds, cfg);
    CHECK(rep.params.num_relations == 6);
    CHECK(rep.path_pairs > 0);
    CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());
}
