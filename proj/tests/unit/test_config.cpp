#include <doctest.h>

#include "../support/oracles.hpp"

using namespace kge;
using namespace kge::testing;

namespace {

KeyValues parse(const std::string& text) {
    std::istringstream in(text);
    return parse_key_values(in);
}

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = parse("# comment\nmodel = TransH   # trailing\n\n dim=20\n");
    CHECK(kv.at("model") == "TransH");
    CHECK(kv.at("dim") == "20");
    CHECK_THROWS_AS(parse("dim = 1\ndim = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("just words\n"), ConfigError);
}

TEST_CASE("echo feeds back to the same config") {
    const auto c = run_config_from(parse(
        "dataset = x\nmodel = TransD\ndim = 12\nrelation_dim = 7\nmargin = 0.3\nlearning_rate = 0.001\n"
        "optimizer = adam\nsampling = bern\ncorrupt_relation = true\nseed = 123456789012\nworkers = 3\n"));
    const std::string echo = config_echo(c);
    const auto again = run_config_from(parse(echo));
    CHECK(config_echo(again) == echo);
    CHECK(again.train.model.kind == ModelKind::TransD);
    CHECK(again.train.model.relation_dim == 7);
    CHECK(again.train.margin == 0.3);
    CHECK(again.train.seed == 123456789012ULL);
    CHECK(again.train.sampling.also_corrupt_relation);
    // every key appears exactly once
    std::size_t lines = std::count(echo.begin(), echo.end(), '\n');
    CHECK(lines == config_keys().size());
}

TEST_CASE("PTransE alias turns on paths") {
    const auto c = run_config_from(parse("model = PTransE-MUL\n"));
    CHECK(c.train.paths.enabled);
    CHECK(c.train.paths.composition == Composition::Mul);
    CHECK((c.train.model.kind == ModelKind::TransE_L1 || c.train.model.kind == ModelKind::TransE_L2));
}

TEST_CASE("bad configs") {
    CHECK_THROWS_AS(run_config_from(parse("modle = TransE\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse("dim = -3\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse("margin = abc\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse("model = TransH\npaths = true\n")), ConfigError);
    CHECK_THROWS_AS(parse_override("novalue"), ConfigError);
    CHECK(parse_override("dim=5").second == "5");
}

TEST_CASE("dataset resolution") {
    CHECK(resolve_dataset(fixture("toy")) == std::filesystem::path(fixture("toy")));
    CHECK_THROWS_AS(resolve_dataset("/definitely/not/here"), DataError);
    CHECK(find_constraint_file(fixture("toy")).has_value());
    CHECK_FALSE(find_constraint_file(fixture("toy_labeled")).has_value());
}
