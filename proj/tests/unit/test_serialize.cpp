#include <doctest.h>

#include "../support/oracles.hpp"

using namespace kge;
using namespace kge::testing;
namespace fs = std::filesystem;

TEST_CASE("embedding round trip is bit-identical for every kind") {
    for (ModelKind k : kAllModelKinds) {
        const auto p = random_params<float>(small_spec(k), 7, 3, 5);
        std::stringstream buf;
        write_embeddings(buf, p);
        const auto q = read_embeddings(buf);
        CHECK(q.spec.kind == k);
        CHECK(q.num_entities == 7);
        REQUIRE(q.tensors.size() == p.tensors.size());
        for (std::size_t i = 0; i < p.tensors.size(); ++i) {
            CHECK(q.tensors[i].block == p.tensors[i].block);
            CHECK(q.tensors[i].trainable == p.tensors[i].trainable);
            CHECK(std::memcmp(q.tensors[i].data.data(), p.tensors[i].data.data(), p.tensors[i].data.size() * 4) == 0);
        }
    }
}

TEST_CASE("header layout") {
    const auto p = init_params({ModelKind::TransE_L1, Norm::L1, 4, 0}, 3, 2, 1);
    std::stringstream buf;
    write_embeddings(buf, p);
    const std::string s = buf.str();
    CHECK(s.substr(0, 4) == "KGE1");
    std::uint32_t kind = 0;
    std::uint64_t ents = 0;
    std::memcpy(&kind, s.data() + 4, 4);
    std::memcpy(&ents, s.data() + 8, 8);
    CHECK(kind == static_cast<std::uint32_t>(ModelKind::TransE_L1));
    CHECK(ents == 3);
    // header 40 bytes; per tensor 18 bytes + data
    CHECK(s.size() == 40 + 2 * 18 + (3 * 4 + 2 * 4) * 4);
}

TEST_CASE("checkpoint round trip keeps optimizer state and config echo") {
    const auto dir = scratch_dir("ckpt");
    auto p = random_params<float>(small_spec(ModelKind::TransH), 6, 2, 2);
    Optimizer opt({OptimizerKind::Adam, 0.01}, p);
    Gradient g;
    accumulate_energy_gradient(p, {0, 1, 2}, 1.0, g);
    opt.apply(p, g);
    save_checkpoint(dir / "c.kge", p, &opt, "model = TransH\n");
    const auto c = load_checkpoint(dir / "c.kge");
    CHECK(c.config_echo == "model = TransH\n");
    CHECK(c.optimizer_step == 1);
    REQUIRE(c.optimizer);
    CHECK(c.optimizer->kind == OptimizerKind::Adam);
    CHECK(c.optimizer_state == opt.state());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) CHECK(c.params.tensors[i].data == p.tensors[i].data);
    fs::remove_all(dir);
}

TEST_CASE("truncated or corrupted checkpoints raise IntegrityError") {
    const auto dir = scratch_dir("trunc");
    const auto p = random_params<float>(small_spec(ModelKind::DistMult), 6, 2, 2);
    save_checkpoint(dir / "c.kge", p, nullptr, "");
    const std::string bytes = slurp(dir / "c.kge");
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
        std::ofstream(dir / "t.kge", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(cut));
        CHECK_THROWS_AS(load_checkpoint(dir / "t.kge"), IntegrityError);
    }
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    std::ofstream(dir / "f.kge", std::ios::binary).write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
    CHECK_THROWS_AS(load_checkpoint(dir / "f.kge"), IntegrityError);
    fs::remove_all(dir);
}

TEST_CASE("text export has one row per entity and relation") {
    const auto p = random_params<float>(small_spec(ModelKind::ComplEx), 5, 3, 1);
    Vocab v;
    for (int e = 0; e < 5; ++e) v.entity_names.push_back("e" + std::to_string(e));
    for (int r = 0; r < 3; ++r) v.relation_names.push_back("r" + std::to_string(r));
    std::ostringstream out;
    export_text(out, p, v);
    const std::string s = out.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 8);
    CHECK(s.rfind("e0\t", 0) == 0);
}

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cULL);
}
