#include <doctest.h>

#include "../support/oracles.hpp"

using namespace kge;
using namespace kge::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    fs::path dir;
    fs::path out;

    explicit Run(const std::string& tag, const std::string& model = "TransE-L1", const std::string& extra = "")
        : dir(scratch_dir(tag)), out(dir / "out") {
        std::ofstream(dir / "run.cfg") << toy_config(out.string(), model, extra);
    }
    ~Run() { fs::remove_all(dir); }

    int train(std::string* err = nullptr) const { return run({"train", "--config", (dir / "run.cfg").string()}, nullptr, err); }
    std::string checkpoint() const { return (out / "checkpoint.kge").string(); }
};

}  // namespace

TEST_CASE("train on the toy fixture") {
    Run r("cli-train");
    std::string err;
    REQUIRE(r.train(&err) == 0);
    CHECK(fs::exists(r.checkpoint()));
    CHECK(fs::exists(r.out / "train_report.json"));
    CHECK(fs::exists(r.out / "config.txt"));
    CHECK(fs::exists(r.out / "checkpoint_e10.kge"));
    const auto report = nlohmann::json::parse(slurp(r.out / "train_report.json"));
    CHECK(report["schema"] == kReportSchema);
    CHECK(report["epoch_loss"].size() == 30);
    CHECK(report["config"]["seed"] == "9");
    CHECK(report["valid_hits10"].size() == 3);
}

TEST_CASE("identical runs give byte-identical checkpoints") {
    Run a("cli-a"), b("cli-b");
    REQUIRE(a.train() == 0);
    // Same output path in the echo: rerun a's config after moving its result.
    fs::rename(a.checkpoint(), a.dir / "first.kge");
    REQUIRE(a.train() == 0);
    CHECK(slurp(a.dir / "first.kge") == slurp(a.checkpoint()));
    CHECK(b.train() == 0);
}

TEST_CASE("missing dataset exits 2 and leaves only diagnostics") {
    const auto dir = scratch_dir("cli-missing");
    std::ofstream(dir / "run.cfg") << "dataset = " << (dir / "nowhere").string() << "\noutput = " << (dir / "out").string()
                                   << "\n";
    std::string err;
    CHECK(run({"train", "--config", (dir / "run.cfg").string()}, nullptr, &err) == 2);
    CHECK(err.find("not found") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("config errors exit 1") {
    const auto dir = scratch_dir("cli-config");
    std::ofstream(dir / "run.cfg") << "dataset = " << fixture("toy") << "\nmodel = Nonsense\n";
    CHECK(run({"train", "--config", (dir / "run.cfg").string()}) == 1);
    CHECK(run({"train", "--config", (dir / "absent.cfg").string()}) == 1);
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({}) == 1);
    fs::remove_all(dir);
}

TEST_CASE("numeric failure exits 3 and cleans up") {
    Run r("cli-numeric");
    std::string err;
    const int code = run({"train", "--config", (r.dir / "run.cfg").string(), "--set", "learning_rate=1e300"}, nullptr, &err);
    CHECK(code == 3);
    CHECK(fs::exists(r.out / "diagnostics.txt"));
    CHECK_FALSE(fs::exists(r.out / "checkpoint.kge"));
    CHECK_FALSE(fs::exists(r.out / "checkpoint_e10.kge"));
}

TEST_CASE("eval-lp report equals the library call") {
    Run r("cli-eval");
    REQUIRE(r.train() == 0);
    std::string out;
    REQUIRE(run({"eval-lp", "--checkpoint", r.checkpoint(), "--filter", "--by-category"}, &out) == 0);
    const auto json = nlohmann::json::parse(slurp(r.out / "eval_lp.json"));

    const Dataset ds = load_dataset(fixture("toy"));
    const auto ck = load_checkpoint(r.checkpoint());
    const auto lib = link_prediction(ck.params, ds, {});
    CHECK(json["metrics"]["mean_rank_raw"].get<double>() == lib.overall.mean_rank_raw);
    CHECK(json["metrics"]["mean_rank_filter"].get<double>() == lib.overall.mean_rank_filter);
    CHECK(json["metrics"]["hits10_filter"].get<double>() == lib.overall.hits10_filter);
    CHECK(json["tail"]["hits10_raw"].get<double>() == lib.tail.hits10_raw);
    CHECK(json["categories"]["1-1"]["head"]["count"].get<std::size_t>() == lib.categories[0].head.count);
    CHECK(json["tie_policy"] == "target-first");
    CHECK(out.find("Hits@10 Filter") != std::string::npos);

    REQUIRE(run({"eval-lp", "--checkpoint", r.checkpoint(), "--filter", "--tc"}) == 0);
    CHECK(nlohmann::json::parse(slurp(r.out / "eval_lp_tc.json"))["type_constraints"] == true);
}

TEST_CASE("eval-lp --tc without a constraint file exits 1") {
    Run r("cli-tc");
    REQUIRE(r.train() == 0);
    std::string err;
    CHECK(run({"eval-lp", "--checkpoint", r.checkpoint(), "--data", fixture("toy_labeled"), "--tc"}, nullptr, &err) == 1);
    CHECK(err.find("type-constraint") != std::string::npos);
}

TEST_CASE("vocab mismatch exits 2") {
    Run r("cli-vocab");
    REQUIRE(r.train() == 0);
    const auto other = scratch_dir("cli-vocab-data");
    Dataset ds = load_dataset(fixture("toy"));
    ds.vocab.entity_names.push_back("extra");
    write_dataset(ds, other);
    CHECK(run({"eval-lp", "--checkpoint", r.checkpoint(), "--data", other.string()}) == 2);
    fs::remove_all(other);
}

TEST_CASE("eval-tc on labeled data, missing labels, generated negatives") {
    Run r("cli-tc-run");
    REQUIRE(r.train() == 0);
    REQUIRE(run({"eval-tc", "--checkpoint", r.checkpoint(), "--data", fixture("toy_labeled")}) == 0);
    const std::string first = slurp(r.out / "eval_tc.json");
    const auto j = nlohmann::json::parse(first);
    CHECK(j["accuracy"].get<double>() >= 0.0);
    CHECK(j["accuracy"].get<double>() <= 1.0);
    CHECK(j["generated_negatives"] == false);
    REQUIRE(run({"eval-tc", "--checkpoint", r.checkpoint(), "--data", fixture("toy_labeled")}) == 0);
    CHECK(slurp(r.out / "eval_tc.json") == first);

    CHECK(run({"eval-tc", "--checkpoint", r.checkpoint()}) == 2);
    REQUIRE(run({"eval-tc", "--checkpoint", r.checkpoint(), "--generate-negatives"}) == 0);
    CHECK(nlohmann::json::parse(slurp(r.out / "eval_tc.json"))["generated_negatives"] == true);
}

TEST_CASE("export") {
    Run r("cli-export");
    REQUIRE(r.train() == 0);
    const auto bin = r.dir / "emb.bin", txt = r.dir / "emb.txt";
    REQUIRE(run({"export", "--checkpoint", r.checkpoint(), "--format", "binary", "--out", bin.string()}) == 0);
    const auto reloaded = load_embeddings(bin);
    const auto ck = load_checkpoint(r.checkpoint());
    REQUIRE(reloaded.tensors.size() == ck.params.tensors.size());
    for (std::size_t i = 0; i < reloaded.tensors.size(); ++i)
        CHECK(std::memcmp(reloaded.tensors[i].data.data(), ck.params.tensors[i].data.data(),
                          reloaded.tensors[i].data.size() * sizeof(float)) == 0);

    REQUIRE(run({"export", "--checkpoint", r.checkpoint(), "--format", "text", "--out", txt.string(), "--data",
                 fixture("toy")}) == 0);
    const std::string text = slurp(txt);
    CHECK(std::count(text.begin(), text.end(), '\n') == 8 + 3);
    CHECK(text.rfind("alice\t", 0) == 0);

    CHECK(run({"export", "--checkpoint", r.checkpoint(), "--format", "yaml", "--out", txt.string()}) == 1);

    const std::string bytes = slurp(r.checkpoint());
    std::ofstream(r.dir / "cut.kge", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    std::string err;
    CHECK(run({"export", "--checkpoint", (r.dir / "cut.kge").string(), "--format", "binary", "--out", bin.string()},
              nullptr, &err) == 2);
    CHECK(err.find("data error") != std::string::npos);
}

TEST_CASE("prepare-stats and paths-build") {
    const auto dir = scratch_dir("cli-stats");
    std::string out;
    REQUIRE(run({"prepare-stats", "--data", fixture("toy"), "--out", (dir / "stats.json").string()}, &out) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "stats.json"));
    CHECK(j["entities"] == 8);
    CHECK(j["train"] == 12);
    CHECK(out.find("#Rel") != std::string::npos);

    REQUIRE(run({"paths-build", "--data", fixture("toy"), "--out", (dir / "paths.tsv").string()}, &out) == 0);
    CHECK(out.find("paths") != std::string::npos);
    CHECK_FALSE(slurp(dir / "paths.tsv").empty());
    CHECK(run({"paths-build", "--data", fixture("toy"), "--max-len", "7"}) == 1);
    fs::remove_all(dir);
}

TEST_CASE("PTransE checkpoint evaluates with paths") {
    Run r("cli-ptranse", "PTransE-ADD");
    REQUIRE(r.train() == 0);
    REQUIRE(run({"eval-lp", "--checkpoint", r.checkpoint(), "--filter"}) == 0);
    const auto j = nlohmann::json::parse(slurp(r.out / "eval_lp.json"));
    CHECK(j["config"]["paths"] == "true");
}
