// Acceptance suite. One PASS/FAIL line per criterion.
//
//   kge_acceptance [--group properties|benchmarks|all] [--only ID]
//
// Benchmarks read WN18, FB15K and WN11 from $KGE_DATA_ROOT (or ./data).
// Criterion 8 is the long PTransE run and only executes with KGE_EXTENDED=1.
// Exit status: 0 all pass, 1 any real failure, 77 when the only failures are
// criteria that could not run (missing data, extended run disabled).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "../support/oracles.hpp"

namespace fs = std::filesystem;
using namespace kge;
using kge::testing::Outcome;

namespace {

enum class Status { Pass, Fail, NotRun };

struct Line {
    std::string id;
    std::string title;
    Status status;
    std::string detail;
};

class NotRunnable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<Line> g_lines;

void report(const std::string& id, const std::string& title, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Line line{id, title, Status::Fail, ""};
    try {
        const Outcome o = body();
        line.status = o.ok ? Status::Pass : Status::Fail;
        line.detail = o.detail;
    } catch (const NotRunnable& e) {
        line.status = Status::NotRun;
        line.detail = std::string("not run: ") + e.what();
    } catch (const std::exception& e) {
        line.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (line.status == Status::Pass ? "PASS" : "FAIL") << "  [" << id << "] " << title << " -- "
              << line.detail << " (" << static_cast<long>(secs) << " s)" << std::endl;
    g_lines.push_back(line);
}

// ---- datasets ----

std::optional<fs::path> find_dataset(const std::vector<std::string>& names) {
    std::vector<fs::path> roots;
    if (const char* env = std::getenv("KGE_DATA_ROOT")) roots.emplace_back(env);
    roots.emplace_back("data");
    for (const auto& root : roots)
        for (const auto& n : names)
            if (fs::is_directory(root / n) && find_data_file(root / n, "train2id")) return root / n;
    return std::nullopt;
}

const Dataset& dataset(const std::string& key, const std::vector<std::string>& names, bool constraints = false) {
    static std::map<std::string, Dataset> cache;
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto dir = find_dataset(names);
    if (!dir) throw NotRunnable(key + " not found under $KGE_DATA_ROOT or ./data");
    Dataset ds = load_dataset(*dir);
    if (constraints) {
        if (auto f = find_constraint_file(*dir)) load_type_constraints(*f, ds);
    }
    return cache.emplace(key, std::move(ds)).first->second;
}

const Dataset& wn18() { return dataset("WN18", {"WN18", "wn18"}); }
const Dataset& fb15k() { return dataset("FB15K", {"FB15K", "FB15k", "fb15k"}, true); }
const Dataset& wn11() { return dataset("WN11", {"WN11", "wn11"}); }

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Shared budget for the FB15K comparisons.
TrainConfig fb15k_config(ModelKind kind, std::size_t dim) {
    TrainConfig c;
    c.model = {kind, Norm::L1, dim, 0};
    c.margin = 1.0;
    c.optimizer.learning_rate = 0.01;
    c.epochs = 1000;
    c.batches_per_epoch = 100;
    c.sampling.kind = SamplingKind::Bernoulli;
    c.seed = 42;
    c.workers = workers();
    return c;
}

// Trained models are reused across criteria.
const ModelParams& trained(const std::string& key, const Dataset& ds, const TrainConfig& cfg) {
    static std::map<std::string, ModelParams> cache;
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::cout << "  training " << key << " ..." << std::endl;
    return cache.emplace(key, train(ds, cfg).params).first->second;
}

Metrics evaluate(const ModelParams& p, const Dataset& ds, bool tc = false, const PathScoring* paths = nullptr) {
    LinkPredictionOptions opt;
    opt.type_constraints = tc;
    opt.by_category = false;
    opt.workers = workers();
    opt.paths = paths;
    return link_prediction(p, ds, opt).overall;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return buf;
}

const ModelParams& fb15k_transe(std::size_t dim) {
    return trained("TransE FB15K d=" + std::to_string(dim), fb15k(), fb15k_config(ModelKind::TransE_L1, dim));
}

void benchmarks(const std::string& only) {
    auto want = [&](const std::string& id) { return only.empty() || only == id; };

    if (want("1"))
        report("1", "dataset statistics for WN18 and FB15K", [] {
            Outcome o;
            struct Row {
                const Dataset* ds;
                std::size_t r, e, train, valid, test;
                const char* name;
            };
            for (const Row& row : {Row{&wn18(), 18, 40943, 141442, 5000, 5000, "WN18"},
                                   Row{&fb15k(), 1345, 14951, 483142, 50000, 59071, "FB15K"}}) {
                const auto& d = *row.ds;
                const std::string got = std::to_string(d.num_relations()) + "/" + std::to_string(d.num_entities()) +
                                        "/" + std::to_string(d.train.size()) + "/" + std::to_string(d.valid.size()) +
                                        "/" + std::to_string(d.test.size());
                if (d.num_relations() != row.r || d.num_entities() != row.e || d.train.size() != row.train ||
                    d.valid.size() != row.valid || d.test.size() != row.test)
                    o.fail(std::string(row.name) + " counts " + got);
                o.detail += std::string(o.detail.empty() ? "" : ", ") + row.name + " " + got;
            }
            return o;
        });

    if (want("2"))
        report("2", "TransE WN18 filtered Hits@10 >= 85.0 and filtered Mean Rank <= 400", [] {
            TrainConfig c;
            c.model = {ModelKind::TransE_L1, Norm::L1, 50, 0};
            c.margin = 2.0;
            c.optimizer.learning_rate = 0.01;
            c.epochs = 1000;
            c.batches_per_epoch = 100;
            c.sampling.kind = SamplingKind::Uniform;
            c.workers = workers();
            const auto& p = trained("TransE WN18 d=50", wn18(), c);
            const auto m = evaluate(p, wn18());
            Outcome o;
            o.detail = "Hits@10 " + pct(m.hits10_filter) + ", Mean Rank " + std::to_string(m.mean_rank_filter);
            if (m.hits10_filter < 0.850) o.fail(o.detail);
            if (m.mean_rank_filter > 400.0) o.fail(o.detail);
            return o;
        });

    if (want("3"))
        report("3", "TransE FB15K d=200 filtered Hits@10 >= 70.0", [] {
            const auto m = evaluate(fb15k_transe(200), fb15k());
            Outcome o;
            o.detail = "Hits@10 " + pct(m.hits10_filter);
            if (m.hits10_filter < 0.700) o.fail(o.detail);
            return o;
        });

    if (want("4"))
        report("4", "FB15K TransH and TransR filtered Hits@10 >= TransE - 1.0", [] {
            const auto base = evaluate(fb15k_transe(100), fb15k()).hits10_filter;
            Outcome o;
            o.detail = "TransE " + pct(base);
            for (ModelKind k : {ModelKind::TransH, ModelKind::TransR}) {
                const auto& p = trained(std::string(to_string(k)) + " FB15K d=100", fb15k(), fb15k_config(k, 100));
                const double h = evaluate(p, fb15k()).hits10_filter;
                o.detail += std::string(", ") + to_string(k) + " " + pct(h);
                if (h < base - 0.010) o.fail(o.detail);
            }
            return o;
        });

    if (want("5"))
        report("5", "type constraints raise TransE FB15K filtered Hits@10 by >= 2.0", [] {
            if (!fb15k().type_constraints) throw NotRunnable("FB15K has no type-constraint file");
            const auto& p = fb15k_transe(200);
            const double plain = evaluate(p, fb15k()).hits10_filter;
            const double tc = evaluate(p, fb15k(), true).hits10_filter;
            Outcome o;
            o.detail = "plain " + pct(plain) + ", +TC " + pct(tc);
            if (tc - plain < 0.020) o.fail(o.detail);
            return o;
        });

    if (want("6"))
        report("6", "TransE FB15K filtered Hits@10 at d=100 exceeds d=25 by >= 10.0", [] {
            const double h100 = evaluate(fb15k_transe(100), fb15k()).hits10_filter;
            const double h25 = evaluate(fb15k_transe(25), fb15k()).hits10_filter;
            Outcome o;
            o.detail = "d=25 " + pct(h25) + ", d=100 " + pct(h100);
            if (h100 - h25 < 0.100) o.fail(o.detail);
            return o;
        });

    if (want("7"))
        report("7", "TransE WN11 triple classification accuracy 85.0 +- 2.0", [] {
            const auto& ds = wn11();
            if (ds.valid_negatives.empty() || ds.test_negatives.empty()) throw NotRunnable("WN11 has no labeled negatives");
            TrainConfig c;
            c.model = {ModelKind::TransE_L1, Norm::L1, 20, 0};
            c.margin = 4.0;
            c.optimizer.learning_rate = 0.01;
            c.epochs = 1000;
            c.batches_per_epoch = 100;
            c.sampling.kind = SamplingKind::Bernoulli;
            c.workers = workers();
            const auto& p = trained("TransE WN11 d=20", ds, c);
            const auto th = tune_thresholds(p, ds.valid, ds.valid_negatives);
            const auto res = triple_classification(p, th, ds.test, ds.test_negatives);
            Outcome o;
            o.detail = "accuracy " + pct(res.accuracy);
            if (std::abs(res.accuracy - 0.850) > 0.020) o.fail(o.detail);
            return o;
        });

    if (want("8"))
        report("8", "PTransE FB15K filtered Hits@10 >= TransE + 3.0 (same budget)", [] {
            const char* ext = std::getenv("KGE_EXTENDED");
            if (!ext || std::string(ext) != "1") throw NotRunnable("extended run disabled (set KGE_EXTENDED=1)");
            const auto& ds = fb15k();
            const double base = evaluate(fb15k_transe(100), ds).hits10_filter;
            auto cfg = fb15k_config(ModelKind::TransE_L1, 100);
            cfg.paths.enabled = true;
            cfg.paths.composition = Composition::Add;
            cfg.paths.max_len = 2;
            const auto& p = trained("PTransE-ADD FB15K d=100", ds, cfg);
            const Dataset augmented = add_inverse_relations(ds);
            const PathGraph graph(augmented);
            const PathFinder finder(graph, cfg.paths.max_len, cfg.paths.threshold);
            const PathScoring scoring{&finder, cfg.paths.composition};
            const double h = evaluate(p, ds, false, &scoring).hits10_filter;
            Outcome o;
            o.detail = "TransE " + pct(base) + ", PTransE " + pct(h);
            if (h - base < 0.030) o.fail(o.detail);
            return o;
        });
}

void properties(const std::string& only) {
    auto want = [&](const std::string& id) { return only.empty() || only == id || only == "9"; };
    using namespace kge::testing;
    if (want("9a")) report("9a", "gradients match central differences (rel. err <= 1e-3), every kind", [] { return gradient_property(1e-3); });
    if (want("9b")) report("9b", "ranks equal brute-force oracle (raw, filtered, +TC)", [] { return rank_property(); });
    if (want("9c")) report("9c", "reduction identities hold exactly", [] { return reduction_property(); });
    if (want("9d")) report("9d", "HolE FFT correlation within 1e-5 of the O(d^2) sum", [] { return hole_fft_property(1e-5); });
    if (want("9e")) report("9e", "Bernoulli head frequency within 3 SE over 10,000 draws", [] { return bernoulli_property(); });
    if (want("9f")) report("9f", "filtered rank <= raw rank on every evaluated triple", [] { return filtered_not_worse_property(); });
    if (want("9g")) report("9g", "PCRA resource conservation on random graphs", [] { return pcra_property(); });
    if (want("9h")) report("9h", "deterministic mode reproduces checkpoints and reports bit for bit", [] { return determinism_property(); });
}

}  // namespace

int main(int argc, char** argv) {
    std::string group = "all", only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--group" && i + 1 < argc) group = argv[++i];
        else if (a == "--only" && i + 1 < argc) only = argv[++i];
        else {
            std::cerr << "usage: kge_acceptance [--group properties|benchmarks|all] [--only ID]\n";
            return 2;
        }
    }
    if (group != "all" && group != "properties" && group != "benchmarks") {
        std::cerr << "unknown group " << group << '\n';
        return 2;
    }
    if (group != "properties") benchmarks(only);
    if (group != "benchmarks") properties(only);

    std::size_t pass = 0, fail = 0, not_run = 0;
    for (const auto& l : g_lines) {
        if (l.status == Status::Pass) ++pass;
        else if (l.status == Status::Fail) ++fail;
        else ++not_run;
    }
    std::cout << "\n" << pass << " passed, " << fail + not_run << " failed";
    if (not_run) std::cout << " (" << not_run << " could not run)";
    std::cout << std::endl;
    if (fail) return 1;
    if (not_run) return 77;
    return 0;
}
