#include "kge/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "kge/config.hpp"
#include "kge/data.hpp"
#include "kge/evaluator.hpp"
#include "kge/paths.hpp"
#include "kge/report.hpp"
#include "kge/serialize.hpp"
#include "kge/trainer.hpp"

namespace kge {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    out << text;
    if (!out) throw DataError("write failed for " + file.string());
}

void ensure_dir(const fs::path& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Loads constraints from an explicit file or from the dataset directory.
// Returns false when none was found.
bool attach_constraints(Dataset& ds, const fs::path& dataset_dir, const std::string& explicit_file,
                        std::ostream& err) {
    std::optional<fs::path> file;
    if (!explicit_file.empty()) {
        file = fs::path(explicit_file);
        if (!fs::is_regular_file(*file)) throw DataError("type-constraint file " + explicit_file + " not found");
    } else {
        file = find_constraint_file(dataset_dir);
    }
    if (!file) return false;
    const auto res = load_type_constraints(*file, ds);
    if (res.train_violations)
        err << "warning: " << res.train_violations << " training triple(s) violate the type constraints\n";
    if (res.duplicate_ids) err << "warning: " << res.duplicate_ids << " duplicate id(s) in constraint lists\n";
    return true;
}

struct LoadedModel {
    Checkpoint checkpoint;
    KeyValues echo;
    RunConfig config;
};

LoadedModel load_model(const std::string& path) {
    if (!fs::is_regular_file(path)) throw DataError("checkpoint " + path + " not found");
    LoadedModel m;
    m.checkpoint = load_checkpoint(path);
    std::istringstream in(m.checkpoint.config_echo);
    m.echo = parse_key_values(in, path + " (config echo)");
    m.config = run_config_from(m.echo);
    return m;
}

void check_model_vocab(const ModelParams& p, const Dataset& ds, bool paths) {
    const std::size_t want_r = paths ? 2 * ds.num_relations() : ds.num_relations();
    if (p.num_entities != ds.num_entities() || p.num_relations != want_r)
        throw DataError("checkpoint vocabulary (" + std::to_string(p.num_entities) + " entities, " +
                        std::to_string(p.num_relations) + " relations) does not match the dataset (" +
                        std::to_string(ds.num_entities()) + ", " + std::to_string(want_r) + ")");
}

// Path machinery for evaluating a model trained with paths.
struct PathContext {
    Dataset augmented;
    std::optional<PathGraph> graph;
    std::optional<PathFinder> finder;
    PathScoring scoring;

    PathContext(const Dataset& ds, const PathOptions& opt) : augmented(add_inverse_relations(ds)) {
        graph.emplace(augmented);
        finder.emplace(*graph, opt.max_len, opt.threshold);
        scoring = {&*finder, opt.composition};
    }
};

fs::path default_report_dir(const std::string& checkpoint, const std::string& out_dir) {
    if (!out_dir.empty()) return out_dir;
    auto parent = fs::path(checkpoint).parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

struct Files {
    std::vector<fs::path> created;
    void add(const fs::path& p) { created.push_back(p); }
    void remove_all() {
        std::error_code ec;
        for (const auto& p : created) fs::remove(p, ec);
    }
};

int cmd_prepare_stats(const std::string& data, const std::string& constraints, const std::string& out_file,
                      std::ostream& out, std::ostream& err) {
    const auto dir = resolve_dataset(data);
    Dataset ds = load_dataset(dir);
    if (!constraints.empty()) attach_constraints(ds, dir, constraints, err);
    const auto stats = compute_stats(ds);
    out << stats_table(ds, stats);
    if (!out_file.empty()) {
        ensure_dir(fs::path(out_file).parent_path());
        write_text(out_file, dump(stats_json(ds, stats)));
    }
    return kExitOk;
}

int cmd_train(const std::string& config_file, const std::vector<std::string>& overrides, const std::string& data,
              const std::string& out_dir, bool progress, std::ostream& out, std::ostream& err) {
    KeyValues kv;
    if (!config_file.empty()) kv = read_config_file(config_file);
    for (const auto& o : overrides) {
        auto [k, v] = parse_override(o);
        kv[k] = v;
    }
    if (!data.empty()) kv["dataset"] = data;
    if (!out_dir.empty()) kv["output"] = out_dir;
    const RunConfig rc = run_config_from(kv);
    const std::string echo = config_echo(rc);

    const auto dir = resolve_dataset(rc.dataset);
    Dataset ds = load_dataset(dir);
    const bool have_tc = attach_constraints(ds, dir, rc.type_constraints, err);
    if (rc.train.sampling.kind == SamplingKind::Typed && !have_tc)
        throw ConfigError("typed sampling needs a type-constraint file (set type_constraints or add one to the dataset)");

    const fs::path outp(rc.output);
    ensure_dir(outp);
    Files files;
    try {
        std::optional<PathContext> valid_paths;
        TrainHooks hooks;
        hooks.on_checkpoint = [&](std::size_t epoch, const ModelParams& p, const Optimizer& opt) {
            const auto f = outp / ("checkpoint_e" + std::to_string(epoch) + ".kge");
            files.add(f);
            save_checkpoint(f, p, &opt, echo);
        };
        hooks.on_finish = [&](const ModelParams& p, const Optimizer& opt) {
            files.add(outp / "checkpoint.kge");
            save_checkpoint(outp / "checkpoint.kge", p, &opt, echo);
        };
        if (rc.train.valid_every > 0 && !ds.valid.empty()) {
            if (rc.train.paths.enabled) valid_paths.emplace(ds, rc.train.paths);
            hooks.validate = [&](const ModelParams& p) {
                LinkPredictionOptions opt;
                opt.by_category = false;
                opt.workers = rc.train.workers;
                opt.limit = rc.valid_sample;
                opt.paths = valid_paths ? &valid_paths->scoring : nullptr;
                return link_prediction(p, ds, opt, &ds.valid).overall.hits10_filter;
            };
        }
        if (progress)
            hooks.on_epoch = [&](std::size_t epoch, double loss) {
                err << "epoch " << epoch << " loss " << loss << '\n';
            };

        const TrainReport report = train(ds, rc.train, hooks);
        std::istringstream echo_in(echo);
        const auto echo_kv = parse_key_values(echo_in);
        files.add(outp / "train_report.json");
        write_text(outp / "train_report.json", dump(train_report_json(report, echo_kv)));
        files.add(outp / "config.txt");
        write_text(outp / "config.txt", echo);
        files.add(outp / "timing.json");
        nlohmann::ordered_json timing;
        timing["wall_seconds"] = report.wall_seconds;
        timing["epochs_run"] = report.epochs_run;
        write_text(outp / "timing.json", dump(timing));

        out << "trained " << to_string(rc.train.model.kind) << (rc.train.paths.enabled ? " with paths" : "") << " for "
            << report.epochs_run << " epoch(s) (" << report.mode << "); final mean loss "
            << (report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()) << '\n';
        out << "checkpoint: " << (outp / "checkpoint.kge").string() << '\n';
    } catch (const std::exception& e) {
        files.remove_all();
        std::ofstream diag(outp / "diagnostics.txt", std::ios::trunc);
        diag << e.what() << '\n';
        throw;
    }
    return kExitOk;
}

int cmd_eval_lp(const std::string& checkpoint, const std::string& data, bool filter, bool tc, bool by_category,
                std::size_t workers, const std::string& split, const std::string& constraints,
                const std::string& out_dir, std::ostream& out, std::ostream& err) {
    if (split != "test" && split != "valid") throw ConfigError("--split must be test or valid");
    auto model = load_model(checkpoint);
    const auto dir = resolve_dataset(data.empty() ? model.config.dataset : data);
    Dataset ds = load_dataset(dir);
    if (tc) {
        const std::string file = constraints.empty() ? model.config.type_constraints : constraints;
        if (!attach_constraints(ds, dir, file, err))
            throw ConfigError("--tc needs a type-constraint file, but none was given or found in " + dir.string());
    }
    const auto& paths = model.config.train.paths;
    check_model_vocab(model.checkpoint.params, ds, paths.enabled);
    std::optional<PathContext> ctx;
    if (paths.enabled) ctx.emplace(ds, paths);

    LinkPredictionOptions opt;
    opt.type_constraints = tc;
    opt.by_category = by_category;
    opt.workers = workers;
    opt.paths = ctx ? &ctx->scoring : nullptr;
    const auto report = link_prediction(model.checkpoint.params, ds, opt, split == "test" ? &ds.test : &ds.valid);

    LinkPredictionRun run;
    run.dataset = dir.string();
    run.filter = filter;
    run.by_category = by_category;
    run.mode = mode_label(model.config.train);
    run.config = model.echo;
    const auto table = link_prediction_table(report, run);
    const auto rdir = default_report_dir(checkpoint, out_dir);
    ensure_dir(rdir);
    const std::string stem = std::string("eval_lp") + (tc ? "_tc" : "") + (split == "valid" ? "_valid" : "");
    write_text(rdir / (stem + ".json"), dump(link_prediction_json(report, run)));
    write_text(rdir / (stem + ".txt"), table);
    out << table;
    return kExitOk;
}

int cmd_eval_tc(const std::string& checkpoint, const std::string& data, bool generate, std::uint64_t neg_seed,
                const std::string& out_dir, std::ostream& out, std::ostream& err) {
    auto model = load_model(checkpoint);
    const auto dir = resolve_dataset(data.empty() ? model.config.dataset : data);
    Dataset ds = load_dataset(dir);
    const auto& paths = model.config.train.paths;
    check_model_vocab(model.checkpoint.params, ds, paths.enabled);

    std::vector<Triple> valid_neg = ds.valid_negatives, test_neg = ds.test_negatives;
    const bool labeled = !valid_neg.empty() && !test_neg.empty();
    if (!labeled && !generate)
        throw DataError("dataset has no labeled negatives for valid and test; pass --generate-negatives to create them");
    if (!labeled) {
        attach_constraints(ds, dir, model.config.type_constraints, err);
        valid_neg = generate_negatives(ds, ds.valid, neg_seed);
        test_neg = generate_negatives(ds, ds.test, neg_seed + 1);
    }
    if (ds.valid.empty() || ds.test.empty()) throw DataError("triple classification needs valid and test positives");
    std::optional<PathContext> ctx;
    if (paths.enabled) ctx.emplace(ds, paths);
    const PathScoring* ps = ctx ? &ctx->scoring : nullptr;
    const auto& params = model.checkpoint.params;
    const auto thresholds = tune_thresholds(params, ds.valid, valid_neg, ps);
    const auto result = triple_classification(params, thresholds, ds.test, test_neg, ps);

    ClassificationRun run;
    run.dataset = dir.string();
    run.generated_negatives = !labeled;
    run.negative_seed = neg_seed;
    run.mode = mode_label(model.config.train);
    run.config = model.echo;
    const auto table = classification_table(result, run);
    const auto rdir = default_report_dir(checkpoint, out_dir);
    ensure_dir(rdir);
    write_text(rdir / "eval_tc.json", dump(classification_json(result, thresholds, run, ds.vocab)));
    write_text(rdir / "eval_tc.txt", table);
    out << table;
    return kExitOk;
}

int cmd_export(const std::string& checkpoint, const std::string& format, const std::string& out_path,
               const std::string& data, std::ostream& out) {
    if (format != "text" && format != "binary") throw ConfigError("unknown export format '" + format + "'");
    if (out_path.empty()) throw ConfigError("--out is required");
    auto model = load_model(checkpoint);
    const auto& params = model.checkpoint.params;
    ensure_dir(fs::path(out_path).parent_path());
    if (format == "binary") {
        save_embeddings(out_path, params);
    } else {
        Vocab vocab;
        if (!data.empty()) {
            vocab = load_dataset(resolve_dataset(data)).vocab;
            if (params.num_relations == 2 * vocab.num_relations()) {
                const std::size_t n = vocab.num_relations();
                for (std::size_t r = 0; r < n; ++r)
                    vocab.relation_names.push_back(vocab.relation_names[r] + std::string(kInverseSuffix));
            }
        } else {
            for (std::size_t e = 0; e < params.num_entities; ++e) vocab.entity_names.push_back(std::to_string(e));
            for (std::size_t r = 0; r < params.num_relations; ++r) vocab.relation_names.push_back(std::to_string(r));
        }
        std::ostringstream text;
        export_text(text, params, vocab);
        write_text(out_path, text.str());
    }
    out << "wrote " << out_path << '\n';
    return kExitOk;
}

int cmd_paths_build(const std::string& data, std::size_t max_len, double threshold, std::size_t memory_mb,
                    std::size_t workers, const std::string& out_file, std::ostream& out) {
    if (max_len < 1 || max_len > 3) throw ConfigError("--max-len must be 1, 2 or 3");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("--threshold must lie in [0, 1]");
    const Dataset ds = add_inverse_relations(load_dataset(resolve_dataset(data)));
    PathOptions opt;
    opt.enabled = true;
    opt.max_len = max_len;
    opt.threshold = threshold;
    opt.memory_budget_mb = memory_mb;
    const auto index = enumerate_paths(ds, opt, workers);
    out << index.num_pairs() << " entity pairs, " << index.num_paths() << " paths\n";
    if (!out_file.empty()) {
        ensure_dir(fs::path(out_file).parent_path());
        std::ofstream f(out_file, std::ios::trunc);
        if (!f) throw DataError("cannot write " + out_file);
        index.dump(f);
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-graph embedding toolkit", "kge"};
    app.require_subcommand(1);

    std::string data, out_file, constraints;
    auto* stats = app.add_subcommand("prepare-stats", "Dataset counts and relation categories");
    stats->add_option("--data", data, "Dataset directory or name under $KGE_DATA_ROOT")->required();
    stats->add_option("--constraints", constraints, "Type-constraint file to validate");
    stats->add_option("--out", out_file, "Write statistics as JSON");

    std::string config_file, out_dir;
    std::vector<std::string> overrides;
    bool progress = false;
    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--config", config_file, "key = value config file");
    tr->add_option("--set", overrides, "Override a config key (key=value)");
    tr->add_option("--data", data, "Dataset (overrides 'dataset')");
    tr->add_option("--out", out_dir, "Output directory (overrides 'output')");
    tr->add_flag("--progress", progress, "Print the loss after every epoch");

    std::string checkpoint, split = "test";
    bool filter = false, tc = false, by_category = false, generate = false;
    std::size_t workers = 1;
    std::uint64_t neg_seed = 7;
    auto* lp = app.add_subcommand("eval-lp", "Link prediction");
    lp->add_option("--checkpoint", checkpoint)->required();
    lp->add_option("--data", data, "Dataset (default: the one recorded in the checkpoint)");
    lp->add_flag("--filter", filter, "Report filtered metrics");
    lp->add_flag("--tc", tc, "Restrict candidates by type constraints");
    lp->add_flag("--by-category", by_category, "Break Hits@10 down by relation category");
    lp->add_option("--workers", workers, "Evaluation threads");
    lp->add_option("--split", split, "test or valid");
    lp->add_option("--constraints", constraints, "Type-constraint file");
    lp->add_option("--out", out_dir, "Report directory (default: next to the checkpoint)");

    auto* tcl = app.add_subcommand("eval-tc", "Triple classification");
    tcl->add_option("--checkpoint", checkpoint)->required();
    tcl->add_option("--data", data, "Dataset (default: the one recorded in the checkpoint)");
    tcl->add_flag("--generate-negatives", generate, "Generate negatives when the dataset has no labels");
    tcl->add_option("--negative-seed", neg_seed, "Seed for generated negatives");
    tcl->add_option("--out", out_dir, "Report directory (default: next to the checkpoint)");

    std::string format;
    auto* ex = app.add_subcommand("export", "Export embeddings");
    ex->add_option("--checkpoint", checkpoint)->required();
    ex->add_option("--format", format, "text or binary")->required();
    ex->add_option("--out", out_file, "Output file")->required();
    ex->add_option("--data", data, "Dataset for entity and relation names (text format)");

    std::size_t max_len = 2, memory_mb = 2048;
    double threshold = 0.01;
    auto* pb = app.add_subcommand("paths-build", "Enumerate relation paths with reliabilities");
    pb->add_option("--data", data)->required();
    pb->add_option("--max-len", max_len);
    pb->add_option("--threshold", threshold);
    pb->add_option("--memory-mb", memory_mb);
    pb->add_option("--workers", workers);
    pb->add_option("--out", out_file, "Dump file");

    std::vector<std::string> argv_store{"kge"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*stats) return cmd_prepare_stats(data, constraints, out_file, out, err);
        if (*tr) return cmd_train(config_file, overrides, data, out_dir, progress, out, err);
        if (*lp) return cmd_eval_lp(checkpoint, data, filter, tc, by_category, workers, split, constraints, out_dir, out, err);
        if (*tcl) return cmd_eval_tc(checkpoint, data, generate, neg_seed, out_dir, out, err);
        if (*ex) return cmd_export(checkpoint, format, out_file, data, out);
        if (*pb) return cmd_paths_build(data, max_len, threshold, memory_mb, workers, out_file, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace kge
