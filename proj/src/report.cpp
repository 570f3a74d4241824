#include "kge/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>
#include <vector>

namespace kge {

namespace {

using json = nlohmann::ordered_json;

json metrics_json(const Metrics& m, bool filter) {
    json j;
    j["count"] = m.count;
    j["mean_rank_raw"] = m.mean_rank_raw;
    j["hits10_raw"] = m.hits10_raw;
    if (filter) {
        j["mean_rank_filter"] = m.mean_rank_filter;
        j["hits10_filter"] = m.hits10_filter;
    }
    return j;
}

constexpr std::array<Category, 4> kCategories{Category::OneToOne, Category::OneToMany, Category::ManyToOne,
                                              Category::ManyToMany};

std::string fixed(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

// Aligned columns; first column left-aligned, the rest right-aligned.
std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (width.size() <= i) width.push_back(0);
            width[i] = std::max(width[i], r[i].size());
        }
    std::ostringstream out;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const auto pad = std::string(width[i] - r[i].size(), ' ');
            if (i == 0)
                out << r[i] << pad;
            else
                out << "  " << pad << r[i];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json config_json(const KeyValues& echo) {
    json j = json::object();
    for (const auto& [k, v] : echo) j[k] = v;
    return j;
}

json link_prediction_json(const EvalReport& report, const LinkPredictionRun& run) {
    json j;
    j["schema"] = kReportSchema;
    j["kind"] = "link-prediction";
    j["mode"] = run.mode;
    j["tie_policy"] = kTiePolicy;
    j["dataset"] = run.dataset;
    j["filter"] = run.filter;
    j["type_constraints"] = report.type_constrained;
    j["triples"] = report.head.count;
    j["flagged"] = report.flagged;
    j["metrics"] = metrics_json(report.overall, run.filter);
    j["head"] = metrics_json(report.head, run.filter);
    j["tail"] = metrics_json(report.tail, run.filter);
    if (run.by_category) {
        json cats = json::object();
        for (Category c : kCategories) {
            const auto& cell = report.categories[static_cast<std::size_t>(c)];
            cats[to_string(c)] = {{"head", metrics_json(cell.head, run.filter)},
                                  {"tail", metrics_json(cell.tail, run.filter)}};
        }
        j["categories"] = cats;
    }
    j["config"] = config_json(run.config);
    return j;
}

std::string link_prediction_table(const EvalReport& report, const LinkPredictionRun& run) {
    std::ostringstream out;
    out << "link prediction (" << run.mode << ", ties: " << kTiePolicy
        << (report.type_constrained ? ", type-constrained" : "") << ")\n";
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"", "Mean Rank Raw", "Hits@10 Raw"};
    if (run.filter) {
        header.insert(header.begin() + 2, "Mean Rank Filter");
        header.push_back("Hits@10 Filter");
    }
    rows.push_back(header);
    auto add = [&](const std::string& name, const Metrics& m) {
        std::vector<std::string> r{name, fixed(m.mean_rank_raw, 1), fixed(100.0 * m.hits10_raw, 1)};
        if (run.filter) {
            r.insert(r.begin() + 2, fixed(m.mean_rank_filter, 1));
            r.push_back(fixed(100.0 * m.hits10_filter, 1));
        }
        rows.push_back(r);
    };
    add("all", report.overall);
    add("head", report.head);
    add("tail", report.tail);
    out << render(rows);
    if (run.by_category) {
        out << "\nHits@10 (%) by relation category" << (run.filter ? ", filtered" : ", raw") << "\n";
        std::vector<std::vector<std::string>> cat{{"", "1-1", "1-N", "N-1", "N-N"}};
        for (int side = 0; side < 2; ++side) {
            std::vector<std::string> r{side == 0 ? "predict head" : "predict tail"};
            for (Category c : kCategories) {
                const auto& cell = report.categories[static_cast<std::size_t>(c)];
                const Metrics& m = side == 0 ? cell.head : cell.tail;
                r.push_back(m.count ? fixed(100.0 * (run.filter ? m.hits10_filter : m.hits10_raw), 1) : "-");
            }
            cat.push_back(r);
        }
        out << render(cat);
    }
    if (report.flagged) out << "\n" << report.flagged << " target(s) outside the candidate set\n";
    return out.str();
}

json classification_json(const ClassificationResult& result, const ClassifierThresholds& thresholds,
                         const ClassificationRun& run, const Vocab& vocab) {
    json j;
    j["schema"] = kReportSchema;
    j["kind"] = "triple-classification";
    j["mode"] = run.mode;
    j["dataset"] = run.dataset;
    j["generated_negatives"] = run.generated_negatives;
    if (run.generated_negatives) j["negative_seed"] = run.negative_seed;
    j["accuracy"] = result.accuracy;
    j["correct"] = result.correct;
    j["total"] = result.total;
    j["confusion"] = {{"true_positive", result.true_positive},
                      {"false_positive", result.false_positive},
                      {"true_negative", result.true_negative},
                      {"false_negative", result.false_negative}};
    j["valid_accuracy"] = thresholds.valid_accuracy;
    json th = json::object();
    th["global"] = thresholds.global;
    json per = json::object();
    for (std::size_t r = 0; r < thresholds.per_relation.size(); ++r)
        if (thresholds.per_relation[r]) {
            const std::string name = r < vocab.relation_names.size() ? vocab.relation_names[r] : std::to_string(r);
            per[name] = *thresholds.per_relation[r];
        }
    th["per_relation"] = per;
    j["thresholds"] = th;
    j["config"] = config_json(run.config);
    return j;
}

std::string classification_table(const ClassificationResult& result, const ClassificationRun& run) {
    std::vector<std::vector<std::string>> rows{{"", "Accuracy (%)", "Correct", "Total"}};
    rows.push_back({"triple classification", fixed(100.0 * result.accuracy, 1), std::to_string(result.correct),
                    std::to_string(result.total)});
    std::string out = "triple classification (" + run.mode + ")\n" + render(rows);
    if (run.generated_negatives) out += "negatives generated by typed corruption, seed " + std::to_string(run.negative_seed) + "\n";
    return out;
}

json train_report_json(const TrainReport& report, const KeyValues& config) {
    json j;
    j["schema"] = kReportSchema;
    j["kind"] = "train";
    j["mode"] = report.mode;
    j["epochs_run"] = report.epochs_run;
    j["stopped_early"] = report.stopped_early;
    j["epoch_loss"] = report.epoch_loss;
    json trace = json::array();
    for (const auto& [epoch, hits] : report.valid_hits10) trace.push_back({{"epoch", epoch}, {"hits10_filter", hits}});
    j["valid_hits10"] = trace;
    if (report.path_pairs || report.path_count)
        j["paths"] = {{"pairs", report.path_pairs}, {"paths", report.path_count}};
    j["config"] = config_json(config);
    return j;
}

json stats_json(const Dataset& ds, const RelationStats& stats) {
    json j;
    j["schema"] = kReportSchema;
    j["kind"] = "dataset-stats";
    j["relations"] = ds.num_relations();
    j["entities"] = ds.num_entities();
    j["train"] = ds.train.size();
    j["valid"] = ds.valid.size();
    j["test"] = ds.test.size();
    j["valid_negatives"] = ds.valid_negatives.size();
    j["test_negatives"] = ds.test_negatives.size();
    json counts = json::object();
    for (Category c : kCategories) counts[to_string(c)] = 0;
    json rels = json::array();
    for (std::size_t r = 0; r < stats.size(); ++r) {
        const auto& s = stats.relations[r];
        counts[to_string(s.category)] = counts[to_string(s.category)].get<std::size_t>() + 1;
        rels.push_back({{"name", ds.vocab.relation_names[r]},
                        {"triples", s.triple_count},
                        {"tph", s.tph},
                        {"hpt", s.hpt},
                        {"category", to_string(s.category)}});
    }
    j["categories"] = counts;
    json empty = json::array();
    for (auto r : stats.empty_relations) empty.push_back(ds.vocab.relation_names[r]);
    j["relations_without_training_triples"] = empty;
    j["per_relation"] = rels;
    return j;
}

std::string stats_table(const Dataset& ds, const RelationStats& stats) {
    std::vector<std::vector<std::string>> rows{{"#Rel", "#Ent", "#Train", "#Valid", "#Test"}};
    rows.push_back({std::to_string(ds.num_relations()), std::to_string(ds.num_entities()),
                    std::to_string(ds.train.size()), std::to_string(ds.valid.size()), std::to_string(ds.test.size())});
    std::array<std::size_t, 4> counts{};
    for (const auto& s : stats.relations) ++counts[static_cast<std::size_t>(s.category)];
    std::vector<std::vector<std::string>> cats{{"1-1", "1-N", "N-1", "N-N"}};
    cats.push_back({std::to_string(counts[0]), std::to_string(counts[1]), std::to_string(counts[2]),
                    std::to_string(counts[3])});
    std::string out = render(rows) + "\nrelations by category\n" + render(cats);
    if (!stats.empty_relations.empty())
        out += std::to_string(stats.empty_relations.size()) + " relation(s) without training triples (counted N-N)\n";
    return out;
}

}  // namespace kge
