#include "kge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace kge {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool has_paths(const std::vector<RelationPath>* paths, RelationId r) {
    if (!paths) return false;
    for (const auto& p : *paths)
        if (!(p.relations.size() == 1 && p.relations[0] == r)) return true;
    return false;
}

// Everything one positive triple contributes: loss, and gradient into grad.
class StepKernel {
public:
    StepKernel(const TrainConfig& cfg, const Corruptor& corruptor, const PathIndex* paths, std::size_t num_relations)
        : cfg_(cfg), corruptor_(corruptor), paths_(paths), num_relations_(num_relations) {}

    double run(const ModelParams& params, const Triple& pos, Rng& rng, Gradient& grad) const {
        double loss = 0.0;
        const double ep = energy(params, pos);
        for (std::size_t n = 0; n < cfg_.negatives_per_positive; ++n) {
            const Triple neg = corruptor_.corrupt(pos, rng);
            const double en = energy(params, neg);
            if (!std::isfinite(ep) || !std::isfinite(en)) {
                loss += std::abs(ep) + std::abs(en);  // reported by the caller's finiteness check
                continue;
            }
            if (cfg_.objective == Objective::Margin) {
                const double v = margin_loss(ep, en, cfg_.margin);
                if (v > 0.0) {
                    loss += v;
                    accumulate_energy_gradient(params, pos, 1.0, grad);
                    accumulate_energy_gradient(params, neg, -1.0, grad);
                }
            } else {
                loss += logistic_loss(ep, en, cfg_.bias);
                const double gpos = -ep + cfg_.bias, gneg = -en + cfg_.bias;
                accumulate_energy_gradient(params, pos, sigmoid(-gpos), grad);
                accumulate_energy_gradient(params, neg, -sigmoid(gneg), grad);
            }
        }
        if (paths_) {
            const auto* found = paths_->find(pos.head, pos.tail);
            if (has_paths(found, pos.relation)) {
                std::uniform_int_distribution<std::size_t> pick(0, num_relations_ - 2);
                auto r_neg = static_cast<RelationId>(pick(rng));
                if (r_neg >= pos.relation) ++r_neg;
                loss += path_margin_loss(params, pos.relation, r_neg, *found, cfg_.paths.composition, cfg_.margin,
                                         1.0, &grad);
            }
        }
        return loss;
    }

private:
    const TrainConfig& cfg_;
    const Corruptor& corruptor_;
    const PathIndex* paths_;
    std::size_t num_relations_;
};

[[noreturn]] void non_finite(std::size_t epoch, std::size_t batch, const Triple& t, double loss) {
    throw NumericError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch + 1) +
                       ", batch " + std::to_string(batch + 1) + ", triple " + to_string(t));
}

}  // namespace

const char* to_string(Objective o) { return o == Objective::Margin ? "margin" : "logistic"; }

Objective objective_from_string(std::string_view s) {
    if (s == "margin") return Objective::Margin;
    if (s == "logistic") return Objective::Logistic;
    throw ConfigError("unknown objective '" + std::string(s) + "'");
}

double margin_loss(double energy_pos, double energy_neg, double margin) {
    const double v = energy_pos + margin - energy_neg;
    return v > 0.0 || std::isnan(v) ? v : 0.0;  // NaN must reach the finiteness check
}

double logistic_loss(double energy_pos, double energy_neg, double bias) {
    const double gpos = -energy_pos + bias;
    const double gneg = -energy_neg + bias;
    return softplus(-gpos) + softplus(gneg);
}

void TrainConfig::validate() const {
    if (model.dim == 0) throw ConfigError("dim must be >= 1");
    if (objective == Objective::Margin && !(margin > 0.0)) throw ConfigError("margin must be > 0");
    if (!std::isfinite(bias)) throw ConfigError("bias must be finite");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batches_per_epoch == 0) throw ConfigError("batches_per_epoch must be >= 1");
    if (negatives_per_positive == 0) throw ConfigError("negatives_per_positive must be >= 1");
    if (workers == 0) throw ConfigError("workers must be >= 1");
    if (early_stopping && patience == 0) throw ConfigError("patience must be >= 1");
    if (theta_min < 0.0 || theta_min > 1.0) throw ConfigError("theta_min must lie in [0, 1]");
    if (paths.enabled) {
        if (model.kind != ModelKind::TransE_L1 && model.kind != ModelKind::TransE_L2)
            throw ConfigError("paths require a TransE base model");
        if (objective != Objective::Margin) throw ConfigError("paths require the margin objective");
        if (paths.max_len < 1 || paths.max_len > 3) throw ConfigError("path max_len must be 1, 2 or 3");
    }
}

const char* mode_label(const TrainConfig& config) { return config.deterministic() ? "deterministic" : "parallel"; }

TrainReport train(const Dataset& ds, const TrainConfig& cfg, const TrainHooks& hooks, const ModelParams* initial) {
    cfg.validate();
    if (ds.train.empty()) throw DataError("training split is empty");
    const auto start = std::chrono::steady_clock::now();

    Dataset augmented;
    const Dataset* data = &ds;
    if (cfg.paths.enabled) {
        augmented = add_inverse_relations(ds);
        data = &augmented;
    }
    const RelationStats stats = compute_stats(*data);

    TrainReport report;
    report.mode = mode_label(cfg);
    if (initial) {
        report.params = *initial;
        validate_params(report.params);
        if (report.params.num_entities != data->num_entities() || report.params.num_relations != data->num_relations())
            throw DataError("initial parameters do not match the dataset vocabulary");
    } else {
        std::optional<SparsityDegrees> degrees;
        if (cfg.model.kind == ModelKind::TranSparseShare || cfg.model.kind == ModelKind::TranSparseSeparate)
            degrees = compute_sparsity_degrees(stats, cfg.theta_min, cfg.model.kind == ModelKind::TranSparseSeparate);
        report.params = init_params(cfg.model, data->num_entities(), data->num_relations(), cfg.seed,
                                    degrees ? &*degrees : nullptr);
    }
    ModelParams& params = report.params;

    std::optional<FilterIndex> filter;
    if (cfg.sampling.reject_known_positives) filter.emplace(*data);
    const Corruptor corruptor(*data, stats, cfg.sampling, filter ? &*filter : nullptr);

    std::optional<PathIndex> path_index;
    if (cfg.paths.enabled) {
        path_index = enumerate_paths(*data, cfg.paths, cfg.workers);
        report.path_pairs = path_index->num_pairs();
        report.path_count = path_index->num_paths();
    }
    const StepKernel kernel(cfg, corruptor, path_index ? &*path_index : nullptr, data->num_relations());
    Optimizer optimizer(cfg.optimizer, params);

    const std::size_t n = data->train.size();
    const std::size_t batches = std::min(cfg.batches_per_epoch, n);
    const std::size_t denom = n * cfg.negatives_per_positive;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);

    const std::size_t workers = cfg.workers;
    std::vector<Rng> worker_rngs;
    for (std::size_t w = 0; w < workers; ++w) worker_rngs.emplace_back(splitmix(cfg.seed + w + 1));
    Gradient grad;

    double best_hits = -1.0;
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * n / batches, hi = (b + 1) * n / batches;
            if (workers <= 1) {
                grad.clear();
                for (std::size_t i = lo; i < hi; ++i) {
                    const Triple& t = data->train[order[i]];
                    const double l = kernel.run(params, t, rng, grad);
                    if (!std::isfinite(l)) non_finite(epoch, b, t, l);
                    epoch_loss += l;
                }
                if (!std::isfinite(grad.max_abs())) non_finite(epoch, b, data->train[order[lo]], grad.max_abs());
                optimizer.apply(params, grad);
                project_touched(params, grad);
                continue;
            }

            // Lock-free mode: each worker takes a slice of the batch and applies
            // its own sparse updates in small chunks.
            constexpr std::size_t kChunk = 32;
            std::vector<double> losses(workers, 0.0);
            std::vector<std::vector<std::pair<Block, std::uint32_t>>> touched(workers);
            std::exception_ptr failure;
            std::mutex failure_mu;
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        const std::size_t wlo = lo + (hi - lo) * w / workers, whi = lo + (hi - lo) * (w + 1) / workers;
                        Gradient g;
                        for (std::size_t c = wlo; c < whi; c += kChunk) {
                            g.clear();
                            for (std::size_t i = c; i < std::min(whi, c + kChunk); ++i) {
                                const Triple& t = data->train[order[i]];
                                const double l = kernel.run(params, t, worker_rngs[w], g);
                                if (!std::isfinite(l)) non_finite(epoch, b, t, l);
                                losses[w] += l;
                            }
                            optimizer.apply(params, g);
                            for (const auto& e : g.entries()) touched[w].emplace_back(e.block, e.row);
                        }
                    } catch (...) {
                        std::lock_guard lock(failure_mu);
                        if (!failure) failure = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            if (failure) std::rethrow_exception(failure);
            for (std::size_t w = 0; w < workers; ++w) {
                epoch_loss += losses[w];
                for (const auto& [block, row] : touched[w]) project_row(params, block, row);
            }
        }

        const double mean = epoch_loss / static_cast<double>(denom);
        if (!std::isfinite(mean)) throw NumericError("non-finite mean loss at epoch " + std::to_string(epoch + 1));
        report.epoch_loss.push_back(mean);
        report.epochs_run = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(epoch + 1, mean);

        if (cfg.valid_every > 0 && (epoch + 1) % cfg.valid_every == 0) {
            if (hooks.on_checkpoint) hooks.on_checkpoint(epoch + 1, params, optimizer);
            if (hooks.validate) {
                const double h = hooks.validate(params);
                report.valid_hits10.emplace_back(epoch + 1, h);
                if (h > best_hits) {
                    best_hits = h;
                    stale = 0;
                } else if (cfg.early_stopping && ++stale >= cfg.patience) {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if (hooks.on_finish) hooks.on_finish(params, optimizer);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace kge
