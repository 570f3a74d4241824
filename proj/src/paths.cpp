#include "kge/paths.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace kge {

namespace {

// Relation sequences of length <= 3 packed as (r + 1) in 21-bit slots.
constexpr unsigned kSlotBits = 21;
constexpr std::uint64_t kSlotMask = (std::uint64_t{1} << kSlotBits) - 1;
constexpr std::size_t kMaxPackedLen = 3;

std::uint64_t append(std::uint64_t packed, std::size_t len, RelationId r) {
    return packed | ((std::uint64_t{r} + 1) << (kSlotBits * len));
}

std::uint64_t prepend(std::uint64_t packed, RelationId r) { return (packed << kSlotBits) | (std::uint64_t{r} + 1); }

std::vector<RelationId> unpack(std::uint64_t packed) {
    std::vector<RelationId> out;
    while (packed) {
        out.push_back(static_cast<RelationId>((packed & kSlotMask) - 1));
        packed >>= kSlotBits;
    }
    return out;
}

struct State {
    std::uint64_t path;
    EntityId node;
    friend bool operator==(const State&, const State&) = default;
};

struct StateHash {
    std::size_t operator()(const State& s) const noexcept {
        std::uint64_t k = s.path * 0x9e3779b97f4a7c15ULL ^ (std::uint64_t{s.node} + 0x632be59bd9b4e019ULL);
        k ^= k >> 31;
        k *= 0xbf58476d1ce4e5b9ULL;
        k ^= k >> 29;
        return static_cast<std::size_t>(k);
    }
};

using Frontier = std::unordered_map<State, double, StateHash>;

void sort_paths(PathMap& m) {
    for (auto& [node, paths] : m)
        std::sort(paths.begin(), paths.end(),
                  [](const RelationPath& a, const RelationPath& b) { return a.relations < b.relations; });
}

double norm_of(const std::vector<double>& v, Norm norm) {
    double s = 0.0;
    if (norm == Norm::L1) {
        for (double x : v) s += std::abs(x);
        return s;
    }
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void norm_gradient(const std::vector<double>& v, Norm norm, std::vector<double>& g) {
    g.resize(v.size());
    if (norm == Norm::L1) {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
        return;
    }
    const double len = norm_of(v, Norm::L2);
    for (std::size_t i = 0; i < v.size(); ++i) g[i] = len > 0.0 ? v[i] / len : 0.0;
}

template <class Real>
std::vector<double> compose(std::span<const RelationId> rels, const BasicParams<Real>& params, Composition mode) {
    if (rels.empty()) throw std::invalid_argument("cannot compose an empty path");
    const std::size_t d = params.get(Block::Relation).cols;
    std::vector<double> out(d);
    auto first = params.row(Block::Relation, rels[0]);
    for (std::size_t i = 0; i < d; ++i) out[i] = double(first[i]);
    for (std::size_t j = 1; j < rels.size(); ++j) {
        auto row = params.row(Block::Relation, rels[j]);
        if (mode == Composition::Add)
            for (std::size_t i = 0; i < d; ++i) out[i] += double(row[i]);
        else
            for (std::size_t i = 0; i < d; ++i) out[i] *= double(row[i]);
    }
    return out;
}

bool is_direct(const RelationPath& p, RelationId r) { return p.relations.size() == 1 && p.relations[0] == r; }

void require_translation_base(const ModelSpec& spec) {
    if (spec.kind != ModelKind::TransE_L1 && spec.kind != ModelKind::TransE_L2)
        throw ConfigError("path scoring needs a TransE base model");
}

}  // namespace

const char* to_string(Composition c) { return c == Composition::Add ? "add" : "mul"; }

Composition composition_from_string(std::string_view s) {
    std::string v(s);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "add") return Composition::Add;
    if (v == "mul") return Composition::Mul;
    throw ConfigError("unknown path composition '" + std::string(s) + "'");
}

Dataset add_inverse_relations(const Dataset& ds) {
    Dataset out = ds;
    const std::size_t n = ds.num_relations();
    std::unordered_set<std::string> names(ds.vocab.relation_names.begin(), ds.vocab.relation_names.end());
    for (std::size_t r = 0; r < n; ++r) {
        std::string inv = ds.vocab.relation_names[r] + std::string(kInverseSuffix);
        if (names.contains(inv)) throw DataError("relation name '" + inv + "' already exists");
        out.vocab.relation_names.push_back(std::move(inv));
    }
    out.train.reserve(2 * ds.train.size());
    for (const auto& t : ds.train)
        out.train.push_back({t.tail, static_cast<RelationId>(t.relation + n), t.head});
    if (ds.type_constraints) {
        auto& tc = *out.type_constraints;
        tc.resize(2 * n);
        for (std::size_t r = 0; r < n; ++r)
            if ((*ds.type_constraints)[r]) {
                const auto& c = *(*ds.type_constraints)[r];
                tc[r + n] = TypeConstraint{c.tails, c.heads};
            }
    }
    out.original_relation_count = ds.original_relation_count ? ds.original_relation_count : n;
    return out;
}

PathGraph::PathGraph(const Dataset& ds) : num_relations_(ds.num_relations()) {
    const std::size_t n = ds.num_entities();
    out_offsets_.assign(n + 1, 0);
    in_offsets_.assign(n + 1, 0);
    for (const auto& t : ds.train) {
        ++out_offsets_[t.head + 1];
        ++in_offsets_[t.tail + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
        out_offsets_[i + 1] += out_offsets_[i];
        in_offsets_[i + 1] += in_offsets_[i];
    }
    out_.resize(ds.train.size());
    in_.resize(ds.train.size());
    auto out_pos = out_offsets_, in_pos = in_offsets_;
    for (const auto& t : ds.train) {
        out_[out_pos[t.head]++] = {t.relation, t.tail};
        in_[in_pos[t.tail]++] = {t.relation, t.head};
    }
    auto less = [](const Edge& a, const Edge& b) { return std::tie(a.relation, a.node) < std::tie(b.relation, b.node); };
    for (std::size_t i = 0; i < n; ++i) {
        std::sort(out_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[i]),
                  out_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[i + 1]), less);
        std::sort(in_.begin() + static_cast<std::ptrdiff_t>(in_offsets_[i]),
                  in_.begin() + static_cast<std::ptrdiff_t>(in_offsets_[i + 1]), less);
    }
}

std::span<const PathGraph::Edge> PathGraph::out_edges(EntityId e) const {
    return {out_.data() + out_offsets_[e], out_offsets_[e + 1] - out_offsets_[e]};
}

std::span<const PathGraph::Edge> PathGraph::in_edges(EntityId e) const {
    return {in_.data() + in_offsets_[e], in_offsets_[e + 1] - in_offsets_[e]};
}

std::size_t PathGraph::out_degree(EntityId e, RelationId r) const {
    auto edges = out_edges(e);
    auto lo = std::lower_bound(edges.begin(), edges.end(), r, [](const Edge& x, RelationId v) { return x.relation < v; });
    auto hi = std::upper_bound(lo, edges.end(), r, [](RelationId v, const Edge& x) { return v < x.relation; });
    return static_cast<std::size_t>(hi - lo);
}

PathFinder::PathFinder(const PathGraph& graph, std::size_t max_len, double threshold)
    : graph_(graph), max_len_(max_len), threshold_(threshold) {
    if (max_len < 1 || max_len > kMaxPackedLen) throw ConfigError("path max_len must be 1, 2 or 3");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("path threshold must lie in [0, 1]");
    if (graph.num_relations() >= kSlotMask) throw ConfigError("too many relations for path packing");
}

PathMap PathFinder::forward(EntityId head) const {
    PathMap out;
    Frontier frontier{{State{0, head}, 1.0}};
    for (std::size_t len = 0; len < max_len_; ++len) {
        Frontier next;
        for (const auto& [state, res] : frontier) {
            if (res < threshold_) continue;
            auto edges = graph_.out_edges(state.node);
            for (std::size_t i = 0; i < edges.size();) {
                std::size_t j = i;
                while (j < edges.size() && edges[j].relation == edges[i].relation) ++j;
                const double share = res / static_cast<double>(j - i);
                const auto path = append(state.path, len, edges[i].relation);
                for (std::size_t k = i; k < j; ++k) next[State{path, edges[k].node}] += share;
                i = j;
            }
        }
        for (const auto& [state, res] : next)
            if (state.node != head && res >= threshold_) out[state.node].push_back({unpack(state.path), res});
        frontier = std::move(next);
    }
    sort_paths(out);
    return out;
}

PathMap PathFinder::backward(EntityId tail) const {
    PathMap out;
    Frontier frontier{{State{0, tail}, 1.0}};
    for (std::size_t len = 0; len < max_len_; ++len) {
        Frontier next;
        for (const auto& [state, value] : frontier) {
            // Resource only shrinks along a path, so weak suffixes stay weak.
            if (value < threshold_) continue;
            for (const auto& e : graph_.in_edges(state.node)) {
                const double v = value / static_cast<double>(graph_.out_degree(e.node, e.relation));
                next[State{prepend(state.path, e.relation), e.node}] += v;
            }
        }
        for (const auto& [state, value] : next)
            if (state.node != tail && value >= threshold_) out[state.node].push_back({unpack(state.path), value});
        frontier = std::move(next);
    }
    sort_paths(out);
    return out;
}

std::vector<RelationPath> PathFinder::between(EntityId head, EntityId tail) const {
    auto m = forward(head);
    auto it = m.find(tail);
    return it == m.end() ? std::vector<RelationPath>{} : std::move(it->second);
}

const std::vector<RelationPath>* PathIndex::find(EntityId h, EntityId t) const {
    auto it = map_.find(key(h, t));
    return it == map_.end() ? nullptr : &it->second;
}

void PathIndex::insert(EntityId h, EntityId t, std::vector<RelationPath> paths) {
    num_paths_ += paths.size();
    auto& slot = map_[key(h, t)];
    num_paths_ -= slot.size();
    slot = std::move(paths);
}

void PathIndex::dump(std::ostream& out) const {
    std::vector<std::uint64_t> keys;
    keys.reserve(map_.size());
    for (const auto& [k, v] : map_) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    char buf[64];
    for (auto k : keys) {
        const auto h = static_cast<EntityId>(k >> 32);
        const auto t = static_cast<EntityId>(k & 0xffffffffu);
        for (const auto& p : map_.at(k)) {
            out << h << '\t' << t << '\t';
            for (std::size_t i = 0; i < p.relations.size(); ++i) out << (i ? "," : "") << p.relations[i];
            std::snprintf(buf, sizeof buf, "%.9g", p.reliability);
            out << '\t' << buf << '\n';
        }
    }
}

PathIndex enumerate_paths(const Dataset& ds, const PathOptions& options, std::size_t workers) {
    PathGraph graph(ds);
    PathFinder finder(graph, options.max_len, options.threshold);

    std::vector<std::vector<EntityId>> targets(ds.num_entities());
    for (const auto& t : ds.train) targets[t.head].push_back(t.tail);
    std::vector<EntityId> heads;
    for (std::size_t h = 0; h < targets.size(); ++h) {
        auto& v = targets[h];
        if (v.empty()) continue;
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        heads.push_back(static_cast<EntityId>(h));
    }

    struct Found {
        EntityId h, t;
        std::vector<RelationPath> paths;
    };
    const std::size_t budget = options.memory_budget_mb * std::size_t{1024} * 1024;
    std::atomic<std::size_t> next{0}, bytes{0}, stored_paths{0};
    std::atomic<bool> stop{false};
    std::vector<std::vector<Found>> per_head(heads.size());
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto work = [&] {
        try {
            for (std::size_t i = next++; i < heads.size() && !stop; i = next++) {
                const EntityId h = heads[i];
                auto found = finder.forward(h);
                for (EntityId t : targets[h]) {
                    auto it = found.find(t);
                    if (it == found.end()) continue;
                    std::size_t b = 64;
                    for (const auto& p : it->second) b += sizeof(RelationPath) + p.relations.size() * sizeof(RelationId);
                    stored_paths += it->second.size();
                    if (bytes.fetch_add(b) + b > budget) {
                        stop = true;
                        throw PathBudgetError("path index exceeds memory budget of " +
                                              std::to_string(options.memory_budget_mb) + " MB after " +
                                              std::to_string(stored_paths.load()) + " paths over " +
                                              std::to_string(i + 1) + " of " + std::to_string(heads.size()) +
                                              " head entities");
                    }
                    per_head[i].push_back({h, t, std::move(it->second)});
                }
            }
        } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            stop = true;
        }
    };

    const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, heads.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    PathIndex index;
    for (auto& list : per_head)
        for (auto& f : list) index.insert(f.h, f.t, std::move(f.paths));
    return index;
}

std::vector<double> compose_path(std::span<const RelationId> relations, const ModelParams& params, Composition mode) {
    return compose(relations, params, mode);
}

template <class Real>
double path_term(const BasicParams<Real>& params, RelationId r, const std::vector<RelationPath>& paths,
                 Composition mode) {
    double z = 0.0;
    for (const auto& p : paths)
        if (!is_direct(p, r)) z += p.reliability;
    if (z <= 0.0) return 0.0;
    const Norm norm = params.spec.effective_norm();
    auto rel = params.row(Block::Relation, r);
    double sum = 0.0;
    for (const auto& p : paths) {
        if (is_direct(p, r)) continue;
        auto v = compose(p.relations, params, mode);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= double(rel[i]);
        sum += p.reliability * norm_of(v, norm);
    }
    return sum / z;
}

double score_ptranse(const ModelParams& params, const Triple& t, const PathIndex& index, Composition mode) {
    require_translation_base(params.spec);
    double e = energy(params, t);
    if (const auto* paths = index.find(t.head, t.tail)) e += path_term(params, t.relation, *paths, mode);
    return e;
}

template <class Real>
double path_margin_loss(const BasicParams<Real>& params, RelationId r, RelationId r_neg,
                        const std::vector<RelationPath>& paths, Composition mode, double margin, double scale,
                        Gradient* grad) {
    double z = 0.0;
    for (const auto& p : paths)
        if (!is_direct(p, r)) z += p.reliability;
    if (z <= 0.0) return 0.0;
    const Norm norm = params.spec.effective_norm();
    const std::size_t d = params.get(Block::Relation).cols;
    auto rel = params.row(Block::Relation, r);
    auto neg = params.row(Block::Relation, r_neg);
    std::vector<double> comp, dpos(d), dneg(d), gp, gn, up(d);
    double loss = 0.0;
    for (const auto& p : paths) {
        if (is_direct(p, r)) continue;
        comp = compose(p.relations, params, mode);
        for (std::size_t i = 0; i < d; ++i) {
            dpos[i] = comp[i] - double(rel[i]);
            dneg[i] = comp[i] - double(neg[i]);
        }
        const double w = p.reliability / z;
        const double hinge = norm_of(dpos, norm) + margin - norm_of(dneg, norm);
        if (hinge <= 0.0) continue;
        loss += w * hinge;
        if (!grad) continue;
        norm_gradient(dpos, norm, gp);
        norm_gradient(dneg, norm, gn);
        const double s = w * scale;
        {
            auto g = grad->row(Block::Relation, r, d);
            for (std::size_t i = 0; i < d; ++i) g[i] -= s * gp[i];
        }
        {
            auto g = grad->row(Block::Relation, r_neg, d);
            for (std::size_t i = 0; i < d; ++i) g[i] += s * gn[i];
        }
        for (std::size_t i = 0; i < d; ++i) up[i] = s * (gp[i] - gn[i]);
        // Push d(loss)/dp back through the composition.
        for (std::size_t j = 0; j < p.relations.size(); ++j) {
            auto g = grad->row(Block::Relation, p.relations[j], d);
            if (mode == Composition::Add) {
                for (std::size_t i = 0; i < d; ++i) g[i] += up[i];
                continue;
            }
            for (std::size_t i = 0; i < d; ++i) {
                double others = 1.0;
                for (std::size_t l = 0; l < p.relations.size(); ++l)
                    if (l != j) others *= double(params.row(Block::Relation, p.relations[l])[i]);
                g[i] += up[i] * others;
            }
        }
    }
    return loss;
}

template double path_term<float>(const BasicParams<float>&, RelationId, const std::vector<RelationPath>&, Composition);
template double path_term<double>(const BasicParams<double>&, RelationId, const std::vector<RelationPath>&,
                                  Composition);
template double path_margin_loss<float>(const BasicParams<float>&, RelationId, RelationId,
                                        const std::vector<RelationPath>&, Composition, double, double, Gradient*);
template double path_margin_loss<double>(const BasicParams<double>&, RelationId, RelationId,
                                         const std::vector<RelationPath>&, Composition, double, double, Gradient*);

}  // namespace kge
