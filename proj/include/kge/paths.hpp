#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kge/data.hpp"
#include "kge/model.hpp"

namespace kge {

enum class Composition { Add, Mul };

const char* to_string(Composition c);
Composition composition_from_string(std::string_view s);

struct RelationPath {
    std::vector<RelationId> relations;
    double reliability = 0.0;
};

struct PathOptions {
    bool enabled = false;
    Composition composition = Composition::Add;
    std::size_t max_len = 2;
    double threshold = 0.01;
    std::size_t memory_budget_mb = 2048;
};

inline constexpr std::string_view kInverseSuffix = "\xE2\x81\xBB\xC2\xB9";  // "⁻¹"

// Appends r⁻¹ for every relation (id r + |R|) and a reversed copy of every
// training triple. valid/test keep their original relations.
Dataset add_inverse_relations(const Dataset& ds);

// Relation-labeled adjacency of a training graph with per-(node, relation)
// out-degrees, used for resource flow in both directions.
class PathGraph {
public:
    explicit PathGraph(const Dataset& ds);

    struct Edge {
        RelationId relation;
        EntityId node;
    };
    // Out-edges sorted by (relation, target); in-edges sorted by (relation, source).
    std::span<const Edge> out_edges(EntityId e) const;
    std::span<const Edge> in_edges(EntityId e) const;
    std::size_t out_degree(EntityId e, RelationId r) const;
    std::size_t num_entities() const { return out_offsets_.size() - 1; }
    std::size_t num_relations() const { return num_relations_; }

private:
    std::size_t num_relations_ = 0;
    std::vector<std::size_t> out_offsets_, in_offsets_;
    std::vector<Edge> out_, in_;
};

// Paths grouped by the entity at the other end.
using PathMap = std::unordered_map<EntityId, std::vector<RelationPath>>;

// Resource-flow path search. forward(h) yields, for every entity t reachable
// within max_len hops, the relation sequences h ~> t with their reliability:
// resource 1 starts at h and splits equally among the out-edges that carry the
// next relation. backward(t) yields the same reliabilities for every source.
// Paths below threshold are dropped; the endpoint itself is never reported.
class PathFinder {
public:
    PathFinder(const PathGraph& graph, std::size_t max_len, double threshold);

    PathMap forward(EntityId head) const;
    PathMap backward(EntityId tail) const;
    std::vector<RelationPath> between(EntityId head, EntityId tail) const;

    std::size_t max_len() const { return max_len_; }
    double threshold() const { return threshold_; }

private:
    const PathGraph& graph_;
    std::size_t max_len_;
    double threshold_;
};

// P(h, t) for training pairs.
class PathIndex {
public:
    const std::vector<RelationPath>* find(EntityId h, EntityId t) const;
    void insert(EntityId h, EntityId t, std::vector<RelationPath> paths);
    std::size_t num_pairs() const { return map_.size(); }
    std::size_t num_paths() const { return num_paths_; }
    bool empty() const { return map_.empty(); }

    // "h<TAB>t<TAB>r1,...,rl<TAB>R" per path, sorted by (h, t, relations).
    void dump(std::ostream& out) const;

private:
    static std::uint64_t key(EntityId h, EntityId t) { return (std::uint64_t{h} << 32) | t; }
    std::unordered_map<std::uint64_t, std::vector<RelationPath>> map_;
    std::size_t num_paths_ = 0;
};

class PathBudgetError : public DataError {
public:
    using DataError::DataError;
};

// Enumerates paths for every distinct (h, t) pair of ds.train. ds is expected
// to carry inverse relations already. Work is split across `workers` threads
// by head entity.
PathIndex enumerate_paths(const Dataset& ds, const PathOptions& options, std::size_t workers = 1);

std::vector<double> compose_path(std::span<const RelationId> relations, const ModelParams& params, Composition mode);

// (1/Z) * sum R(p) * ||p - r|| over paths, skipping the single-edge path equal
// to r. Zero when nothing remains.
template <class Real>
double path_term(const BasicParams<Real>& params, RelationId r, const std::vector<RelationPath>& paths,
                 Composition mode);

// TransE energy plus the reliability-weighted path term for P(h, t).
double score_ptranse(const ModelParams& params, const Triple& t, const PathIndex& index, Composition mode);

// Path part of the training objective for one positive triple:
// sum_p R(p)/Z * max(0, ||p - r|| + margin - ||p - r_neg||).
// Gradient (times scale) is added to grad when non-null.
template <class Real>
double path_margin_loss(const BasicParams<Real>& params, RelationId r, RelationId r_neg,
                        const std::vector<RelationPath>& paths, Composition mode, double margin, double scale,
                        Gradient* grad);

}  // namespace kge
