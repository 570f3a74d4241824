#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kge/types.hpp"

namespace kge {

struct Vocab {
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;

    std::size_t num_entities() const { return entity_names.size(); }
    std::size_t num_relations() const { return relation_names.size(); }
};

// Allowed entity sets for one relation. Both vectors are sorted and unique.
struct TypeConstraint {
    std::vector<EntityId> heads;
    std::vector<EntityId> tails;

    bool allows(Side side, EntityId e) const;
    std::span<const EntityId> allowed(Side side) const { return side == Side::Head ? heads : tails; }
};

struct Dataset {
    Vocab vocab;
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
    // Labeled negatives for triple classification (WN11/FB13 style). Empty for
    // pure link-prediction datasets.
    std::vector<Triple> valid_negatives;
    std::vector<Triple> test_negatives;
    // Indexed by relation id; nullopt means the relation is unconstrained.
    // The outer optional is empty when no constraint file was loaded.
    std::optional<std::vector<std::optional<TypeConstraint>>> type_constraints;
    // Relations with id >= this are synthetic inverses (see add_inverse_relations).
    std::size_t original_relation_count = 0;

    std::size_t num_entities() const { return vocab.num_entities(); }
    std::size_t num_relations() const { return vocab.num_relations(); }
    bool has_labels() const { return !valid_negatives.empty() || !test_negatives.empty(); }
    const TypeConstraint* constraint(RelationId r) const;
};

// Reads entity2id, relation2id, train2id, valid2id, test2id (with or without a
// .txt extension). Split lines are "head tail relation" with an optional
// trailing label 1/-1; label -1 rows become the split's negatives. Optional
// valid_neg2id / test_neg2id files are read as negatives too.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes the five files in canonical form (splits sorted by head, relation,
// tail; negatives appended with label -1).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct ConstraintLoadResult {
    std::size_t constrained_relations = 0;
    std::size_t train_violations = 0;
    std::size_t duplicate_ids = 0;
};

ConstraintLoadResult load_type_constraints(const std::filesystem::path& file, Dataset& ds);

// Returns the first existing path among "<dir>/<stem>.txt" and "<dir>/<stem>".
std::optional<std::filesystem::path> find_data_file(const std::filesystem::path& dir, const std::string& stem);

enum class Category { OneToOne, OneToMany, ManyToOne, ManyToMany };

inline constexpr double kCategoryThreshold = 1.5;

const char* to_string(Category c);
Category category_from_string(const std::string& s);

struct RelationStat {
    std::size_t triple_count = 0;
    std::size_t distinct_heads = 0;
    std::size_t distinct_tails = 0;
    std::size_t distinct_pairs = 0;
    double tph = 0.0;  // mean tails per observed head
    double hpt = 0.0;  // mean heads per observed tail
    Category category = Category::ManyToMany;
};

struct RelationStats {
    std::vector<RelationStat> relations;
    std::vector<RelationId> empty_relations;  // no training triples

    const RelationStat& operator[](RelationId r) const { return relations.at(r); }
    std::size_t size() const { return relations.size(); }
};

RelationStats compute_stats(const Dataset& ds);

class FilterIndex {
public:
    FilterIndex() = default;
    explicit FilterIndex(const Dataset& ds);

    bool contains(const Triple& t) const { return members_.contains(t); }
    std::size_t size() const { return members_.size(); }
    // Known tails for (h, r) and known heads for (r, t), sorted.
    std::span<const EntityId> tails(EntityId h, RelationId r) const;
    std::span<const EntityId> heads(RelationId r, EntityId t) const;

private:
    void insert(const Triple& t);

    std::unordered_set<Triple, TripleHash> members_;
    std::unordered_map<std::uint64_t, std::vector<EntityId>> tails_;
    std::unordered_map<std::uint64_t, std::vector<EntityId>> heads_;
};

inline FilterIndex build_filter_index(const Dataset& ds) { return FilterIndex(ds); }

}  // namespace kge
