#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kge/data.hpp"
#include "kge/types.hpp"

namespace kge {

enum class ModelKind : std::uint32_t {
    Unstructured = 0,
    TransE_L1 = 1,
    TransE_L2 = 2,
    TransH = 3,
    TransR = 4,
    TransD = 5,
    TranSparseShare = 6,
    TranSparseSeparate = 7,
    Rescal = 8,
    DistMult = 9,
    HolE = 10,
    ComplEx = 11,
};

inline constexpr std::array kAllModelKinds{
    ModelKind::Unstructured, ModelKind::TransE_L1, ModelKind::TransE_L2,        ModelKind::TransH,
    ModelKind::TransR,       ModelKind::TransD,    ModelKind::TranSparseShare,  ModelKind::TranSparseSeparate,
    ModelKind::Rescal,       ModelKind::DistMult,  ModelKind::HolE,             ModelKind::ComplEx,
};

enum class Norm : std::uint32_t { L1 = 1, L2 = 2 };

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);
const char* to_string(Norm n);
Norm norm_from_string(std::string_view s);

// Distance-based kinds: energy is the norm of a translation residual.
bool is_translational(ModelKind k);
bool has_relation_space(ModelKind k);  // TransR, TransD, TranSparse: relation dim k may differ from d

struct ModelSpec {
    ModelKind kind = ModelKind::TransE_L1;
    Norm norm = Norm::L1;  // ignored by bilinear kinds; forced by TransE_L1/L2
    std::size_t dim = 50;
    std::size_t relation_dim = 0;  // k for relation-space kinds; 0 means "same as dim"

    std::size_t k() const { return relation_dim == 0 ? dim : relation_dim; }
    Norm effective_norm() const;
};

// Parameter blocks. Tensors are stored in this enum's order; absent blocks are
// skipped. This order is also the on-disk order of the binary format.
enum class Block : std::uint8_t {
    Entity,        // |E| x d
    EntityIm,      // |E| x d, ComplEx imaginary parts
    Relation,      // |R| x d (k for relation-space kinds, d*d for RESCAL)
    RelationIm,    // |R| x d, ComplEx
    Normal,        // |R| x d, TransH hyperplane normals
    EntityProj,    // |E| x d, TransD h_p / t_p
    RelationProj,  // |R| x k, TransD r_p
    Proj,          // |R| x (d*k) row-major d x k; TranSparse(separate): head matrix
    ProjTail,      // |R| x (d*k), TranSparse(separate) tail matrix
    Mask,          // |R| x (d*k) 0/1, frozen
    MaskTail,      // |R| x (d*k) 0/1, frozen
    Count,
};

inline constexpr std::size_t kBlockCount = static_cast<std::size_t>(Block::Count);

const char* to_string(Block b);

template <class Real>
struct Tensor {
    Block block = Block::Entity;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool trainable = true;
    std::vector<Real> data;

    std::span<Real> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const Real> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

template <class Real>
struct BasicParams {
    ModelSpec spec;
    std::size_t num_entities = 0;
    std::size_t num_relations = 0;
    std::vector<Tensor<Real>> tensors;
    std::array<int, kBlockCount> slot{};

    BasicParams() { slot.fill(-1); }

    bool has(Block b) const { return slot[static_cast<std::size_t>(b)] >= 0; }
    Tensor<Real>& get(Block b) { return tensors.at(static_cast<std::size_t>(slot[static_cast<std::size_t>(b)])); }
    const Tensor<Real>& get(Block b) const {
        return tensors.at(static_cast<std::size_t>(slot[static_cast<std::size_t>(b)]));
    }
    std::span<const Real> row(Block b, std::size_t i) const { return get(b).row(i); }
    std::span<Real> row(Block b, std::size_t i) { return get(b).row(i); }

    void add_tensor(Block b, std::size_t rows, std::size_t cols, bool trainable);

    template <class To>
    BasicParams<To> cast() const {
        BasicParams<To> out;
        out.spec = spec;
        out.num_entities = num_entities;
        out.num_relations = num_relations;
        out.slot = slot;
        for (const auto& t : tensors) {
            Tensor<To> c{t.block, t.rows, t.cols, t.trainable, {}};
            c.data.assign(t.data.begin(), t.data.end());
            out.tensors.push_back(std::move(c));
        }
        return out;
    }
};

using ModelParams = BasicParams<float>;

// Per-relation sparse degrees theta_r for TranSparse. `tail` is only used by the
// separate variant.
struct SparsityDegrees {
    std::vector<double> head;
    std::vector<double> tail;
};

// theta_r = 1 - (1 - theta_min) * N_r / N_max. Share counts distinct entity
// pairs; separate counts distinct heads (tails) per relation with the maximum
// taken over both sides.
SparsityDegrees compute_sparsity_degrees(const RelationStats& stats, double theta_min, bool separate);

// Allocates the block layout for a kind with all values zero.
template <class Real>
BasicParams<Real> allocate_params(const ModelSpec& spec, std::size_t num_entities, std::size_t num_relations);

// Seeded initialization. Vectors are uniform in [-6/sqrt(w), 6/sqrt(w)] for
// row width w; entity rows then L2-normalized. Projections start at identity
// (TransR/TranSparse) or zero (TransD). Without degrees, TranSparse masks are
// fully dense.
ModelParams init_params(const ModelSpec& spec, std::size_t num_entities, std::size_t num_relations,
                        std::uint64_t seed, const SparsityDegrees* degrees = nullptr);

// Throws ConfigError when tensor shapes disagree with the ModelSpec.
template <class Real>
void validate_params(const BasicParams<Real>& p);

// Energy of a triple, lower = more plausible. Bilinear kinds return the
// negated raw score.
template <class Real>
double energy(const BasicParams<Real>& p, const Triple& t);

// Raw bilinear score (RESCAL, DistMult, HolE, ComplEx); -energy for those kinds.
template <class Real>
double raw_score(const BasicParams<Real>& p, const Triple& t);

// Sparse gradient accumulator keyed by (block, row).
class Gradient {
public:
    struct Entry {
        Block block;
        std::uint32_t row;
        std::size_t offset;
        std::size_t width;
    };

    std::span<double> row(Block b, std::size_t r, std::size_t width);
    const double* find(Block b, std::size_t r) const;
    std::span<const double> values(const Entry& e) const { return {values_.data() + e.offset, e.width}; }
    std::span<double> values(const Entry& e) { return {values_.data() + e.offset, e.width}; }
    const std::vector<Entry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    void clear();
    double max_abs() const;

private:
    static std::uint64_t key(Block b, std::size_t r) { return (std::uint64_t(b) << 40) | r; }
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::vector<Entry> entries_;
    std::vector<double> values_;
};

// Adds scale * dEnergy/dtheta into grad. L1 residual components at exactly 0
// contribute a zero subgradient.
template <class Real>
void accumulate_energy_gradient(const BasicParams<Real>& p, const Triple& t, double scale, Gradient& grad);

template <class Real>
Gradient score_gradient(const BasicParams<Real>& p, const Triple& t) {
    Gradient g;
    accumulate_energy_gradient(p, t, 1.0, g);
    return g;
}

// Entity rows with L2 norm above 1 are rescaled to norm 1; TransH normals are
// renormalized to unit length. Rows already within 1e-6 of the target are
// left untouched, so the projection is idempotent bit for bit.
inline constexpr double kNormTolerance = 1e-6;

template <class Real>
void project_constraints(BasicParams<Real>& p);

// Same as project_constraints, restricted to the rows present in grad.
template <class Real>
void project_touched(BasicParams<Real>& p, const Gradient& touched);

// Single-row form; blocks other than Entity, EntityIm and Normal are ignored.
template <class Real>
void project_row(BasicParams<Real>& p, Block b, std::size_t row);

// Translation-kind entity projection into relation space (identity for TransE
// and Unstructured). Writes k values (d for non relation-space kinds).
template <class Real>
void project_entity(const BasicParams<Real>& p, RelationId r, Side side, EntityId e, std::span<double> out);

// Energies of every candidate replacing one slot of a triple for a fixed
// relation. Precomputes relation-space entity tables where that pays off.
class RelationScorer {
public:
    RelationScorer(const ModelParams& params, RelationId relation);

    RelationId relation() const { return relation_; }
    // out[i] = energy of the triple with `side` replaced by candidates[i].
    void energies(const Triple& t, Side side, std::span<const EntityId> candidates, std::span<double> out) const;
    // out[e] for every entity e.
    void all_energies(const Triple& t, Side side, std::span<double> out) const;

private:
    double translational_energy(const double* ph, const double* pt) const;
    const double* projected(Side side, EntityId e, std::vector<double>& scratch) const;
    void query_vector(const Triple& t, Side side, std::vector<double>& q) const;
    double bilinear_energy(const std::vector<double>& q, EntityId cand) const;

    const ModelParams& params_;
    RelationId relation_;
    std::size_t width_ = 0;  // residual width (k or d)
    std::vector<double> rel_;
    std::vector<double> head_table_;  // |E| x width, empty if projection is identity
    std::vector<double> tail_table_;
    bool separate_tables_ = false;
};

}  // namespace kge
