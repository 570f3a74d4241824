#include "kge/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kge/hole.hpp"

namespace kge {

namespace {

struct KindName {
    ModelKind kind;
    const char* name;
};

constexpr std::array<KindName, 12> kKindNames{{
    {ModelKind::Unstructured, "Unstructured"},
    {ModelKind::TransE_L1, "TransE-L1"},
    {ModelKind::TransE_L2, "TransE-L2"},
    {ModelKind::TransH, "TransH"},
    {ModelKind::TransR, "TransR"},
    {ModelKind::TransD, "TransD"},
    {ModelKind::TranSparseShare, "TranSparse-share"},
    {ModelKind::TranSparseSeparate, "TranSparse-separate"},
    {ModelKind::Rescal, "RESCAL"},
    {ModelKind::DistMult, "DistMult"},
    {ModelKind::HolE, "HolE"},
    {ModelKind::ComplEx, "ComplEx"},
}};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

template <class Real>
void to_double(std::span<const Real> in, double* out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<double>(in[i]);
}

double norm_of(const double* v, std::size_t n, Norm norm) {
    double s = 0.0;
    if (norm == Norm::L1) {
        for (std::size_t i = 0; i < n; ++i) s += std::abs(v[i]);
        return s;
    }
    for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

// d||v||/dv, with zero subgradient at zero components (L1) or at v = 0 (L2).
void norm_gradient(const double* v, std::size_t n, Norm norm, double* g) {
    if (norm == Norm::L1) {
        for (std::size_t i = 0; i < n; ++i) g[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
        return;
    }
    const double len = norm_of(v, n, Norm::L2);
    for (std::size_t i = 0; i < n; ++i) g[i] = len > 0.0 ? v[i] / len : 0.0;
}

bool is_sparse(ModelKind k) { return k == ModelKind::TranSparseShare || k == ModelKind::TranSparseSeparate; }

template <class Real>
struct ProjectionBlocks {
    const Tensor<Real>* matrix;
    const Tensor<Real>* mask;
};

template <class Real>
ProjectionBlocks<Real> projection_blocks(const BasicParams<Real>& p, Side side) {
    if (p.spec.kind == ModelKind::TranSparseSeparate && side == Side::Tail)
        return {&p.get(Block::ProjTail), &p.get(Block::MaskTail)};
    if (is_sparse(p.spec.kind)) return {&p.get(Block::Proj), &p.get(Block::Mask)};
    return {&p.get(Block::Proj), nullptr};
}

// Upstream gradient u = dE/d(projected entity) pushed into the parameters the
// projection depends on.
template <class Real>
void backprop_projection(const BasicParams<Real>& p, RelationId r, Side side, EntityId e, const double* u,
                         Gradient& grad) {
    const std::size_t d = p.spec.dim;
    const std::size_t k = p.spec.k();
    auto ent = p.row(Block::Entity, e);
    switch (p.spec.kind) {
        case ModelKind::Unstructured:
        case ModelKind::TransE_L1:
        case ModelKind::TransE_L2: {
            auto g = grad.row(Block::Entity, e, d);
            for (std::size_t i = 0; i < d; ++i) g[i] += u[i];
            return;
        }
        case ModelKind::TransH: {
            auto w = p.row(Block::Normal, r);
            double wu = 0.0, we = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                wu += double(w[i]) * u[i];
                we += double(w[i]) * double(ent[i]);
            }
            {
                auto g = grad.row(Block::Entity, e, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += u[i] - wu * double(w[i]);
            }
            auto gw = grad.row(Block::Normal, r, d);
            for (std::size_t i = 0; i < d; ++i) gw[i] -= double(ent[i]) * wu + we * u[i];
            return;
        }
        case ModelKind::TransR:
        case ModelKind::TranSparseShare:
        case ModelKind::TranSparseSeparate: {
            auto blocks = projection_blocks(p, side);
            auto m = blocks.matrix->row(r);
            std::span<const Real> mask;
            if (blocks.mask) mask = blocks.mask->row(r);
            {
                auto g = grad.row(Block::Entity, e, d);
                for (std::size_t i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < k; ++j) {
                        double mij = double(m[i * k + j]);
                        if (blocks.mask) mij *= double(mask[i * k + j]);
                        s += mij * u[j];
                    }
                    g[i] += s;
                }
            }
            auto gm = grad.row(blocks.matrix->block, r, d * k);
            for (std::size_t i = 0; i < d; ++i) {
                const double ei = double(ent[i]);
                for (std::size_t j = 0; j < k; ++j) {
                    double v = ei * u[j];
                    if (blocks.mask) v *= double(mask[i * k + j]);
                    gm[i * k + j] += v;
                }
            }
            return;
        }
        case ModelKind::TransD: {
            auto ep = p.row(Block::EntityProj, e);
            auto rp = p.row(Block::RelationProj, r);
            double rpu = 0.0, epe = 0.0;
            for (std::size_t j = 0; j < k; ++j) rpu += double(rp[j]) * u[j];
            for (std::size_t i = 0; i < d; ++i) epe += double(ep[i]) * double(ent[i]);
            {
                auto g = grad.row(Block::Entity, e, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += double(ep[i]) * rpu + (i < k ? u[i] : 0.0);
            }
            {
                auto g = grad.row(Block::EntityProj, e, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += double(ent[i]) * rpu;
            }
            auto g = grad.row(Block::RelationProj, r, k);
            for (std::size_t j = 0; j < k; ++j) g[j] += epe * u[j];
            return;
        }
        default:
            throw std::logic_error("backprop_projection called for a bilinear kind");
    }
}

template <class Real>
std::size_t residual_width(const BasicParams<Real>& p) {
    return has_relation_space(p.spec.kind) ? p.spec.k() : p.spec.dim;
}

template <class Real>
void translation_residual(const BasicParams<Real>& p, const Triple& t, std::vector<double>& ph,
                          std::vector<double>& pt, std::vector<double>& res) {
    const std::size_t w = residual_width(p);
    ph.resize(w);
    pt.resize(w);
    res.resize(w);
    project_entity(p, t.relation, Side::Head, t.head, ph);
    project_entity(p, t.relation, Side::Tail, t.tail, pt);
    if (p.spec.kind == ModelKind::Unstructured) {
        for (std::size_t i = 0; i < w; ++i) res[i] = (ph[i] + 0.0) - pt[i];
        return;
    }
    auto rel = p.row(Block::Relation, t.relation);
    for (std::size_t i = 0; i < w; ++i) res[i] = (ph[i] + double(rel[i])) - pt[i];
}

template <class Real>
void check_triple(const BasicParams<Real>& p, const Triple& t) {
    if (t.head >= p.num_entities || t.tail >= p.num_entities || t.relation >= p.num_relations)
        throw std::out_of_range("triple " + to_string(t) + " outside model vocabulary");
}

template <class Real>
void rows_as_double(const BasicParams<Real>& p, Block b, std::size_t r, std::vector<double>& out) {
    auto row = p.row(b, r);
    out.resize(row.size());
    to_double(row, out.data());
}

template <class Real>
double normalize_if_needed(std::span<Real> a, std::span<Real> b, bool exact_unit) {
    double s = 0.0;
    for (auto v : a) s += double(v) * double(v);
    for (auto v : b) s += double(v) * double(v);
    const double len = std::sqrt(s);
    const bool rescale = exact_unit ? (len > 0.0 && std::abs(len - 1.0) > kNormTolerance) : (len > 1.0 + kNormTolerance);
    if (!rescale) return len;
    for (auto& v : a) v = static_cast<Real>(double(v) / len);
    for (auto& v : b) v = static_cast<Real>(double(v) / len);
    return len;
}

template <class Real>
void project_entity_row(BasicParams<Real>& p, std::size_t e) {
    std::span<Real> im;
    if (p.has(Block::EntityIm)) im = p.row(Block::EntityIm, e);
    normalize_if_needed(p.row(Block::Entity, e), im, false);
}

template <class Real>
void project_normal_row(BasicParams<Real>& p, std::size_t r) {
    normalize_if_needed(p.row(Block::Normal, r), std::span<Real>{}, true);
}

std::vector<float> build_mask(std::size_t d, std::size_t k, double theta, std::uint64_t seed) {
    std::vector<float> mask(d * k, 0.0f);
    const std::size_t diag = std::min(d, k);
    for (std::size_t i = 0; i < diag; ++i) mask[i * k + i] = 1.0f;
    const double density = std::clamp(1.0 - theta, 0.0, 1.0);
    const auto target = static_cast<std::size_t>(std::llround(density * static_cast<double>(d * k)));
    if (target <= diag) return mask;
    std::vector<std::size_t> off;
    off.reserve(d * k - diag);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) off.push_back(i * k + j);
    std::mt19937_64 rng(seed);
    const std::size_t extra = std::min(target - diag, off.size());
    for (std::size_t n = 0; n < extra; ++n) {
        std::uniform_int_distribution<std::size_t> pick(n, off.size() - 1);
        std::swap(off[n], off[pick(rng)]);
        mask[off[n]] = 1.0f;
    }
    return mask;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

const char* to_string(ModelKind k) {
    for (const auto& kn : kKindNames)
        if (kn.kind == k) return kn.name;
    return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
    const auto want = lower(s);
    for (const auto& kn : kKindNames)
        if (lower(kn.name) == want) return kn.kind;
    if (want == "transe") return ModelKind::TransE_L1;
    if (want == "transparse") return ModelKind::TranSparseShare;
    throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

const char* to_string(Norm n) { return n == Norm::L1 ? "L1" : "L2"; }

Norm norm_from_string(std::string_view s) {
    const auto v = lower(s);
    if (v == "l1" || v == "1") return Norm::L1;
    if (v == "l2" || v == "2") return Norm::L2;
    throw ConfigError("unknown norm '" + std::string(s) + "'");
}

bool is_translational(ModelKind k) {
    switch (k) {
        case ModelKind::Rescal:
        case ModelKind::DistMult:
        case ModelKind::HolE:
        case ModelKind::ComplEx:
            return false;
        default:
            return true;
    }
}

bool has_relation_space(ModelKind k) {
    return k == ModelKind::TransR || k == ModelKind::TransD || is_sparse(k);
}

Norm ModelSpec::effective_norm() const {
    if (kind == ModelKind::TransE_L1) return Norm::L1;
    if (kind == ModelKind::TransE_L2) return Norm::L2;
    return norm;
}

const char* to_string(Block b) {
    switch (b) {
        case Block::Entity: return "entity";
        case Block::EntityIm: return "entity_im";
        case Block::Relation: return "relation";
        case Block::RelationIm: return "relation_im";
        case Block::Normal: return "normal";
        case Block::EntityProj: return "entity_proj";
        case Block::RelationProj: return "relation_proj";
        case Block::Proj: return "proj";
        case Block::ProjTail: return "proj_tail";
        case Block::Mask: return "mask";
        case Block::MaskTail: return "mask_tail";
        case Block::Count: break;
    }
    return "?";
}

template <class Real>
void BasicParams<Real>::add_tensor(Block b, std::size_t rows, std::size_t cols, bool trainable) {
    slot[static_cast<std::size_t>(b)] = static_cast<int>(tensors.size());
    Tensor<Real> t;
    t.block = b;
    t.rows = rows;
    t.cols = cols;
    t.trainable = trainable;
    t.data.assign(rows * cols, Real(0));
    tensors.push_back(std::move(t));
}

SparsityDegrees compute_sparsity_degrees(const RelationStats& stats, double theta_min, bool separate) {
    if (theta_min < 0.0 || theta_min > 1.0) throw ConfigError("theta_min must lie in [0, 1]");
    SparsityDegrees out;
    const std::size_t n = stats.size();
    out.head.assign(n, 0.0);
    out.tail.assign(n, 0.0);
    if (!separate) {
        std::size_t max_pairs = 0;
        for (const auto& s : stats.relations) max_pairs = std::max(max_pairs, s.distinct_pairs);
        for (std::size_t r = 0; r < n; ++r) {
            const double frac = max_pairs ? double(stats.relations[r].distinct_pairs) / double(max_pairs) : 1.0;
            out.head[r] = out.tail[r] = 1.0 - (1.0 - theta_min) * frac;
        }
        return out;
    }
    std::size_t max_side = 0;
    for (const auto& s : stats.relations) max_side = std::max({max_side, s.distinct_heads, s.distinct_tails});
    for (std::size_t r = 0; r < n; ++r) {
        const auto& s = stats.relations[r];
        const double fh = max_side ? double(s.distinct_heads) / double(max_side) : 1.0;
        const double ft = max_side ? double(s.distinct_tails) / double(max_side) : 1.0;
        out.head[r] = 1.0 - (1.0 - theta_min) * fh;
        out.tail[r] = 1.0 - (1.0 - theta_min) * ft;
    }
    return out;
}

template <class Real>
BasicParams<Real> allocate_params(const ModelSpec& spec, std::size_t num_entities, std::size_t num_relations) {
    if (spec.dim == 0) throw ConfigError("embedding dimension must be >= 1");
    if (has_relation_space(spec.kind) && spec.k() == 0) throw ConfigError("relation dimension must be >= 1");
    if (num_entities == 0 || num_relations == 0) throw ConfigError("vocabulary must be non-empty");
    BasicParams<Real> p;
    p.spec = spec;
    if (!has_relation_space(spec.kind)) p.spec.relation_dim = 0;
    if (spec.kind == ModelKind::TransE_L1) p.spec.norm = Norm::L1;
    if (spec.kind == ModelKind::TransE_L2) p.spec.norm = Norm::L2;
    p.num_entities = num_entities;
    p.num_relations = num_relations;
    const std::size_t d = spec.dim;
    const std::size_t k = p.spec.k();
    const std::size_t nE = num_entities, nR = num_relations;

    p.add_tensor(Block::Entity, nE, d, true);
    if (spec.kind == ModelKind::ComplEx) p.add_tensor(Block::EntityIm, nE, d, true);
    std::size_t rel_width = d;
    if (has_relation_space(spec.kind)) rel_width = k;
    if (spec.kind == ModelKind::Rescal) rel_width = d * d;
    p.add_tensor(Block::Relation, nR, rel_width, spec.kind != ModelKind::Unstructured);
    if (spec.kind == ModelKind::ComplEx) p.add_tensor(Block::RelationIm, nR, d, true);
    if (spec.kind == ModelKind::TransH) p.add_tensor(Block::Normal, nR, d, true);
    if (spec.kind == ModelKind::TransD) {
        p.add_tensor(Block::EntityProj, nE, d, true);
        p.add_tensor(Block::RelationProj, nR, k, true);
    }
    if (spec.kind == ModelKind::TransR || is_sparse(spec.kind)) p.add_tensor(Block::Proj, nR, d * k, true);
    if (spec.kind == ModelKind::TranSparseSeparate) p.add_tensor(Block::ProjTail, nR, d * k, true);
    if (is_sparse(spec.kind)) p.add_tensor(Block::Mask, nR, d * k, false);
    if (spec.kind == ModelKind::TranSparseSeparate) p.add_tensor(Block::MaskTail, nR, d * k, false);
    return p;
}

ModelParams init_params(const ModelSpec& spec, std::size_t num_entities, std::size_t num_relations,
                        std::uint64_t seed, const SparsityDegrees* degrees) {
    auto p = allocate_params<float>(spec, num_entities, num_relations);
    const std::size_t d = p.spec.dim;
    const std::size_t k = p.spec.k();
    std::mt19937_64 rng(seed);

    auto fill_uniform = [&](Block b) {
        auto& t = p.get(b);
        const double bound = 6.0 / std::sqrt(static_cast<double>(t.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.data) v = static_cast<float>(dist(rng));
    };

    fill_uniform(Block::Entity);
    if (p.has(Block::EntityIm)) fill_uniform(Block::EntityIm);
    if (spec.kind != ModelKind::Unstructured) fill_uniform(Block::Relation);
    if (p.has(Block::RelationIm)) fill_uniform(Block::RelationIm);
    if (p.has(Block::Normal)) {
        fill_uniform(Block::Normal);
        for (std::size_t r = 0; r < num_relations; ++r) {
            auto w = p.row(Block::Normal, r);
            double s = 0.0;
            for (auto v : w) s += double(v) * double(v);
            const double len = std::sqrt(s);
            for (auto& v : w) v = static_cast<float>(double(v) / len);
        }
    }
    for (Block b : {Block::Proj, Block::ProjTail}) {
        if (!p.has(b)) continue;
        for (std::size_t r = 0; r < num_relations; ++r) {
            auto m = p.row(b, r);
            for (std::size_t i = 0; i < std::min(d, k); ++i) m[i * k + i] = 1.0f;
        }
    }
    if (is_sparse(spec.kind)) {
        if (degrees && (degrees->head.size() != num_relations || degrees->tail.size() != num_relations))
            throw ConfigError("sparsity degrees do not match the relation count");
        for (std::size_t r = 0; r < num_relations; ++r) {
            const double th = degrees ? degrees->head[r] : 0.0;
            auto mask = build_mask(d, k, th, mix(seed ^ mix(2 * r + 1)));
            std::copy(mask.begin(), mask.end(), p.row(Block::Mask, r).begin());
            if (p.has(Block::MaskTail)) {
                const double tt = degrees ? degrees->tail[r] : 0.0;
                auto mt = build_mask(d, k, tt, mix(seed ^ mix(2 * r + 2)));
                std::copy(mt.begin(), mt.end(), p.row(Block::MaskTail, r).begin());
            }
        }
    }
    // Entity rows start on the unit sphere.
    for (std::size_t e = 0; e < num_entities; ++e) {
        auto a = p.row(Block::Entity, e);
        std::span<float> b;
        if (p.has(Block::EntityIm)) b = p.row(Block::EntityIm, e);
        double s = 0.0;
        for (auto v : a) s += double(v) * double(v);
        for (auto v : b) s += double(v) * double(v);
        const double len = std::sqrt(s);
        if (len > 0.0) {
            for (auto& v : a) v = static_cast<float>(double(v) / len);
            for (auto& v : b) v = static_cast<float>(double(v) / len);
        }
    }
    return p;
}

template <class Real>
void validate_params(const BasicParams<Real>& p) {
    auto expected = allocate_params<char>(p.spec, p.num_entities, p.num_relations);
    if (expected.tensors.size() != p.tensors.size())
        throw ConfigError(std::string("parameter blocks do not match model kind ") + to_string(p.spec.kind));
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        const auto& a = expected.tensors[i];
        const auto& b = p.tensors[i];
        if (a.block != b.block || a.rows != b.rows || a.cols != b.cols || b.data.size() != b.rows * b.cols)
            throw ConfigError(std::string("dimension mismatch in block '") + to_string(b.block) + "' for " +
                              to_string(p.spec.kind));
        if (p.slot[static_cast<std::size_t>(a.block)] != static_cast<int>(i))
            throw ConfigError("parameter block index is inconsistent");
    }
}

template <class Real>
void project_entity(const BasicParams<Real>& p, RelationId r, Side side, EntityId e, std::span<double> out) {
    const std::size_t d = p.spec.dim;
    const std::size_t k = p.spec.k();
    auto ent = p.row(Block::Entity, e);
    switch (p.spec.kind) {
        case ModelKind::Unstructured:
        case ModelKind::TransE_L1:
        case ModelKind::TransE_L2:
            to_double(ent, out.data());
            return;
        case ModelKind::TransH: {
            auto w = p.row(Block::Normal, r);
            double we = 0.0;
            for (std::size_t i = 0; i < d; ++i) we += double(w[i]) * double(ent[i]);
            for (std::size_t i = 0; i < d; ++i) out[i] = double(ent[i]) - we * double(w[i]);
            return;
        }
        case ModelKind::TransR:
        case ModelKind::TranSparseShare:
        case ModelKind::TranSparseSeparate: {
            auto blocks = projection_blocks(p, side);
            auto m = blocks.matrix->row(r);
            std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
            if (blocks.mask) {
                auto mask = blocks.mask->row(r);
                for (std::size_t i = 0; i < d; ++i) {
                    const double ei = double(ent[i]);
                    for (std::size_t j = 0; j < k; ++j) out[j] += ei * (double(m[i * k + j]) * double(mask[i * k + j]));
                }
            } else {
                for (std::size_t i = 0; i < d; ++i) {
                    const double ei = double(ent[i]);
                    for (std::size_t j = 0; j < k; ++j) out[j] += ei * double(m[i * k + j]);
                }
            }
            return;
        }
        case ModelKind::TransD: {
            auto ep = p.row(Block::EntityProj, e);
            auto rp = p.row(Block::RelationProj, r);
            double epe = 0.0;
            for (std::size_t i = 0; i < d; ++i) epe += double(ep[i]) * double(ent[i]);
            for (std::size_t j = 0; j < k; ++j) out[j] = epe * double(rp[j]) + (j < d ? double(ent[j]) : 0.0);
            return;
        }
        default:
            throw std::logic_error("project_entity called for a bilinear kind");
    }
}

template <class Real>
double raw_score(const BasicParams<Real>& p, const Triple& t) {
    check_triple(p, t);
    const std::size_t d = p.spec.dim;
    auto h = p.row(Block::Entity, t.head);
    auto tl = p.row(Block::Entity, t.tail);
    auto r = p.row(Block::Relation, t.relation);
    switch (p.spec.kind) {
        case ModelKind::DistMult: {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += (double(h[i]) * double(r[i])) * double(tl[i]);
            return s;
        }
        case ModelKind::Rescal: {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double q = 0.0;
                for (std::size_t i = 0; i < d; ++i) q += double(h[i]) * double(r[i * d + j]);
                s += q * double(tl[j]);
            }
            return s;
        }
        case ModelKind::HolE: {
            std::vector<double> hd(d), td(d), corr(d);
            to_double(h, hd.data());
            to_double(tl, td.data());
            circular_correlation(hd, td, corr);
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += double(r[i]) * corr[i];
            return s;
        }
        case ModelKind::ComplEx: {
            auto hi = p.row(Block::EntityIm, t.head);
            auto ti = p.row(Block::EntityIm, t.tail);
            auto ri = p.row(Block::RelationIm, t.relation);
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double a = r[i], b = ri[i], c = h[i], dd = hi[i], e = tl[i], f = ti[i];
                s += a * c * e + a * dd * f + b * c * f - b * dd * e;
            }
            return s;
        }
        default:
            throw std::logic_error(std::string("raw_score is undefined for ") + to_string(p.spec.kind));
    }
}

template <class Real>
double energy(const BasicParams<Real>& p, const Triple& t) {
    if (!is_translational(p.spec.kind)) return -raw_score(p, t);
    check_triple(p, t);
    thread_local std::vector<double> ph, pt, res;
    translation_residual(p, t, ph, pt, res);
    return norm_of(res.data(), res.size(), p.spec.effective_norm());
}

template <class Real>
void accumulate_energy_gradient(const BasicParams<Real>& p, const Triple& t, double scale, Gradient& grad) {
    check_triple(p, t);
    const std::size_t d = p.spec.dim;
    if (is_translational(p.spec.kind)) {
        thread_local std::vector<double> ph, pt, res;
        translation_residual(p, t, ph, pt, res);
        const std::size_t w = res.size();
        std::vector<double> g(w), neg(w);
        norm_gradient(res.data(), w, p.spec.effective_norm(), g.data());
        for (std::size_t i = 0; i < w; ++i) {
            g[i] *= scale;
            neg[i] = -g[i];
        }
        if (p.spec.kind != ModelKind::Unstructured) {
            auto gr = grad.row(Block::Relation, t.relation, w);
            for (std::size_t i = 0; i < w; ++i) gr[i] += g[i];
        }
        backprop_projection(p, t.relation, Side::Head, t.head, g.data(), grad);
        backprop_projection(p, t.relation, Side::Tail, t.tail, neg.data(), grad);
        return;
    }

    // Energy = -raw, so every raw-score partial enters with -scale.
    const double s = -scale;
    std::vector<double> h(d), tl(d), r;
    to_double(p.row(Block::Entity, t.head), h.data());
    to_double(p.row(Block::Entity, t.tail), tl.data());
    rows_as_double(p, Block::Relation, t.relation, r);
    switch (p.spec.kind) {
        case ModelKind::DistMult: {
            {
                auto g = grad.row(Block::Entity, t.head, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += s * r[i] * tl[i];
            }
            {
                auto g = grad.row(Block::Entity, t.tail, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += s * h[i] * r[i];
            }
            auto g = grad.row(Block::Relation, t.relation, d);
            for (std::size_t i = 0; i < d; ++i) g[i] += s * h[i] * tl[i];
            return;
        }
        case ModelKind::Rescal: {
            {
                auto g = grad.row(Block::Entity, t.head, d);
                for (std::size_t i = 0; i < d; ++i) {
                    double q = 0.0;
                    for (std::size_t j = 0; j < d; ++j) q += r[i * d + j] * tl[j];
                    g[i] += s * q;
                }
            }
            {
                auto g = grad.row(Block::Entity, t.tail, d);
                for (std::size_t j = 0; j < d; ++j) {
                    double q = 0.0;
                    for (std::size_t i = 0; i < d; ++i) q += h[i] * r[i * d + j];
                    g[j] += s * q;
                }
            }
            auto g = grad.row(Block::Relation, t.relation, d * d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) g[i * d + j] += s * h[i] * tl[j];
            return;
        }
        case ModelKind::HolE: {
            std::vector<double> tmp(d);
            circular_correlation(h, tl, tmp);
            {
                auto g = grad.row(Block::Relation, t.relation, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += s * tmp[i];
            }
            circular_correlation(r, tl, tmp);
            {
                auto g = grad.row(Block::Entity, t.head, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += s * tmp[i];
            }
            circular_convolution(r, h, tmp);
            auto g = grad.row(Block::Entity, t.tail, d);
            for (std::size_t i = 0; i < d; ++i) g[i] += s * tmp[i];
            return;
        }
        case ModelKind::ComplEx: {
            std::vector<double> hi(d), ti(d), ri(d);
            to_double(p.row(Block::EntityIm, t.head), hi.data());
            to_double(p.row(Block::EntityIm, t.tail), ti.data());
            to_double(p.row(Block::RelationIm, t.relation), ri.data());
            // a = Re r, b = Im r, c = Re h, dd = Im h, e = Re t, f = Im t
            auto add = [&](Block b, std::size_t row, auto&& fn) {
                auto g = grad.row(b, row, d);
                for (std::size_t i = 0; i < d; ++i) g[i] += s * fn(i);
            };
            add(Block::Relation, t.relation, [&](std::size_t i) { return h[i] * tl[i] + hi[i] * ti[i]; });
            add(Block::RelationIm, t.relation, [&](std::size_t i) { return h[i] * ti[i] - hi[i] * tl[i]; });
            add(Block::Entity, t.head, [&](std::size_t i) { return r[i] * tl[i] + ri[i] * ti[i]; });
            add(Block::EntityIm, t.head, [&](std::size_t i) { return r[i] * ti[i] - ri[i] * tl[i]; });
            add(Block::Entity, t.tail, [&](std::size_t i) { return r[i] * h[i] - ri[i] * hi[i]; });
            add(Block::EntityIm, t.tail, [&](std::size_t i) { return r[i] * hi[i] + ri[i] * h[i]; });
            return;
        }
        default:
            throw std::logic_error("unhandled model kind in gradient");
    }
}

template <class Real>
void project_constraints(BasicParams<Real>& p) {
    for (std::size_t e = 0; e < p.num_entities; ++e) project_entity_row(p, e);
    if (p.has(Block::Normal))
        for (std::size_t r = 0; r < p.num_relations; ++r) project_normal_row(p, r);
}

template <class Real>
void project_row(BasicParams<Real>& p, Block b, std::size_t row) {
    if (b == Block::Entity || b == Block::EntityIm)
        project_entity_row(p, row);
    else if (b == Block::Normal)
        project_normal_row(p, row);
}

template <class Real>
void project_touched(BasicParams<Real>& p, const Gradient& touched) {
    for (const auto& e : touched.entries()) project_row(p, e.block, e.row);
}

std::span<double> Gradient::row(Block b, std::size_t r, std::size_t width) {
    auto [it, inserted] = index_.try_emplace(key(b, r), entries_.size());
    if (inserted) {
        entries_.push_back({b, static_cast<std::uint32_t>(r), values_.size(), width});
        values_.resize(values_.size() + width, 0.0);
    }
    const auto& e = entries_[it->second];
    if (e.width != width) throw std::logic_error("gradient row width changed");
    return {values_.data() + e.offset, e.width};
}

const double* Gradient::find(Block b, std::size_t r) const {
    auto it = index_.find(key(b, r));
    if (it == index_.end()) return nullptr;
    return values_.data() + entries_[it->second].offset;
}

void Gradient::clear() {
    index_.clear();
    entries_.clear();
    values_.clear();
}

double Gradient::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

RelationScorer::RelationScorer(const ModelParams& params, RelationId relation)
    : params_(params), relation_(relation) {
    if (relation >= params.num_relations) throw std::out_of_range("relation id outside model vocabulary");
    const auto kind = params.spec.kind;
    if (!is_translational(kind)) return;
    width_ = residual_width(params);
    rel_.assign(width_, 0.0);
    if (kind != ModelKind::Unstructured) to_double(params.row(Block::Relation, relation), rel_.data());
    if (kind == ModelKind::Unstructured || kind == ModelKind::TransE_L1 || kind == ModelKind::TransE_L2) return;
    const std::size_t n = params.num_entities;
    head_table_.resize(n * width_);
    for (std::size_t e = 0; e < n; ++e)
        project_entity(params, relation, Side::Head, static_cast<EntityId>(e),
                       std::span<double>(head_table_.data() + e * width_, width_));
    if (kind == ModelKind::TranSparseSeparate) {
        separate_tables_ = true;
        tail_table_.resize(n * width_);
        for (std::size_t e = 0; e < n; ++e)
            project_entity(params, relation, Side::Tail, static_cast<EntityId>(e),
                           std::span<double>(tail_table_.data() + e * width_, width_));
    }
}

const double* RelationScorer::projected(Side side, EntityId e, std::vector<double>& scratch) const {
    const auto& table = (side == Side::Tail && separate_tables_) ? tail_table_ : head_table_;
    if (!table.empty()) return table.data() + std::size_t{e} * width_;
    scratch.resize(width_);
    to_double(params_.row(Block::Entity, e), scratch.data());
    return scratch.data();
}

double RelationScorer::translational_energy(const double* ph, const double* pt) const {
    double s = 0.0;
    if (params_.spec.effective_norm() == Norm::L1) {
        for (std::size_t i = 0; i < width_; ++i) s += std::abs((ph[i] + rel_[i]) - pt[i]);
        return s;
    }
    for (std::size_t i = 0; i < width_; ++i) {
        const double v = (ph[i] + rel_[i]) - pt[i];
        s += v * v;
    }
    return std::sqrt(s);
}

void RelationScorer::query_vector(const Triple& t, Side side, std::vector<double>& q) const {
    const std::size_t d = params_.spec.dim;
    const EntityId fixed = side == Side::Tail ? t.head : t.tail;
    std::vector<double> e(d), r;
    to_double(params_.row(Block::Entity, fixed), e.data());
    rows_as_double(params_, Block::Relation, relation_, r);
    switch (params_.spec.kind) {
        case ModelKind::DistMult:
            q.resize(d);
            for (std::size_t i = 0; i < d; ++i) q[i] = e[i] * r[i];
            return;
        case ModelKind::Rescal:
            q.assign(d, 0.0);
            if (side == Side::Tail) {
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) q[j] += e[i] * r[i * d + j];
            } else {
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) q[i] += r[i * d + j] * e[j];
            }
            return;
        case ModelKind::HolE:
            q.resize(d);
            if (side == Side::Tail)
                circular_convolution(r, e, q);
            else
                circular_correlation(r, e, q);
            return;
        case ModelKind::ComplEx: {
            std::vector<double> ei(d), ri(d);
            to_double(params_.row(Block::EntityIm, fixed), ei.data());
            to_double(params_.row(Block::RelationIm, relation_), ri.data());
            q.resize(2 * d);
            for (std::size_t i = 0; i < d; ++i) {
                const double a = r[i], b = ri[i], x = e[i], y = ei[i];
                if (side == Side::Tail) {
                    q[i] = a * x - b * y;
                    q[d + i] = a * y + b * x;
                } else {
                    q[i] = a * x + b * y;
                    q[d + i] = a * y - b * x;
                }
            }
            return;
        }
        default:
            throw std::logic_error("query_vector called for a translational kind");
    }
}

double RelationScorer::bilinear_energy(const std::vector<double>& q, EntityId cand) const {
    const std::size_t d = params_.spec.dim;
    auto c = params_.row(Block::Entity, cand);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += q[i] * double(c[i]);
    if (params_.spec.kind == ModelKind::ComplEx) {
        auto ci = params_.row(Block::EntityIm, cand);
        for (std::size_t i = 0; i < d; ++i) s += q[d + i] * double(ci[i]);
    }
    return -s;
}

void RelationScorer::energies(const Triple& t, Side side, std::span<const EntityId> candidates,
                              std::span<double> out) const {
    if (t.relation != relation_) throw std::invalid_argument("triple relation does not match scorer");
    if (!is_translational(params_.spec.kind)) {
        std::vector<double> q;
        query_vector(t, side, q);
        for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = bilinear_energy(q, candidates[i]);
        return;
    }
    std::vector<double> fixed_scratch, cand_scratch;
    if (side == Side::Tail) {
        const double* ph = projected(Side::Head, t.head, fixed_scratch);
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out[i] = translational_energy(ph, projected(Side::Tail, candidates[i], cand_scratch));
    } else {
        const double* pt = projected(Side::Tail, t.tail, fixed_scratch);
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out[i] = translational_energy(projected(Side::Head, candidates[i], cand_scratch), pt);
    }
}

void RelationScorer::all_energies(const Triple& t, Side side, std::span<double> out) const {
    std::vector<EntityId> all(params_.num_entities);
    std::iota(all.begin(), all.end(), EntityId{0});
    energies(t, side, all, out);
}

#define KGE_INSTANTIATE(Real)                                                                                    \
    template struct BasicParams<Real>;                                                                           \
    template BasicParams<Real> allocate_params<Real>(const ModelSpec&, std::size_t, std::size_t);                \
    template void validate_params<Real>(const BasicParams<Real>&);                                               \
    template double energy<Real>(const BasicParams<Real>&, const Triple&);                                       \
    template double raw_score<Real>(const BasicParams<Real>&, const Triple&);                                    \
    template void accumulate_energy_gradient<Real>(const BasicParams<Real>&, const Triple&, double, Gradient&);  \
    template void project_constraints<Real>(BasicParams<Real>&);                                                 \
    template void project_touched<Real>(BasicParams<Real>&, const Gradient&);                                    \
    template void project_row<Real>(BasicParams<Real>&, Block, std::size_t);                                     \
    template void project_entity<Real>(const BasicParams<Real>&, RelationId, Side, EntityId, std::span<double>);

KGE_INSTANTIATE(float)
KGE_INSTANTIATE(double)
template struct BasicParams<char>;
template BasicParams<char> allocate_params<char>(const ModelSpec&, std::size_t, std::size_t);

#undef KGE_INSTANTIATE

}  // namespace kge
