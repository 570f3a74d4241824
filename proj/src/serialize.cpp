#include "kge/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kge {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

constexpr char kMagic[4] = {'K', 'G', 'E', '1'};
constexpr char kOptMagic[4] = {'O', 'P', 'T', '1'};
constexpr char kCfgMagic[4] = {'C', 'F', 'G', '1'};

template <class T>
void put(std::ostream& out, T v) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float f : v) put(out, std::bit_cast<std::uint32_t>(f));
    }
}

void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IntegrityError(std::string("truncated embedding data while reading ") + what);
    }

    template <class T>
    T get(const char* what) {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T), what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{buf[i]} << (8 * i);
        return static_cast<T>(v);
    }

    double get_f64(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }

    void floats(std::vector<float>& v, const char* what) {
        bytes(v.data(), v.size() * sizeof(float), what);
        if constexpr (std::endian::native == std::endian::big)
            for (auto& f : v) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
    }

    void magic(const char (&m)[4], const char* what) {
        char got[4];
        bytes(got, 4, what);
        if (std::memcmp(got, m, 4) != 0) throw IntegrityError(std::string("bad magic for ") + what);
    }

private:
    std::istream& in_;
};

void write_optimizer(std::ostream& out, const Optimizer* opt) {
    out.write(kOptMagic, 4);
    put<std::uint8_t>(out, opt ? 1 : 0);
    if (!opt) return;
    const auto& c = opt->config();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
    for (double v : {c.learning_rate, c.epsilon, c.rho, c.adadelta_epsilon, c.beta1, c.beta2}) put_f64(out, v);
    put<std::uint64_t>(out, opt->step());
    const auto& st = opt->state();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(st.size()));
    for (const auto& slots : st) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(slots.size()));
        for (const auto& v : slots) {
            put<std::uint64_t>(out, v.size());
            put_floats(out, v);
        }
    }
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomically(const std::filesystem::path& file, const std::string& bytes) {
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_embeddings(std::ostream& out, const ModelParams& params) {
    out.write(kMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.spec.kind));
    put<std::uint64_t>(out, params.num_entities);
    put<std::uint64_t>(out, params.num_relations);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.spec.dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.spec.relation_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.spec.norm));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.block));
        put<std::uint8_t>(out, t.trainable ? 1 : 0);
        put<std::uint64_t>(out, t.rows);
        put<std::uint64_t>(out, t.cols);
        put_floats(out, t.data);
    }
}

ModelParams read_embeddings(std::istream& in) {
    Reader r(in);
    r.magic(kMagic, "embedding header");
    const auto kind = r.get<std::uint32_t>("kind");
    if (kind >= kAllModelKinds.size()) throw IntegrityError("unknown model kind tag " + std::to_string(kind));
    ModelSpec spec;
    spec.kind = static_cast<ModelKind>(kind);
    const auto n_e = r.get<std::uint64_t>("entity count");
    const auto n_r = r.get<std::uint64_t>("relation count");
    spec.dim = r.get<std::uint32_t>("dim");
    spec.relation_dim = r.get<std::uint32_t>("relation dim");
    const auto norm = r.get<std::uint32_t>("norm");
    if (norm != 1 && norm != 2) throw IntegrityError("bad norm tag");
    spec.norm = static_cast<Norm>(norm);
    const auto count = r.get<std::uint32_t>("tensor count");
    ModelParams p;
    try {
        p = allocate_params<float>(spec, n_e, n_r);
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("inconsistent embedding header: ") + e.what());
    }
    if (count != p.tensors.size()) throw IntegrityError("tensor count does not match model kind");
    for (auto& t : p.tensors) {
        const auto block = r.get<std::uint8_t>("block tag");
        const bool trainable = r.get<std::uint8_t>("trainable flag") != 0;
        const auto rows = r.get<std::uint64_t>("rows");
        const auto cols = r.get<std::uint64_t>("cols");
        if (block != static_cast<std::uint8_t>(t.block) || rows != t.rows || cols != t.cols || trainable != t.trainable)
            throw IntegrityError(std::string("unexpected layout for block ") + to_string(t.block));
        r.floats(t.data, to_string(t.block));
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& file, const ModelParams& params, const Optimizer* optimizer,
                     const std::string& config_echo) {
    std::ostringstream out(std::ios::binary);
    write_embeddings(out, params);
    write_optimizer(out, optimizer);
    out.write(kCfgMagic, 4);
    put<std::uint64_t>(out, config_echo.size());
    out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    std::string bytes = out.str();
    const auto sum = fnv1a(bytes.data(), bytes.size());
    std::ostringstream tail(std::ios::binary);
    put<std::uint64_t>(tail, sum);
    bytes += tail.str();
    write_atomically(file, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    const std::string bytes = read_file(file);
    if (bytes.size() < 12) throw IntegrityError("checkpoint " + file.string() + " is truncated");
    std::istringstream tail(bytes.substr(bytes.size() - 8), std::ios::binary);
    const auto stored = Reader(tail).get<std::uint64_t>("checksum");
    if (fnv1a(bytes.data(), bytes.size() - 8) != stored)
        throw IntegrityError("checkpoint " + file.string() + " failed its checksum (truncated or corrupted)");

    std::istringstream in(bytes.substr(0, bytes.size() - 8), std::ios::binary);
    Checkpoint ck;
    ck.params = read_embeddings(in);
    Reader r(in);
    r.magic(kOptMagic, "optimizer block");
    if (r.get<std::uint8_t>("optimizer flag")) {
        OptimizerConfig c;
        const auto kind = r.get<std::uint32_t>("optimizer kind");
        if (kind > 3) throw IntegrityError("unknown optimizer tag");
        c.kind = static_cast<OptimizerKind>(kind);
        c.learning_rate = r.get_f64("learning rate");
        c.epsilon = r.get_f64("epsilon");
        c.rho = r.get_f64("rho");
        c.adadelta_epsilon = r.get_f64("adadelta epsilon");
        c.beta1 = r.get_f64("beta1");
        c.beta2 = r.get_f64("beta2");
        ck.optimizer = c;
        ck.optimizer_step = r.get<std::uint64_t>("optimizer step");
        const auto tensors = r.get<std::uint32_t>("optimizer tensors");
        if (tensors != ck.params.tensors.size()) throw IntegrityError("optimizer state does not match parameters");
        ck.optimizer_state.resize(tensors);
        for (std::size_t i = 0; i < tensors; ++i) {
            const auto slots = r.get<std::uint32_t>("optimizer slots");
            if (slots > 2) throw IntegrityError("bad optimizer slot count");
            for (std::size_t s = 0; s < slots; ++s) {
                const auto len = r.get<std::uint64_t>("optimizer slot length");
                if (len != ck.params.tensors[i].data.size()) throw IntegrityError("optimizer slot size mismatch");
                std::vector<float> v(len);
                r.floats(v, "optimizer state");
                ck.optimizer_state[i].push_back(std::move(v));
            }
        }
    }
    r.magic(kCfgMagic, "config block");
    const auto len = r.get<std::uint64_t>("config length");
    if (len > bytes.size()) throw IntegrityError("bad config length");
    ck.config_echo.resize(len);
    r.bytes(ck.config_echo.data(), len, "config echo");
    return ck;
}

void save_embeddings(const std::filesystem::path& file, const ModelParams& params) {
    std::ostringstream out(std::ios::binary);
    write_embeddings(out, params);
    write_atomically(file, out.str());
}

ModelParams load_embeddings(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    auto p = read_embeddings(in);
    if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError("trailing bytes after embeddings");
    return p;
}

void export_text(std::ostream& out, const ModelParams& params, const Vocab& vocab) {
    if (vocab.num_entities() != params.num_entities || vocab.num_relations() < params.num_relations)
        throw DataError("vocabulary does not match the model");
    char buf[32];
    auto line = [&](const std::string& name, std::initializer_list<std::span<const float>> parts) {
        out << name << '\t';
        bool first = true;
        for (auto part : parts)
            for (float v : part) {
                std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
                out << (first ? "" : " ") << buf;
                first = false;
            }
        out << '\n';
    };
    const bool complex = params.has(Block::EntityIm);
    for (std::size_t e = 0; e < params.num_entities; ++e) {
        if (complex)
            line(vocab.entity_names[e], {params.row(Block::Entity, e), params.row(Block::EntityIm, e)});
        else
            line(vocab.entity_names[e], {params.row(Block::Entity, e)});
    }
    for (std::size_t r = 0; r < params.num_relations; ++r) {
        if (complex)
            line(vocab.relation_names[r], {params.row(Block::Relation, r), params.row(Block::RelationIm, r)});
        else
            line(vocab.relation_names[r], {params.row(Block::Relation, r)});
    }
}

}  // namespace kge
