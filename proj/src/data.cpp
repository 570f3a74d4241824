#include "kge/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace kge {

std::string to_string(const Triple& t) {
    return "(" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " + std::to_string(t.tail) + ")";
}

namespace {

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; }

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t line, const std::string& msg) {
    std::ostringstream os;
    os << file.string();
    if (line > 0) os << ":" << line;
    os << ": " << msg;
    throw DataError(os.str());
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

class LineReader {
public:
    explicit LineReader(std::filesystem::path path) : path_(std::move(path)), in_(path_) {
        if (!in_) fail(path_, 0, "cannot open file");
    }

    // Next non-empty line, or false at EOF.
    bool next(std::string_view& out) {
        while (std::getline(in_, buf_)) {
            ++line_;
            out = trim(buf_);
            if (!out.empty()) return true;
        }
        return false;
    }

    std::size_t count_header() {
        std::string_view s;
        if (!next(s)) fail(path_, line_, "missing count header");
        std::size_t n = 0;
        if (!parse_int(s, n)) fail(path_, line_, "malformed count header '" + std::string(s) + "'");
        return n;
    }

    const std::filesystem::path& path() const { return path_; }
    std::size_t line() const { return line_; }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::string buf_;
    std::size_t line_ = 0;
};

std::filesystem::path require_file(const std::filesystem::path& dir, const std::string& stem) {
    auto p = find_data_file(dir, stem);
    if (!p) fail(dir / (stem + ".txt"), 0, "missing file");
    return *p;
}

std::vector<std::string> read_vocab(const std::filesystem::path& file) {
    LineReader reader(file);
    const std::size_t n = reader.count_header();
    std::vector<std::string> names(n);
    std::vector<bool> seen(n, false);
    std::unordered_set<std::string> unique;
    std::string_view line;
    std::size_t rows = 0;
    while (reader.next(line)) {
        ++rows;
        if (rows > n) fail(file, reader.line(), "more rows than the count header (" + std::to_string(n) + ")");
        auto sep = line.rfind('\t');
        if (sep == std::string_view::npos) sep = line.find_last_of(' ');
        if (sep == std::string_view::npos) fail(file, reader.line(), "expected 'name<TAB>id'");
        auto name = trim(line.substr(0, sep));
        auto id_text = trim(line.substr(sep + 1));
        std::size_t id = 0;
        if (name.empty()) fail(file, reader.line(), "empty name");
        if (!parse_int(id_text, id)) fail(file, reader.line(), "malformed id '" + std::string(id_text) + "'");
        if (id >= n) fail(file, reader.line(), "id " + std::to_string(id) + " out of range [0, " + std::to_string(n) + ")");
        if (seen[id]) fail(file, reader.line(), "duplicate id " + std::to_string(id));
        if (!unique.emplace(name).second) fail(file, reader.line(), "duplicate name '" + std::string(name) + "'");
        seen[id] = true;
        names[id] = std::string(name);
    }
    if (rows != n) fail(file, reader.line(), "count header says " + std::to_string(n) + " but found " + std::to_string(rows) + " rows");
    return names;
}

struct SplitRows {
    std::vector<Triple> positives;
    std::vector<Triple> negatives;
};

SplitRows read_split(const std::filesystem::path& file, const Vocab& vocab, bool allow_labels) {
    LineReader reader(file);
    const std::size_t n = reader.count_header();
    SplitRows rows;
    rows.positives.reserve(n);
    std::unordered_set<Triple, TripleHash> pos_seen, neg_seen;
    std::string_view line;
    std::size_t count = 0;
    while (reader.next(line)) {
        ++count;
        if (count > n) fail(file, reader.line(), "more rows than the count header (" + std::to_string(n) + ")");
        auto f = split_ws(line);
        if (f.size() != 3 && !(allow_labels && f.size() == 4))
            fail(file, reader.line(), "expected 'head tail relation'" + std::string(allow_labels ? " [label]" : ""));
        std::uint64_t h = 0, t = 0, r = 0;
        if (!parse_int(f[0], h) || !parse_int(f[1], t) || !parse_int(f[2], r)) fail(file, reader.line(), "malformed id");
        if (h >= vocab.num_entities()) fail(file, reader.line(), "head id " + std::to_string(h) + " out of range");
        if (t >= vocab.num_entities()) fail(file, reader.line(), "tail id " + std::to_string(t) + " out of range");
        if (r >= vocab.num_relations()) fail(file, reader.line(), "relation id " + std::to_string(r) + " out of range");
        bool positive = true;
        if (f.size() == 4) {
            int label = 0;
            if (!parse_int(f[3], label) || (label != 1 && label != -1)) fail(file, reader.line(), "label must be 1 or -1");
            positive = label == 1;
        }
        Triple tr{static_cast<EntityId>(h), static_cast<RelationId>(r), static_cast<EntityId>(t)};
        auto& seen = positive ? pos_seen : neg_seen;
        if (!seen.insert(tr).second) fail(file, reader.line(), "duplicate triple " + to_string(tr));
        (positive ? rows.positives : rows.negatives).push_back(tr);
    }
    if (count != n) fail(file, reader.line(), "count header says " + std::to_string(n) + " but found " + std::to_string(count) + " rows");
    return rows;
}

std::vector<Triple> read_negatives(const std::filesystem::path& file, const Vocab& vocab) {
    auto rows = read_split(file, vocab, true);
    rows.negatives.insert(rows.negatives.end(), rows.positives.begin(), rows.positives.end());
    return rows.negatives;
}

void write_split(const std::filesystem::path& file, std::vector<Triple> pos, std::vector<Triple> neg) {
    std::ofstream out(file);
    if (!out) fail(file, 0, "cannot open for writing");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    out << pos.size() + neg.size() << '\n';
    if (neg.empty()) {
        for (const auto& t : pos) out << t.head << ' ' << t.tail << ' ' << t.relation << '\n';
        return;
    }
    std::vector<std::pair<Triple, int>> all;
    for (const auto& t : pos) all.emplace_back(t, 1);
    for (const auto& t : neg) all.emplace_back(t, -1);
    std::sort(all.begin(), all.end());
    for (const auto& [t, label] : all) out << t.head << ' ' << t.tail << ' ' << t.relation << ' ' << label << '\n';
}

void write_vocab(const std::filesystem::path& file, const std::vector<std::string>& names) {
    std::ofstream out(file);
    if (!out) fail(file, 0, "cannot open for writing");
    out << names.size() << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << '\t' << i << '\n';
}

}  // namespace

bool TypeConstraint::allows(Side side, EntityId e) const {
    auto s = allowed(side);
    return std::binary_search(s.begin(), s.end(), e);
}

const TypeConstraint* Dataset::constraint(RelationId r) const {
    if (!type_constraints || r >= type_constraints->size()) return nullptr;
    const auto& c = (*type_constraints)[r];
    return c ? &*c : nullptr;
}

std::optional<std::filesystem::path> find_data_file(const std::filesystem::path& dir, const std::string& stem) {
    for (const auto& name : {stem + ".txt", stem}) {
        auto p = dir / name;
        if (std::filesystem::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(dir, 0, "dataset directory not found");
    Dataset ds;
    ds.vocab.entity_names = read_vocab(require_file(dir, "entity2id"));
    ds.vocab.relation_names = read_vocab(require_file(dir, "relation2id"));
    if (ds.vocab.entity_names.empty()) fail(dir, 0, "entity vocabulary is empty");
    if (ds.vocab.relation_names.empty()) fail(dir, 0, "relation vocabulary is empty");
    ds.original_relation_count = ds.vocab.num_relations();

    auto train = read_split(require_file(dir, "train2id"), ds.vocab, false);
    auto valid = read_split(require_file(dir, "valid2id"), ds.vocab, true);
    auto test = read_split(require_file(dir, "test2id"), ds.vocab, true);
    ds.train = std::move(train.positives);
    ds.valid = std::move(valid.positives);
    ds.test = std::move(test.positives);
    ds.valid_negatives = std::move(valid.negatives);
    ds.test_negatives = std::move(test.negatives);
    if (auto p = find_data_file(dir, "valid_neg2id")) {
        auto extra = read_negatives(*p, ds.vocab);
        ds.valid_negatives.insert(ds.valid_negatives.end(), extra.begin(), extra.end());
    }
    if (auto p = find_data_file(dir, "test_neg2id")) {
        auto extra = read_negatives(*p, ds.vocab);
        ds.test_negatives.insert(ds.test_negatives.end(), extra.begin(), extra.end());
    }

    // Splits must be disjoint so the filter index has exact semantics.
    std::unordered_set<Triple, TripleHash> seen(ds.train.begin(), ds.train.end());
    for (const auto* split : {&ds.valid, &ds.test}) {
        for (const auto& t : *split) {
            if (!seen.insert(t).second) fail(dir, 0, "triple " + to_string(t) + " appears in more than one split");
        }
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_vocab(dir / "entity2id.txt", ds.vocab.entity_names);
    write_vocab(dir / "relation2id.txt", ds.vocab.relation_names);
    write_split(dir / "train2id.txt", ds.train, {});
    write_split(dir / "valid2id.txt", ds.valid, ds.valid_negatives);
    write_split(dir / "test2id.txt", ds.test, ds.test_negatives);
}

ConstraintLoadResult load_type_constraints(const std::filesystem::path& file, Dataset& ds) {
    LineReader reader(file);
    const std::size_t n = reader.count_header();
    std::vector<std::optional<TypeConstraint>> constraints(ds.num_relations());
    ConstraintLoadResult result;

    auto read_record = [&](RelationId& rel) {
        std::string_view line;
        if (!reader.next(line)) fail(file, reader.line(), "unexpected end of file");
        auto f = split_ws(line);
        std::size_t r = 0, count = 0;
        if (f.size() < 2 || !parse_int(f[0], r) || !parse_int(f[1], count)) fail(file, reader.line(), "malformed record");
        if (r >= ds.num_relations()) fail(file, reader.line(), "unknown relation id " + std::to_string(r));
        if (f.size() != count + 2)
            fail(file, reader.line(), "record declares " + std::to_string(count) + " ids but lists " + std::to_string(f.size() - 2));
        std::vector<EntityId> ids;
        ids.reserve(count);
        for (std::size_t i = 2; i < f.size(); ++i) {
            std::size_t e = 0;
            if (!parse_int(f[i], e)) fail(file, reader.line(), "malformed entity id '" + std::string(f[i]) + "'");
            if (e >= ds.num_entities()) fail(file, reader.line(), "entity id " + std::to_string(e) + " out of range");
            ids.push_back(static_cast<EntityId>(e));
        }
        std::sort(ids.begin(), ids.end());
        auto last = std::unique(ids.begin(), ids.end());
        result.duplicate_ids += static_cast<std::size_t>(ids.end() - last);
        ids.erase(last, ids.end());
        rel = static_cast<RelationId>(r);
        return ids;
    };

    for (std::size_t i = 0; i < n; ++i) {
        RelationId rh = 0, rt = 0;
        auto heads = read_record(rh);
        auto tails = read_record(rt);
        if (rh != rt) fail(file, reader.line(), "head and tail records name different relations");
        if (constraints[rh]) fail(file, reader.line(), "relation " + std::to_string(rh) + " constrained twice");
        constraints[rh] = TypeConstraint{std::move(heads), std::move(tails)};
    }
    std::string_view extra;
    if (reader.next(extra)) fail(file, reader.line(), "trailing data after " + std::to_string(n) + " records");

    result.constrained_relations = n;
    for (const auto& t : ds.train) {
        const auto& c = constraints[t.relation];
        if (c && (!c->allows(Side::Head, t.head) || !c->allows(Side::Tail, t.tail))) ++result.train_violations;
    }
    ds.type_constraints = std::move(constraints);
    return result;
}

const char* to_string(Category c) {
    switch (c) {
        case Category::OneToOne: return "1-1";
        case Category::OneToMany: return "1-N";
        case Category::ManyToOne: return "N-1";
        case Category::ManyToMany: return "N-N";
    }
    return "?";
}

Category category_from_string(const std::string& s) {
    if (s == "1-1") return Category::OneToOne;
    if (s == "1-N") return Category::OneToMany;
    if (s == "N-1") return Category::ManyToOne;
    if (s == "N-N") return Category::ManyToMany;
    throw ConfigError("unknown relation category '" + s + "'");
}

RelationStats compute_stats(const Dataset& ds) {
    if (ds.train.empty()) throw DataError("cannot compute relation statistics: training split is empty");
    const std::size_t nr = ds.num_relations();
    std::vector<std::unordered_set<EntityId>> heads(nr), tails(nr);
    std::vector<std::unordered_set<std::uint64_t>> pairs(nr);
    RelationStats stats;
    stats.relations.resize(nr);
    for (const auto& t : ds.train) {
        heads[t.relation].insert(t.head);
        tails[t.relation].insert(t.tail);
        pairs[t.relation].insert(pair_key(t.head, t.tail));
        ++stats.relations[t.relation].triple_count;
    }
    for (std::size_t r = 0; r < nr; ++r) {
        auto& s = stats.relations[r];
        s.distinct_heads = heads[r].size();
        s.distinct_tails = tails[r].size();
        s.distinct_pairs = pairs[r].size();
        if (s.triple_count == 0) {
            s.category = Category::ManyToMany;
            stats.empty_relations.push_back(static_cast<RelationId>(r));
            continue;
        }
        s.tph = static_cast<double>(s.triple_count) / static_cast<double>(s.distinct_heads);
        s.hpt = static_cast<double>(s.triple_count) / static_cast<double>(s.distinct_tails);
        const bool head_many = s.hpt >= kCategoryThreshold;
        const bool tail_many = s.tph >= kCategoryThreshold;
        s.category = head_many ? (tail_many ? Category::ManyToMany : Category::ManyToOne)
                               : (tail_many ? Category::OneToMany : Category::OneToOne);
    }
    return stats;
}

FilterIndex::FilterIndex(const Dataset& ds) {
    members_.reserve(ds.train.size() + ds.valid.size() + ds.test.size());
    for (const auto* split : {&ds.train, &ds.valid, &ds.test})
        for (const auto& t : *split) insert(t);
    for (auto* m : {&tails_, &heads_})
        for (auto& [k, v] : *m) std::sort(v.begin(), v.end());
}

void FilterIndex::insert(const Triple& t) {
    if (!members_.insert(t).second) return;
    tails_[pair_key(t.head, t.relation)].push_back(t.tail);
    heads_[pair_key(t.relation, t.tail)].push_back(t.head);
}

std::span<const EntityId> FilterIndex::tails(EntityId h, RelationId r) const {
    auto it = tails_.find(pair_key(h, r));
    if (it == tails_.end()) return {};
    return it->second;
}

std::span<const EntityId> FilterIndex::heads(RelationId r, EntityId t) const {
    auto it = heads_.find(pair_key(r, t));
    if (it == heads_.end()) return {};
    return it->second;
}

}  // namespace kge
