#include "kge/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace kge {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
    const auto s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

void set_model(RunConfig& c, const std::string& v) {
    const auto s = lower(v);
    if (s == "ptranse" || s == "ptranse-add" || s == "ptranse-mul") {
        c.train.model.kind = ModelKind::TransE_L1;
        c.train.model.norm = Norm::L1;
        c.train.paths.enabled = true;
        c.train.paths.composition = s == "ptranse-mul" ? Composition::Mul : Composition::Add;
        return;
    }
    c.train.model.kind = model_kind_from_string(v);
    if (c.train.model.kind == ModelKind::TransE_L1) c.train.model.norm = Norm::L1;
    if (c.train.model.kind == ModelKind::TransE_L2) c.train.model.norm = Norm::L2;
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"dataset", [](const RunConfig& c) { return c.dataset; }, [](RunConfig& c, const std::string& v) { c.dataset = v; }},
        {"type_constraints", [](const RunConfig& c) { return c.type_constraints; },
         [](RunConfig& c, const std::string& v) { c.type_constraints = v; }},
        {"output", [](const RunConfig& c) { return c.output; }, [](RunConfig& c, const std::string& v) { c.output = v; }},
        {"model", [](const RunConfig& c) { return std::string(to_string(c.train.model.kind)); }, set_model},
        {"norm", [](const RunConfig& c) { return std::string(to_string(c.train.model.norm)); },
         [](RunConfig& c, const std::string& v) { c.train.model.norm = norm_from_string(v); }},
        {"dim", [](const RunConfig& c) { return std::to_string(c.train.model.dim); },
         [](RunConfig& c, const std::string& v) { c.train.model.dim = parse_size("dim", v); }},
        {"relation_dim", [](const RunConfig& c) { return std::to_string(c.train.model.relation_dim); },
         [](RunConfig& c, const std::string& v) { c.train.model.relation_dim = parse_size("relation_dim", v); }},
        {"theta_min", [](const RunConfig& c) { return fmt_real(c.train.theta_min); },
         [](RunConfig& c, const std::string& v) { c.train.theta_min = parse_real("theta_min", v); }},
        {"objective", [](const RunConfig& c) { return std::string(to_string(c.train.objective)); },
         [](RunConfig& c, const std::string& v) { c.train.objective = objective_from_string(lower(v)); }},
        {"margin", [](const RunConfig& c) { return fmt_real(c.train.margin); },
         [](RunConfig& c, const std::string& v) { c.train.margin = parse_real("margin", v); }},
        {"bias", [](const RunConfig& c) { return fmt_real(c.train.bias); },
         [](RunConfig& c, const std::string& v) { c.train.bias = parse_real("bias", v); }},
        {"optimizer", [](const RunConfig& c) { return std::string(to_string(c.train.optimizer.kind)); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.kind = optimizer_kind_from_string(v); }},
        {"learning_rate", [](const RunConfig& c) { return fmt_real(c.train.optimizer.learning_rate); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.learning_rate = parse_real("learning_rate", v); }},
        {"epsilon", [](const RunConfig& c) { return fmt_real(c.train.optimizer.epsilon); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.epsilon = parse_real("epsilon", v); }},
        {"rho", [](const RunConfig& c) { return fmt_real(c.train.optimizer.rho); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.rho = parse_real("rho", v); }},
        {"adadelta_epsilon", [](const RunConfig& c) { return fmt_real(c.train.optimizer.adadelta_epsilon); },
         [](RunConfig& c, const std::string& v) {
             c.train.optimizer.adadelta_epsilon = parse_real("adadelta_epsilon", v);
         }},
        {"beta1", [](const RunConfig& c) { return fmt_real(c.train.optimizer.beta1); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.beta1 = parse_real("beta1", v); }},
        {"beta2", [](const RunConfig& c) { return fmt_real(c.train.optimizer.beta2); },
         [](RunConfig& c, const std::string& v) { c.train.optimizer.beta2 = parse_real("beta2", v); }},
        {"epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
         [](RunConfig& c, const std::string& v) { c.train.epochs = parse_size("epochs", v); }},
        {"batches_per_epoch", [](const RunConfig& c) { return std::to_string(c.train.batches_per_epoch); },
         [](RunConfig& c, const std::string& v) { c.train.batches_per_epoch = parse_size("batches_per_epoch", v); }},
        {"sampling", [](const RunConfig& c) { return std::string(to_string(c.train.sampling.kind)); },
         [](RunConfig& c, const std::string& v) { c.train.sampling.kind = sampling_kind_from_string(v); }},
        {"corrupt_relation", [](const RunConfig& c) { return fmt_bool(c.train.sampling.also_corrupt_relation); },
         [](RunConfig& c, const std::string& v) {
             c.train.sampling.also_corrupt_relation = parse_bool("corrupt_relation", v);
         }},
        {"reject_known_positives", [](const RunConfig& c) { return fmt_bool(c.train.sampling.reject_known_positives); },
         [](RunConfig& c, const std::string& v) {
             c.train.sampling.reject_known_positives = parse_bool("reject_known_positives", v);
         }},
        {"negatives_per_positive", [](const RunConfig& c) { return std::to_string(c.train.negatives_per_positive); },
         [](RunConfig& c, const std::string& v) {
             c.train.negatives_per_positive = parse_size("negatives_per_positive", v);
         }},
        {"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
         [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); }},
        {"workers", [](const RunConfig& c) { return std::to_string(c.train.workers); },
         [](RunConfig& c, const std::string& v) { c.train.workers = parse_size("workers", v); }},
        {"valid_every", [](const RunConfig& c) { return std::to_string(c.train.valid_every); },
         [](RunConfig& c, const std::string& v) { c.train.valid_every = parse_size("valid_every", v); }},
        {"valid_sample", [](const RunConfig& c) { return std::to_string(c.valid_sample); },
         [](RunConfig& c, const std::string& v) { c.valid_sample = parse_size("valid_sample", v); }},
        {"early_stopping", [](const RunConfig& c) { return fmt_bool(c.train.early_stopping); },
         [](RunConfig& c, const std::string& v) { c.train.early_stopping = parse_bool("early_stopping", v); }},
        {"patience", [](const RunConfig& c) { return std::to_string(c.train.patience); },
         [](RunConfig& c, const std::string& v) { c.train.patience = parse_size("patience", v); }},
        {"paths", [](const RunConfig& c) { return fmt_bool(c.train.paths.enabled); },
         [](RunConfig& c, const std::string& v) { c.train.paths.enabled = parse_bool("paths", v); }},
        {"path_composition", [](const RunConfig& c) { return std::string(to_string(c.train.paths.composition)); },
         [](RunConfig& c, const std::string& v) { c.train.paths.composition = composition_from_string(v); }},
        {"path_max_len", [](const RunConfig& c) { return std::to_string(c.train.paths.max_len); },
         [](RunConfig& c, const std::string& v) { c.train.paths.max_len = parse_size("path_max_len", v); }},
        {"path_threshold", [](const RunConfig& c) { return fmt_real(c.train.paths.threshold); },
         [](RunConfig& c, const std::string& v) { c.train.paths.threshold = parse_real("path_threshold", v); }},
        {"path_memory_mb", [](const RunConfig& c) { return std::to_string(c.train.paths.memory_budget_mb); },
         [](RunConfig& c, const std::string& v) { c.train.paths.memory_budget_mb = parse_size("path_memory_mb", v); }},
    };
    return table;
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
        if (kv.contains(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

KeyValues read_config_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    return parse_key_values(in, file.string());
}

std::pair<std::string, std::string> parse_override(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || trim(arg.substr(0, eq)).empty())
        throw ConfigError("override '" + arg + "' is not key=value");
    return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

RunConfig run_config_from(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [k, v] : kv) {
        bool known = false;
        for (const auto& key : keys()) {
            if (k != key.name) continue;
            known = true;
            break;
        }
        if (!known) throw ConfigError("unknown config key '" + k + "'");
    }
    // Apply in table order so "model" precedes the path keys it implies.
    for (const auto& key : keys())
        if (auto it = kv.find(key.name); it != kv.end()) key.set(c, it->second);
    c.train.validate();
    return c;
}

std::string config_echo(const RunConfig& c) {
    std::ostringstream out;
    for (const auto& key : keys()) out << key.name << " = " << key.get(c) << '\n';
    return out.str();
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& key : keys()) out.emplace_back(key.name);
    return out;
}

std::filesystem::path resolve_dataset(const std::string& name) {
    if (name.empty()) throw ConfigError("no dataset given");
    std::filesystem::path p(name);
    if (std::filesystem::is_directory(p)) return p;
    if (p.is_relative()) {
        if (const char* root = std::getenv("KGE_DATA_ROOT"); root && *root) {
            auto q = std::filesystem::path(root) / p;
            if (std::filesystem::is_directory(q)) return q;
        }
    }
    throw DataError("dataset directory '" + name + "' not found (also looked under $KGE_DATA_ROOT)");
}

std::optional<std::filesystem::path> find_constraint_file(const std::filesystem::path& dataset_dir) {
    for (const char* name : {"type_constrain.txt", "type_constraints.txt", "type_constrain", "type_constraints"}) {
        auto p = dataset_dir / name;
        if (std::filesystem::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

}  // namespace kge
