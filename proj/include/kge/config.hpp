#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kge/trainer.hpp"

namespace kge {

using KeyValues = std::map<std::string, std::string>;

// "key = value" per line; '#' starts a comment; blank lines ignored.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>");
KeyValues read_config_file(const std::filesystem::path& file);

// "key=value" command-line override.
std::pair<std::string, std::string> parse_override(const std::string& arg);

struct RunConfig {
    TrainConfig train;
    std::string dataset;              // directory, or a name under $KGE_DATA_ROOT
    std::string output = "run";       // output directory for train
    std::string type_constraints;     // constraint file; empty = look inside the dataset
    std::size_t valid_sample = 1000;  // validation triples per Hits@10 check
};

// Unknown keys and malformed values raise ConfigError. Keys not given keep
// their defaults.
RunConfig run_config_from(const KeyValues& kv);

// Every key with its effective value, one per line, in a fixed order. Feeding
// the echo back through run_config_from reproduces the config exactly.
std::string config_echo(const RunConfig& c);

std::vector<std::string> config_keys();

// Resolves a dataset argument: an existing path wins, otherwise the name is
// looked up under $KGE_DATA_ROOT. Throws DataError when neither exists.
std::filesystem::path resolve_dataset(const std::string& name);

// Looks for a type-constraint file inside a dataset directory.
std::optional<std::filesystem::path> find_constraint_file(const std::filesystem::path& dataset_dir);

}  // namespace kge
