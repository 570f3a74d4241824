#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "kge/data.hpp"
#include "kge/model.hpp"
#include "kge/optimizer.hpp"

namespace kge {

// Binary embedding layout, all integers little-endian:
//   "KGE1" | u32 kind | u64 |E| | u64 |R| | u32 d | u32 d_r | u32 norm | u32 tensor count
//   per tensor, in Block order: u8 block | u8 trainable | u64 rows | u64 cols | rows*cols f32
void write_embeddings(std::ostream& out, const ModelParams& params);
ModelParams read_embeddings(std::istream& in);

class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

struct Checkpoint {
    ModelParams params;
    std::optional<OptimizerConfig> optimizer;
    std::uint64_t optimizer_step = 0;
    std::vector<std::vector<std::vector<float>>> optimizer_state;
    std::string config_echo;  // flat key = value text of the run
};

// Checkpoint = embeddings | "OPT1" block | "CFG1" block | u64 FNV-1a of all
// preceding bytes. Writes go through a temporary file and a rename.
void save_checkpoint(const std::filesystem::path& file, const ModelParams& params, const Optimizer* optimizer,
                     const std::string& config_echo);
Checkpoint load_checkpoint(const std::filesystem::path& file);

void save_embeddings(const std::filesystem::path& file, const ModelParams& params);
ModelParams load_embeddings(const std::filesystem::path& file);

// "name<TAB>v1 v2 ..." with 9 significant digits: one line per entity, then
// one per relation (real parts followed by imaginary parts for ComplEx).
void export_text(std::ostream& out, const ModelParams& params, const Vocab& vocab);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace kge
