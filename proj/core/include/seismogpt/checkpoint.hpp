#pragma once

// SGPT checkpoint (little-endian):
//   "SGPT" | version u32 | model kind u8 (0 single, 1 array)
//   | d_model, n_layers, n_heads, token_len, context_tokens, n_stations (u32)
//   | parameter count u64
//   | per parameter: name length u16 | UTF-8 name | rank u8 | extents u64[rank]
//     | f64 data

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>

#include "seismogpt/models.hpp"

namespace seismo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const SeismoModel& model);
void save_checkpoint(const std::filesystem::path& path, const SeismoModel& model);

// Reads only the header.
ModelConfig read_checkpoint_config(std::istream& is);
ModelConfig peek_checkpoint_config(const std::filesystem::path& path);

// Builds a model from the stored config and fills its parameters.
std::unique_ptr<SeismoModel> read_checkpoint(std::istream& is);
std::unique_ptr<SeismoModel> load_checkpoint(const std::filesystem::path& path);

// Overwrites an existing model's parameters. Throws ArtifactMismatchError on
// any config, name or shape difference.
void read_checkpoint_into(std::istream& is, SeismoModel& model);
void load_checkpoint_into(const std::filesystem::path& path, SeismoModel& model);

}  // namespace seismo
