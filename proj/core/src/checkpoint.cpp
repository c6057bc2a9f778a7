#include "seismogpt/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "seismogpt/errors.hpp"

namespace seismo {

namespace {

void put_u32(std::ostream& os, std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ContractError("config value does not fit in u32");
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
}

void read_parameters(std::istream& is, SeismoModel& model) {
  auto& entries = model.params().entries();
  const auto count = binary::get<std::uint64_t>(is);
  if (count != entries.size()) {
    throw ArtifactMismatchError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                                std::to_string(entries.size()));
  }
  for (auto& entry : entries) {
    const auto len = binary::get<std::uint16_t>(is);
    const std::string name = binary::get_bytes(is, len);
    if (name != entry.name) {
      throw ArtifactMismatchError("checkpoint parameter '" + name + "' where '" + entry.name + "' was expected");
    }
    const auto rank = binary::get<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(binary::get<std::uint64_t>(is));
    if (shape != entry.tensor.shape()) {
      throw ArtifactMismatchError("parameter '" + name + "' has shape " + shape_string(shape) + " in checkpoint, " +
                                  shape_string(entry.tensor.shape()) + " in model");
    }
    for (double& v : entry.tensor.mutable_data()) v = binary::get<double>(is);
  }
}

}  // namespace

void write_checkpoint(std::ostream& os, const SeismoModel& model) {
  const auto& cfg = model.config();
  binary::put_magic(os, "SGPT");
  binary::put<std::uint32_t>(os, kCheckpointVersion);
  binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(cfg.kind));
  put_u32(os, cfg.d_model);
  put_u32(os, cfg.n_layers);
  put_u32(os, cfg.n_heads);
  put_u32(os, cfg.token_len);
  put_u32(os, cfg.context_tokens);
  put_u32(os, cfg.n_stations);
  const auto& entries = model.params().entries();
  binary::put<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("parameter name too long");
    binary::put<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto extent : e.tensor.shape()) binary::put<std::uint64_t>(os, extent);
    for (double v : e.tensor.data()) binary::put<double>(os, v);
  }
}

void save_checkpoint(const std::filesystem::path& path, const SeismoModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open checkpoint for writing");
  write_checkpoint(os, model);
  if (!os) throw IoError(path.string(), "checkpoint write failed");
}

ModelConfig read_checkpoint_config(std::istream& is) {
  binary::expect_magic(is, "SGPT");
  const auto version = binary::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  const auto kind = binary::get<std::uint8_t>(is);
  if (kind > 1) throw FormatError("unknown model kind " + std::to_string(kind));
  cfg.kind = static_cast<ModelKind>(kind);
  cfg.d_model = binary::get<std::uint32_t>(is);
  cfg.n_layers = binary::get<std::uint32_t>(is);
  cfg.n_heads = binary::get<std::uint32_t>(is);
  cfg.token_len = binary::get<std::uint32_t>(is);
  cfg.context_tokens = binary::get<std::uint32_t>(is);
  cfg.n_stations = binary::get<std::uint32_t>(is);
  return cfg;
}

ModelConfig peek_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open checkpoint");
  return read_checkpoint_config(is);
}

std::unique_ptr<SeismoModel> read_checkpoint(std::istream& is) {
  ModelConfig cfg = read_checkpoint_config(is);
  cfg.validate();
  auto model = make_model(cfg);
  read_parameters(is, *model);
  return model;
}

std::unique_ptr<SeismoModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open checkpoint");
  return read_checkpoint(is);
}

void read_checkpoint_into(std::istream& is, SeismoModel& model) {
  const ModelConfig cfg = read_checkpoint_config(is);
  if (!cfg.same_architecture(model.config())) {
    throw ArtifactMismatchError("checkpoint config (" + to_string(cfg.kind) + ", d_model " +
                                std::to_string(cfg.d_model) + ", layers " + std::to_string(cfg.n_layers) +
                                ") does not match the model");
  }
  read_parameters(is, model);
}

void load_checkpoint_into(const std::filesystem::path& path, SeismoModel& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open checkpoint");
  read_checkpoint_into(is, model);
}

}  // namespace seismo
