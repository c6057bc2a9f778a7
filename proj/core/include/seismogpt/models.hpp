#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/parameters.hpp"
#include "seismogpt/transformer.hpp"
#include "seismogpt/waveform.hpp"

namespace seismo {

enum class ModelKind : std::uint8_t { Single = 0, Array = 1 };

std::string to_string(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::Single;
  std::size_t d_model = 128;
  std::size_t n_layers = 6;
  std::size_t n_heads = 8;
  std::size_t token_len = 16;
  std::size_t context_tokens = 64;
  std::size_t n_stations = 1;  // 16 for the reference array
  double dropout = 0.1;
  std::uint64_t init_seed = 0;

  void validate() const;
  // Equality over the fields persisted in checkpoints.
  bool same_architecture(const ModelConfig& other) const;
};

// Common surface of both forecasters. Inputs are normalised token grids
// x [B, S, N, L, 3]; the output has the same shape and position i holds the
// prediction of token i + 1. `pads` is empty or holds one mask per batch
// row, shared by every station of that row.
class SeismoModel {
 public:
  virtual ~SeismoModel() = default;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  virtual Tensor predict_tokens(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const = 0;

 protected:
  explicit SeismoModel(const ModelConfig& cfg);
  Tensor positions(std::size_t n) const;

  ModelConfig cfg_;
  ParameterStore params_;
  Tensor pe_cache_;
  // Consumed by the derived constructors in parameter registration order.
  std::mt19937_64 init_rng_;
};

class SingleStationModel final : public SeismoModel {
 public:
  explicit SingleStationModel(const ModelConfig& cfg);

  // x [N, L, 3] or [B, N, L, 3] -> same shape.
  Tensor single_forward(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const;
  Tensor predict_tokens(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const override;

  // [B, N, L, 3] -> [B, N, d]: per token (3, L) -> conv(k3) d/2 -> GELU ->
  // conv(k3) d -> mean over L.
  Tensor embed(const Tensor& x) const;

 private:
  Conv1d conv1_, conv2_;
  EncoderStack encoder_;
  Linear head_;
};

class ArrayModel final : public SeismoModel {
 public:
  explicit ArrayModel(const ModelConfig& cfg);

  // x [B, S, N, L, 3] -> [B, S, N*L, 3]
  Tensor array_forward(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const;
  Tensor predict_tokens(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const override;

  // [B, S, N, L, 3] -> [B, S, N, d] with 1x1 convolutions over the (S, N)
  // grid; no mixing across stations or time.
  Tensor embed(const Tensor& x) const;

 private:
  Linear conv1_, conv2_;  // 1x1 kernels, stored as [in, out]
  EncoderStack temporal_;
  EncoderStack spatial_;
  Linear head_;
};

std::unique_ptr<SeismoModel> make_model(const ModelConfig& cfg);

std::size_t count_parameters(const SeismoModel& model);

}  // namespace seismo
