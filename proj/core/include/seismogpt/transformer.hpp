#pragma once

// Encoder machinery shared by both forecasters: parameterised layers,
// masks, sinusoidal positions and the pre-norm encoder stack.

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/ops.hpp"
#include "seismogpt/parameters.hpp"
#include "seismogpt/tensor.hpp"
#include "seismogpt/waveform.hpp"

namespace seismo {

struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }

  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor forward(const Tensor& x) const { return layernorm(x, gain, bias); }

  Tensor gain;
  Tensor bias;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride, std::size_t padding, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const { return conv1d(x, kernels, bias, stride_, padding_); }

  Tensor kernels;  // [out, in, K]
  Tensor bias;     // [out]

 private:
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
};

struct AttentionConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 8;
  bool causal = true;

  std::size_t d_k() const { return d_model / n_heads; }
  void validate() const;
};

// M[i][j] = 0 for j <= i and kMaskedScore (the realised -inf) for j > i.
Tensor causal_mask(std::size_t n);

// Additive attention mask of shape [groups, 1, n, n] (groups = pads.size(),
// or 1 when no pads are given). A kept query attends to kept keys (and only
// to j <= i when causal); a padded query attends to itself alone, so it
// never reads real tokens' keys and never produces a degenerate row.
// Returns an undefined tensor when there is nothing to mask.
Tensor attention_mask(std::size_t n, bool causal, std::span<const PaddingMask> pads);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t n, std::size_t d_model);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, AttentionConfig cfg, std::mt19937_64& rng);

  // x [G, n, d] (or [n, d]); mask additive, broadcastable to [G, H, n, n].
  Tensor forward(const Tensor& x, const Tensor& mask) const;

  const AttentionConfig& config() const { return cfg_; }
  Linear wq, wk, wv, wo;

 private:
  AttentionConfig cfg_;
};

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 8;
  std::size_t n_layers = 6;
  std::size_t ffn_multiplier = 4;
  double dropout = 0.1;
  bool causal = true;
  bool final_norm = true;
};

// Pre-norm layer: h = x + drop(attn(ln1(x))); out = h + drop(ff(ln2(h))).
class EncoderLayer {
 public:
  EncoderLayer(ParameterStore& store, const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const Tensor& mask, ForwardContext& ctx) const;

  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;

 private:
  double dropout_;
};

class EncoderStack {
 public:
  EncoderStack(ParameterStore& store, const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng);

  // z [G, n, d]; pads empty or one per group.
  Tensor forward(const Tensor& z, std::span<const PaddingMask> pads, ForwardContext& ctx) const;
  // Same with a precomputed additive mask.
  Tensor forward_masked(const Tensor& z, const Tensor& mask, ForwardContext& ctx) const;

  const EncoderConfig& config() const { return cfg_; }
  std::size_t n_layers() const { return layers_.size(); }

 private:
  EncoderConfig cfg_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_;
  bool has_final_ = false;
};

}  // namespace seismo
