#include "seismogpt/transformer.hpp"

#include <cmath>

#include "seismogpt/errors.hpp"

namespace seismo {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng) {
  weight = store.add(name + ".weight", glorot_uniform({in, out}, in, out, rng));
  bias = store.add(name + ".bias", Tensor::zeros({out}, true));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width) {
  gain = store.add(name + ".gain", Tensor::full({width}, 1.0, true));
  bias = store.add(name + ".bias", Tensor::zeros({width}, true));
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::size_t padding, std::mt19937_64& rng)
    : stride_(stride), padding_(padding) {
  kernels = store.add(name + ".kernels", glorot_uniform({out_channels, in_channels, kernel}, in_channels * kernel,
                                                        out_channels * kernel, rng));
  bias = store.add(name + ".bias", Tensor::zeros({out_channels}, true));
}

void AttentionConfig::validate() const {
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                        std::to_string(n_heads));
  }
}

Tensor causal_mask(std::size_t n) {
  if (n == 0) throw ContractError("causal_mask needs n >= 1");
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = kMaskedScore;
  }
  return Tensor::from_data({n, n}, std::move(m));
}

Tensor attention_mask(std::size_t n, bool causal, std::span<const PaddingMask> pads) {
  if (pads.empty()) {
    if (!causal) return Tensor();
    return reshape(causal_mask(n), {1, 1, n, n});
  }
  std::vector<double> m(pads.size() * n * n, 0.0);
  for (std::size_t g = 0; g < pads.size(); ++g) {
    const auto& keep = pads[g].keep;
    if (keep.size() != n) {
      throw DimensionError("padding mask of length " + std::to_string(keep.size()) + " for sequence of " +
                           std::to_string(n));
    }
    double* mg = m.data() + g * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool allowed = keep[i] ? (keep[j] && (!causal || j <= i)) : (j == i);
        if (!allowed) mg[i * n + j] = kMaskedScore;
      }
    }
  }
  return Tensor::from_data({pads.size(), 1, n, n}, std::move(m));
}

Tensor positional_encoding(std::size_t n, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ContractError("positional_encoding needs an even d_model, got " + std::to_string(d_model));
  }
  std::vector<double> pe(n * d_model);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / freq;
      pe[pos * d_model + i] = std::sin(angle);
      pe[pos * d_model + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from_data({n, d_model}, std::move(pe));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, AttentionConfig cfg,
                                       std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  wq = Linear(store, name + ".wq", cfg.d_model, cfg.d_model, rng);
  wk = Linear(store, name + ".wk", cfg.d_model, cfg.d_model, rng);
  wv = Linear(store, name + ".wv", cfg.d_model, cfg.d_model, rng);
  wo = Linear(store, name + ".wo", cfg.d_model, cfg.d_model, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x, const Tensor& mask) const {
  if (x.rank() == 2) {
    auto y = forward(reshape(x, {1, x.dim(0), x.dim(1)}), mask);
    return reshape(y, x.shape());
  }
  if (x.rank() != 3 || x.dim(2) != cfg_.d_model) {
    throw DimensionError("attention input " + shape_string(x.shape()) + " does not match d_model " +
                         std::to_string(cfg_.d_model));
  }
  const std::size_t g = x.dim(0), n = x.dim(1), h = cfg_.n_heads, dk = cfg_.d_k();
  auto split = [&](const Tensor& t) { return permute(reshape(t, {g, n, h, dk}), {0, 2, 1, 3}); };
  const Tensor q = split(wq.forward(x));
  const Tensor k = split(wk.forward(x));
  const Tensor v = split(wv.forward(x));
  Tensor scores = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
  if (mask.defined()) scores = add(scores, mask);
  const Tensor attn = softmax_lastdim(scores);
  const Tensor heads = matmul(attn, v);  // [g, h, n, dk]
  return wo.forward(reshape(permute(heads, {0, 2, 1, 3}), {g, n, cfg_.d_model}));
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, const EncoderConfig& cfg,
                           std::mt19937_64& rng)
    : dropout_(cfg.dropout) {
  ln1 = LayerNorm(store, name + ".ln1", cfg.d_model);
  attn = MultiHeadAttention(store, name + ".attn", AttentionConfig{cfg.d_model, cfg.n_heads, cfg.causal}, rng);
  ln2 = LayerNorm(store, name + ".ln2", cfg.d_model);
  ff1 = Linear(store, name + ".ff1", cfg.d_model, cfg.ffn_multiplier * cfg.d_model, rng);
  ff2 = Linear(store, name + ".ff2", cfg.ffn_multiplier * cfg.d_model, cfg.d_model, rng);
}

Tensor EncoderLayer::forward(const Tensor& x, const Tensor& mask, ForwardContext& ctx) const {
  const bool drop = ctx.training && dropout_ > 0.0;
  if (drop && !ctx.rng) throw ContractError("dropout during training needs an rng");
  Tensor a = attn.forward(ln1.forward(x), mask);
  if (drop) a = dropout(a, dropout_, *ctx.rng);
  const Tensor h = add(x, a);
  Tensor f = ff2.forward(gelu(ff1.forward(ln2.forward(h))));
  if (drop) f = dropout(f, dropout_, *ctx.rng);
  return add(h, f);
}

EncoderStack::EncoderStack(ParameterStore& store, const std::string& name, const EncoderConfig& cfg,
                           std::mt19937_64& rng)
    : cfg_(cfg) {
  AttentionConfig{cfg.d_model, cfg.n_heads, cfg.causal}.validate();
  layers_.reserve(cfg.n_layers);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    layers_.emplace_back(store, name + ".layers." + std::to_string(i), cfg, rng);
  }
  if (cfg.final_norm && cfg.n_layers > 0) {
    final_ = LayerNorm(store, name + ".final_norm", cfg.d_model);
    has_final_ = true;
  }
}

Tensor EncoderStack::forward(const Tensor& z, std::span<const PaddingMask> pads, ForwardContext& ctx) const {
  if (z.rank() != 3 || z.dim(2) != cfg_.d_model) {
    throw DimensionError("encoder input " + shape_string(z.shape()) + " does not match d_model " +
                         std::to_string(cfg_.d_model));
  }
  if (!pads.empty() && pads.size() != z.dim(0)) {
    throw DimensionError("encoder got " + std::to_string(pads.size()) + " padding masks for " +
                         std::to_string(z.dim(0)) + " sequences");
  }
  if (layers_.empty()) return z;
  return forward_masked(z, attention_mask(z.dim(1), cfg_.causal, pads), ctx);
}

Tensor EncoderStack::forward_masked(const Tensor& z, const Tensor& mask, ForwardContext& ctx) const {
  Tensor h = z;
  for (const auto& layer : layers_) h = layer.forward(h, mask, ctx);
  return has_final_ ? final_.forward(h) : h;
}

}  // namespace seismo
