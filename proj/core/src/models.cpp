#include "seismogpt/models.hpp"

#include "seismogpt/errors.hpp"

namespace seismo {

namespace {

EncoderConfig encoder_config(const ModelConfig& cfg, bool causal) {
  EncoderConfig e;
  e.d_model = cfg.d_model;
  e.n_heads = cfg.n_heads;
  e.n_layers = cfg.n_layers;
  e.dropout = cfg.dropout;
  e.causal = causal;
  return e;
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::Single ? "single" : "array"; }

void ModelConfig::validate() const {
  if (d_model == 0 || d_model % 2 != 0) throw ContractError("d_model must be positive and even");
  if (n_heads == 0 || d_model % n_heads != 0) throw ContractError("d_model must be divisible by n_heads");
  if (token_len == 0) throw ContractError("token_len must be positive");
  if (context_tokens == 0) throw ContractError("context_tokens must be positive");
  if (n_stations == 0) throw ContractError("n_stations must be positive");
  if (kind == ModelKind::Single && n_stations != 1) throw ContractError("single-station model needs n_stations = 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
  return kind == o.kind && d_model == o.d_model && n_layers == o.n_layers && n_heads == o.n_heads &&
         token_len == o.token_len && context_tokens == o.context_tokens && n_stations == o.n_stations;
}

SeismoModel::SeismoModel(const ModelConfig& cfg) : cfg_(cfg), init_rng_(cfg.init_seed) {
  cfg_.validate();
  pe_cache_ = positional_encoding(cfg_.context_tokens, cfg_.d_model);
}

Tensor SeismoModel::positions(std::size_t n) const {
  if (n == cfg_.context_tokens) return pe_cache_;
  if (n < cfg_.context_tokens) {
    const auto d = pe_cache_.data();
    return Tensor::from_data({n, cfg_.d_model}, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n * cfg_.d_model)));
  }
  return positional_encoding(n, cfg_.d_model);
}

// ---------------------------------------------------------------------------

SingleStationModel::SingleStationModel(const ModelConfig& cfg)
    : SeismoModel(cfg),
      conv1_(params_, "embed.conv1", kComponents, cfg.d_model / 2, 3, 1, 1, init_rng_),
      conv2_(params_, "embed.conv2", cfg.d_model / 2, cfg.d_model, 3, 1, 1, init_rng_),
      encoder_(params_, "encoder", encoder_config(cfg, true), init_rng_),
      head_(params_, "head", cfg.d_model, cfg.token_len * kComponents, init_rng_) {
  if (cfg.kind != ModelKind::Single) throw ContractError("SingleStationModel built from a non-single config");
}

Tensor SingleStationModel::embed(const Tensor& x) const {
  const std::size_t b = x.dim(0), n = x.dim(1), l = x.dim(2);
  Tensor t = reshape(permute(x, {0, 1, 3, 2}), {b * n, kComponents, l});
  t = conv2_.forward(gelu(conv1_.forward(t)));
  return reshape(mean_lastdim(t), {b, n, cfg_.d_model});
}

Tensor SingleStationModel::single_forward(const Tensor& x, std::span<const PaddingMask> pads,
                                          ForwardContext& ctx) const {
  if (x.rank() == 3) {
    auto y = single_forward(reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}), pads, ctx);
    return reshape(y, x.shape());
  }
  if (x.rank() != 4 || x.dim(3) != kComponents) {
    throw DimensionError("single_forward expects [B, N, L, 3], got " + shape_string(x.shape()));
  }
  if (x.dim(2) != cfg_.token_len) {
    throw ContractError("token length " + std::to_string(x.dim(2)) + " does not match model token_len " +
                        std::to_string(cfg_.token_len));
  }
  const std::size_t b = x.dim(0), n = x.dim(1);
  Tensor z = add(embed(x), positions(n));
  Tensor h = encoder_.forward(z, pads, ctx);
  return reshape(head_.forward(h), {b, n, cfg_.token_len, kComponents});
}

Tensor SingleStationModel::predict_tokens(const Tensor& x, std::span<const PaddingMask> pads,
                                          ForwardContext& ctx) const {
  if (x.rank() != 5) throw DimensionError("predict_tokens expects [B, S, N, L, 3], got " + shape_string(x.shape()));
  const std::size_t b = x.dim(0), s = x.dim(1);
  std::vector<PaddingMask> per_trace;
  if (!pads.empty()) {
    if (pads.size() != b) throw DimensionError("one padding mask per batch row expected");
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < s; ++j) per_trace.push_back(pads[i]);
    }
  }
  Tensor flat = reshape(x, {b * s, x.dim(2), x.dim(3), x.dim(4)});
  return reshape(single_forward(flat, per_trace, ctx), x.shape());
}

// ---------------------------------------------------------------------------

ArrayModel::ArrayModel(const ModelConfig& cfg)
    : SeismoModel(cfg),
      conv1_(params_, "embed.conv1", cfg.token_len * kComponents, cfg.d_model / 2, init_rng_),
      conv2_(params_, "embed.conv2", cfg.d_model / 2, cfg.d_model, init_rng_),
      temporal_(params_, "temporal", encoder_config(cfg, true), init_rng_),
      spatial_(params_, "spatial", encoder_config(cfg, false), init_rng_),
      head_(params_, "head", cfg.d_model, cfg.token_len * kComponents, init_rng_) {
  if (cfg.kind != ModelKind::Array) throw ContractError("ArrayModel built from a non-array config");
}

Tensor ArrayModel::embed(const Tensor& x) const {
  const std::size_t b = x.dim(0), s = x.dim(1), n = x.dim(2);
  Tensor t = reshape(x, {b, s, n, cfg_.token_len * kComponents});
  return conv2_.forward(gelu(conv1_.forward(t)));
}

Tensor ArrayModel::array_forward(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const {
  if (x.rank() != 5 || x.dim(4) != kComponents) {
    throw DimensionError("array_forward expects [B, S, N, L, 3], got " + shape_string(x.shape()));
  }
  const std::size_t b = x.dim(0), s = x.dim(1), n = x.dim(2), d = cfg_.d_model;
  if (s != cfg_.n_stations) {
    throw ContractError("array model trained for " + std::to_string(cfg_.n_stations) + " stations, got " +
                        std::to_string(s));
  }
  if (x.dim(3) != cfg_.token_len) {
    throw ContractError("token length " + std::to_string(x.dim(3)) + " does not match model token_len " +
                        std::to_string(cfg_.token_len));
  }
  if (!pads.empty() && pads.size() != b) throw DimensionError("one padding mask per batch row expected");

  const Tensor z = embed(x);  // [B, S, N, d]

  std::vector<PaddingMask> temporal_pads, spatial_pads;
  if (!pads.empty()) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < s; ++j) temporal_pads.push_back(pads[i]);
      for (std::size_t t = 0; t < n; ++t) spatial_pads.push_back(PaddingMask{std::vector<bool>(s, pads[i].keep.at(t))});
    }
  }

  Tensor zt = add(reshape(z, {b * s, n, d}), positions(n));
  Tensor ht = reshape(temporal_.forward(zt, temporal_pads, ctx), {b, s, n, d});

  Tensor zs = add(reshape(permute(z, {0, 2, 1, 3}), {b * n, s, d}), positional_encoding(s, d));
  Tensor hs = permute(reshape(spatial_.forward(zs, spatial_pads, ctx), {b, n, s, d}), {0, 2, 1, 3});

  Tensor y = head_.forward(add(ht, hs));  // [B, S, N, L*3]
  return reshape(y, {b, s, n * cfg_.token_len, kComponents});
}

Tensor ArrayModel::predict_tokens(const Tensor& x, std::span<const PaddingMask> pads, ForwardContext& ctx) const {
  return reshape(array_forward(x, pads, ctx), x.shape());
}

std::unique_ptr<SeismoModel> make_model(const ModelConfig& cfg) {
  if (cfg.kind == ModelKind::Single) return std::make_unique<SingleStationModel>(cfg);
  return std::make_unique<ArrayModel>(cfg);
}

std::size_t count_parameters(const SeismoModel& model) { return model.params().scalar_count(); }

}  // namespace seismo
