#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "seismogpt/errors.hpp"
#include "seismogpt/transformer.hpp"

using namespace seismo;
using seismo::testing::check_gradients;
using seismo::testing::random_tensor;
using seismo::testing::weighted_sum;

namespace {

// Loop oracle for multi-head attention: x [n, d], projection weights from
// the layer, additive mask [n, n] (or none).
std::vector<double> naive_attention(const MultiHeadAttention& mha, const Tensor& x, const std::vector<double>* mask,
                                    std::size_t n_heads) {
  const std::size_t n = x.dim(0), d = x.dim(1), dk = d / n_heads;
  auto project = [&](const Linear& l) {
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < d; ++o) {
        double s = l.bias.at(o);
        for (std::size_t k = 0; k < d; ++k) s += x.at(i * d + k) * l.weight.at(k * d + o);
        out[i * d + o] = s;
      }
    }
    return out;
  };
  const auto q = project(mha.wq), k = project(mha.wk), v = project(mha.wv);
  std::vector<double> heads(n * d, 0.0);
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < dk; ++t) dot += q[i * d + h * dk + t] * k[j * d + h * dk + t];
        s[j] = dot / std::sqrt(static_cast<double>(dk)) + (mask ? (*mask)[i * n + j] : 0.0);
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t t = 0; t < dk; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / z * v[j * d + h * dk + t];
        heads[i * d + h * dk + t] = acc;
      }
    }
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < d; ++o) {
      double s = mha.wo.bias.at(o);
      for (std::size_t k2 = 0; k2 < d; ++k2) s += heads[i * d + k2] * mha.wo.weight.at(k2 * d + o);
      out[i * d + o] = s;
    }
  }
  return out;
}

void randomise(ParameterStore& store, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  for (auto& p : store.entries()) {
    for (double& v : p.tensor.mutable_data()) v = nd(rng);
  }
}

}  // namespace

TEST(CausalMask, LowerTriangularWithMaskedScore) {
  const Tensor m = causal_mask(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.at(i * 4 + j), j <= i ? 0.0 : kMaskedScore);
  }
  EXPECT_EQ(causal_mask(1).at(0), 0.0);
  EXPECT_THROW(causal_mask(0), ContractError);
}

TEST(AttentionMask, PaddedQueryAttendsOnlyToItself) {
  const PaddingMask pad{{false, true, true}};
  const Tensor m = attention_mask(3, true, std::span(&pad, 1));
  EXPECT_EQ(m.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_EQ(m.at(0 * 3 + 0), 0.0);
  EXPECT_EQ(m.at(0 * 3 + 1), kMaskedScore);
  EXPECT_EQ(m.at(1 * 3 + 0), kMaskedScore);  // kept query never sees padding
  EXPECT_EQ(m.at(1 * 3 + 1), 0.0);
  EXPECT_EQ(m.at(1 * 3 + 2), kMaskedScore);  // causal
  EXPECT_EQ(m.at(2 * 3 + 1), 0.0);
}

TEST(AttentionMask, FullAttentionWithoutPadsIsUndefined) {
  EXPECT_FALSE(attention_mask(5, false, {}).defined());
  EXPECT_EQ(attention_mask(5, true, {}).shape(), (Shape{1, 1, 5, 5}));
  const PaddingMask short_pad{{true, true}};
  EXPECT_THROW(attention_mask(3, false, std::span(&short_pad, 1)), DimensionError);
}

TEST(PositionalEncoding, SinCosValues) {
  const Tensor pe = positional_encoding(3, 4);
  EXPECT_EQ(pe.at(0 * 4 + 0), 0.0);
  EXPECT_EQ(pe.at(0 * 4 + 1), 1.0);
  EXPECT_NEAR(pe.at(1 * 4 + 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe.at(2 * 4 + 1), std::cos(2.0), 1e-15);
  EXPECT_NEAR(pe.at(2 * 4 + 2), std::sin(2.0 / 100.0), 1e-15);  // 10000^(2/4) = 100
  EXPECT_NEAR(pe.at(1 * 4 + 3), std::cos(1.0 / 100.0), 1e-15);
  EXPECT_THROW(positional_encoding(3, 5), ContractError);
}

TEST(Attention, MatchesLoopOracle) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    ParameterStore store;
    std::mt19937_64 rng(seed);
    MultiHeadAttention mha(store, "attn", AttentionConfig{8, 2, true}, rng);
    randomise(store, seed + 10);
    const Tensor x = random_tensor({5, 8}, rng, false);
    const Tensor causal = causal_mask(5);
    std::vector<double> m(causal.data().begin(), causal.data().end());
    const Tensor y = mha.forward(x, causal);
    const auto want = naive_attention(mha, x, &m, 2);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.at(i), want[i], 1e-12);
    const Tensor full = mha.forward(x, Tensor());
    const auto want_full = naive_attention(mha, x, nullptr, 2);
    for (std::size_t i = 0; i < want_full.size(); ++i) EXPECT_NEAR(full.at(i), want_full[i], 1e-12);
  }
}

TEST(Attention, HeadDivisibility) {
  ParameterStore store;
  std::mt19937_64 rng(1);
  EXPECT_THROW(MultiHeadAttention(store, "a", AttentionConfig{10, 3, true}, rng), ContractError);
  MultiHeadAttention ok(store, "b", AttentionConfig{8, 2, true}, rng);
  EXPECT_THROW(ok.forward(Tensor::zeros({2, 3, 6}), Tensor()), DimensionError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    ParameterStore store;
    std::mt19937_64 rng(seed);
    MultiHeadAttention mha(store, "attn", AttentionConfig{4, 2, true}, rng);
    Tensor x = random_tensor({2, 3, 4}, rng);
    const Tensor mask = reshape(causal_mask(3), {1, 1, 3, 3});
    std::vector<Tensor> inputs{x};
    for (auto& p : store.entries()) inputs.push_back(p.tensor);
    auto r = check_gradients([&] { return weighted_sum(mha.forward(x, mask), seed); }, inputs);
    EXPECT_TRUE(r.ok) << r.detail;
  }
}

TEST(Encoder, ShapesAndLayerNames) {
  ParameterStore store;
  std::mt19937_64 rng(1);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  EncoderStack enc(store, "enc", cfg, rng);
  EXPECT_EQ(enc.n_layers(), 2u);
  EXPECT_NE(store.find("enc.layers.1.attn.wq.weight"), nullptr);
  EXPECT_NE(store.find("enc.final_norm.gain"), nullptr);
  ForwardContext ctx;
  const Tensor y = enc.forward(random_tensor({3, 5, 8}, rng, false), {}, ctx);
  EXPECT_EQ(y.shape(), (Shape{3, 5, 8}));
  EXPECT_THROW(enc.forward(Tensor::zeros({3, 5, 6}), {}, ctx), DimensionError);
}

TEST(Encoder, ZeroLayersIsIdentity) {
  ParameterStore store;
  std::mt19937_64 rng(2);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 0;
  EncoderStack enc(store, "enc", cfg, rng);
  ForwardContext ctx;
  const Tensor x = random_tensor({1, 4, 8}, rng, false);
  EXPECT_TRUE(enc.forward(x, {}, ctx).same_node(x));
  EXPECT_EQ(store.size(), 0u);
}

TEST(Encoder, DropoutNeedsRngAndIsOffAtInference) {
  ParameterStore store;
  std::mt19937_64 rng(3);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.dropout = 0.5;
  EncoderStack enc(store, "enc", cfg, rng);
  const Tensor x = random_tensor({1, 4, 8}, rng, false);
  ForwardContext train{true, nullptr};
  EXPECT_THROW(enc.forward(x, {}, train), ContractError);
  ForwardContext infer;
  const Tensor a = enc.forward(x, {}, infer), b = enc.forward(x, {}, infer);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Encoder, CausalOutputIgnoresFutureTokens) {
  ParameterStore store;
  std::mt19937_64 rng(4);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  EncoderStack enc(store, "enc", cfg, rng);
  ForwardContext ctx;
  Tensor x = random_tensor({1, 6, 8}, rng, false);
  const Tensor y0 = enc.forward(x, {}, ctx);
  x.mutable_data()[4 * 8 + 3] += 5.0;
  const Tensor y1 = enc.forward(x, {}, ctx);
  for (std::size_t i = 0; i < 4 * 8; ++i) EXPECT_EQ(y0.at(i), y1.at(i));
  bool changed = false;
  for (std::size_t i = 4 * 8; i < 6 * 8; ++i) changed |= y0.at(i) != y1.at(i);
  EXPECT_TRUE(changed);
}

TEST(Encoder, PaddedPositionsDoNotLeakIntoKeptOutputs) {
  ParameterStore store;
  std::mt19937_64 rng(5);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  EncoderStack enc(store, "enc", cfg, rng);
  ForwardContext ctx;
  const PaddingMask pad{{false, false, true, true, true}};
  Tensor x = random_tensor({1, 5, 8}, rng, false);
  const Tensor y0 = enc.forward(x, std::span(&pad, 1), ctx);
  for (std::size_t i = 0; i < 2 * 8; ++i) x.mutable_data()[i] = 100.0;
  const Tensor y1 = enc.forward(x, std::span(&pad, 1), ctx);
  for (std::size_t i = 2 * 8; i < 5 * 8; ++i) EXPECT_EQ(y0.at(i), y1.at(i));
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    ParameterStore store;
    std::mt19937_64 rng(seed);
    EncoderConfig cfg;
    cfg.d_model = 4;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.dropout = 0.2;
    EncoderStack enc(store, "enc", cfg, rng);
    randomise(store, seed + 3, 0.5);
    Tensor x = random_tensor({2, 3, 4}, rng);
    const PaddingMask pads[] = {PaddingMask{{false, true, true}}, PaddingMask::all(3)};
    std::vector<Tensor> inputs{x};
    for (auto& p : store.entries()) inputs.push_back(p.tensor);
    auto r = check_gradients(
        [&] {
          std::mt19937_64 drop(seed);
          ForwardContext ctx{true, &drop};
          return weighted_sum(enc.forward(x, pads, ctx), seed);
        },
        inputs);
    EXPECT_TRUE(r.ok) << r.detail;
  }
}

TEST(Layers, LinearAndConvInitialisation) {
  ParameterStore store;
  std::mt19937_64 rng(1);
  Linear l(store, "lin", 30, 20, rng);
  const double a = std::sqrt(6.0 / 50.0);
  for (double v : l.weight.data()) {
    EXPECT_LE(std::abs(v), a);
  }
  for (double v : l.bias.data()) EXPECT_EQ(v, 0.0);
  Conv1d c(store, "conv", 3, 4, 3, 1, 1, rng);
  EXPECT_EQ(c.kernels.shape(), (Shape{4, 3, 3}));
  EXPECT_THROW(Linear(store, "lin", 2, 2, rng), ContractError);  // duplicate name
}
