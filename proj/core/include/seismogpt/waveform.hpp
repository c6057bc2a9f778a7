#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/tensor.hpp"

namespace seismo {

inline constexpr std::size_t kComponents = 3;  // Z, N, E
inline constexpr double kNormScaleFloor = 1e-12;

// Three-component trace, samples stored time-major: samples[t * 3 + c].
struct Waveform {
  std::vector<double> samples;
  double sampling_rate_hz = 1.0;
  std::string station_id;
  double start_time_s = 0.0;

  std::size_t length() const { return samples.size() / kComponents; }
  double at(std::size_t t, std::size_t c) const { return samples[t * kComponents + c]; }
  double duration_s() const { return static_cast<double>(length()) / sampling_rate_hz; }
  void validate() const;
};

// Per-channel affine normalisation: normalized = (raw - offset) / scale.
struct ChannelNorm {
  std::array<double, kComponents> offset{0.0, 0.0, 0.0};
  std::array<double, kComponents> scale{1.0, 1.0, 1.0};

  // Mean and population standard deviation per channel of a time-major
  // (T x 3) block; scale is floored at kNormScaleFloor.
  static ChannelNorm fit(std::span<const double> samples);
};

// N non-overlapping tokens of L samples x 3 channels, normalised.
struct TokenSequence {
  std::vector<double> tokens;  // [N][L][3]
  std::size_t token_len = 0;
  ChannelNorm norm;
  double sampling_rate_hz = 1.0;
  std::string station_id;
  double start_time_s = 0.0;

  std::size_t n_tokens() const { return token_len ? tokens.size() / (token_len * kComponents) : 0; }
  std::size_t token_size() const { return token_len * kComponents; }
  std::span<const double> token(std::size_t i) const {
    return std::span<const double>(tokens).subspan(i * token_size(), token_size());
  }
  // [N, L, 3]
  Tensor as_tensor() const;
};

// keep[i] == true means token i is attended to. Kept positions are always a
// contiguous suffix.
struct PaddingMask {
  std::vector<bool> keep;

  static PaddingMask all(std::size_t n) { return PaddingMask{std::vector<bool>(n, true)}; }
  std::size_t size() const { return keep.size(); }
  std::size_t kept() const;
  bool is_suffix() const;
};

// Splits w into T / token_len tokens, normalising each channel by its own
// mean and standard deviation over w. Throws ContractError when T is not a
// multiple of token_len.
TokenSequence tokenize(const Waveform& w, std::size_t token_len);
// Same split with a caller-supplied normalisation.
TokenSequence tokenize(const Waveform& w, std::size_t token_len, const ChannelNorm& norm);

Waveform detokenize(const TokenSequence& ts);

// Keep count uniform on [min_keep, n_tokens]; the trailing tokens are kept.
PaddingMask random_padding_mask(std::size_t n_tokens, std::size_t min_keep, std::mt19937_64& rng);

}  // namespace seismo
