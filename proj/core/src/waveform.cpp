#include "seismogpt/waveform.hpp"

#include <algorithm>
#include <cmath>

#include "seismogpt/errors.hpp"

namespace seismo {

void Waveform::validate() const {
  if (samples.empty() || samples.size() % kComponents != 0) {
    throw ContractError("waveform '" + station_id + "' must hold T >= 1 samples of 3 components");
  }
  if (!(sampling_rate_hz > 0.0)) throw ContractError("waveform '" + station_id + "' has non-positive sampling rate");
}

ChannelNorm ChannelNorm::fit(std::span<const double> samples) {
  ChannelNorm n;
  const std::size_t t = samples.size() / kComponents;
  if (t == 0) return n;
  for (std::size_t c = 0; c < kComponents; ++c) {
    double mu = 0.0;
    for (std::size_t i = 0; i < t; ++i) mu += samples[i * kComponents + c];
    mu /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double d = samples[i * kComponents + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(t);
    n.offset[c] = mu;
    n.scale[c] = std::max(std::sqrt(var), kNormScaleFloor);
  }
  return n;
}

Tensor TokenSequence::as_tensor() const {
  return Tensor::from_data({n_tokens(), token_len, kComponents}, tokens);
}

std::size_t PaddingMask::kept() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)); }

bool PaddingMask::is_suffix() const {
  auto first = std::find(keep.begin(), keep.end(), true);
  return std::all_of(first, keep.end(), [](bool k) { return k; });
}

TokenSequence tokenize(const Waveform& w, std::size_t token_len) {
  w.validate();
  return tokenize(w, token_len, ChannelNorm::fit(w.samples));
}

TokenSequence tokenize(const Waveform& w, std::size_t token_len, const ChannelNorm& norm) {
  w.validate();
  if (token_len == 0) throw ContractError("token length must be positive");
  if (w.length() % token_len != 0) {
    throw ContractError("waveform length " + std::to_string(w.length()) + " is not divisible by token length " +
                        std::to_string(token_len));
  }
  for (double s : norm.scale) {
    if (!(s > 0.0)) throw ContractError("normalisation scale must be positive");
  }
  TokenSequence ts;
  ts.token_len = token_len;
  ts.norm = norm;
  ts.sampling_rate_hz = w.sampling_rate_hz;
  ts.station_id = w.station_id;
  ts.start_time_s = w.start_time_s;
  ts.tokens.resize(w.samples.size());
  for (std::size_t i = 0; i < w.length(); ++i) {
    for (std::size_t c = 0; c < kComponents; ++c) {
      const std::size_t k = i * kComponents + c;
      ts.tokens[k] = (w.samples[k] - norm.offset[c]) / norm.scale[c];
    }
  }
  return ts;
}

Waveform detokenize(const TokenSequence& ts) {
  Waveform w;
  w.sampling_rate_hz = ts.sampling_rate_hz;
  w.station_id = ts.station_id;
  w.start_time_s = ts.start_time_s;
  w.samples.resize(ts.tokens.size());
  for (std::size_t k = 0; k < ts.tokens.size(); ++k) {
    const std::size_t c = k % kComponents;
    w.samples[k] = ts.tokens[k] * ts.norm.scale[c] + ts.norm.offset[c];
  }
  return w;
}

PaddingMask random_padding_mask(std::size_t n_tokens, std::size_t min_keep, std::mt19937_64& rng) {
  if (min_keep < 1 || min_keep > n_tokens) {
    throw ContractError("random_padding_mask: min_keep " + std::to_string(min_keep) + " outside [1, " +
                        std::to_string(n_tokens) + "]");
  }
  std::uniform_int_distribution<std::size_t> pick(min_keep, n_tokens);
  const std::size_t kept = pick(rng);
  PaddingMask mask;
  mask.keep.assign(n_tokens, false);
  std::fill(mask.keep.end() - static_cast<std::ptrdiff_t>(kept), mask.keep.end(), true);
  return mask;
}

}  // namespace seismo
