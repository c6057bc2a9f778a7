#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "seismogpt/errors.hpp"
#include "seismogpt/waveform.hpp"
#include "seismogpt/waveform_io.hpp"

using namespace seismo;

namespace {

Waveform random_waveform(std::size_t t, std::uint64_t seed, double sr = 1.9) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Waveform w;
  w.sampling_rate_hz = sr;
  w.station_id = "X" + std::to_string(seed);
  w.start_time_s = 12.5;
  w.samples.resize(t * kComponents);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 3.0 * nd(rng) + static_cast<double>(i % 3) * 7.0;
  return w;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("seismogpt_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Tokenize, ContextOf1024SamplesGives64Tokens) {
  const auto ts = tokenize(random_waveform(1024, 1), 16);
  EXPECT_EQ(ts.n_tokens(), 64u);
  EXPECT_EQ(ts.token_len, 16u);
}

TEST(Tokenize, SingleToken) { EXPECT_EQ(tokenize(random_waveform(16, 2), 16).n_tokens(), 1u); }

TEST(Tokenize, IndivisibleLengthIsAnError) {
  EXPECT_THROW(tokenize(random_waveform(33, 3), 16), ContractError);
}

TEST(Tokenize, TokenLayoutMatchesNormalisedSamples) {
  const Waveform w = random_waveform(64, 4);
  const auto ts = tokenize(w, 16);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = (w.at(i * 16 + j, c) - ts.norm.offset[c]) / ts.norm.scale[c];
        EXPECT_DOUBLE_EQ(ts.token(i)[j * 3 + c], want);
      }
    }
  }
}

TEST(Tokenize, NormalisedChannelsHaveZeroMeanUnitScale) {
  const auto ts = tokenize(random_waveform(1024, 5), 16);
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0.0, var = 0.0;
    const std::size_t n = ts.tokens.size() / 3;
    for (std::size_t k = 0; k < n; ++k) mu += ts.tokens[k * 3 + c];
    mu /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) var += (ts.tokens[k * 3 + c] - mu) * (ts.tokens[k * 3 + c] - mu);
    var /= static_cast<double>(n);
    EXPECT_NEAR(mu, 0.0, 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-10);
  }
}

TEST(Tokenize, ConstantChannelUsesScaleFloor) {
  Waveform w = random_waveform(32, 6);
  for (std::size_t t = 0; t < 32; ++t) w.samples[t * 3 + 1] = 4.0;
  const auto ts = tokenize(w, 16);
  EXPECT_EQ(ts.norm.scale[1], kNormScaleFloor);
  EXPECT_EQ(ts.norm.offset[1], 4.0);
  EXPECT_EQ(ts.token(0)[1], 0.0);
}

TEST(Tokenize, RoundTripIsIdentity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Waveform w = random_waveform(1024, seed);
    const Waveform back = detokenize(tokenize(w, 16));
    ASSERT_EQ(back.samples.size(), w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1e-12);
    EXPECT_EQ(back.sampling_rate_hz, w.sampling_rate_hz);
    EXPECT_EQ(back.station_id, w.station_id);
    EXPECT_EQ(back.start_time_s, w.start_time_s);
  }
}

TEST(Tokenize, ZeroTokenDetokenisesToOffset) {
  TokenSequence ts;
  ts.token_len = 16;
  ts.tokens.assign(16 * 3, 0.0);
  ts.norm.offset = {1.5, -2.0, 0.25};
  ts.norm.scale = {3.0, 4.0, 5.0};
  const Waveform w = detokenize(ts);
  ASSERT_EQ(w.length(), 16u);
  for (std::size_t t = 0; t < 16; ++t) {
    EXPECT_EQ(w.at(t, 0), 1.5);
    EXPECT_EQ(w.at(t, 1), -2.0);
    EXPECT_EQ(w.at(t, 2), 0.25);
  }
}

TEST(Tokenize, RandomSequenceRoundTripsBothWays) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  TokenSequence ts;
  ts.token_len = 16;
  ts.tokens.resize(8 * 16 * 3);
  for (double& v : ts.tokens) v = nd(rng);
  ts.norm.offset = {0.5, 1.0, -1.0};
  ts.norm.scale = {2.0, 0.5, 3.0};
  const auto again = tokenize(detokenize(ts), 16, ts.norm);
  for (std::size_t i = 0; i < ts.tokens.size(); ++i) EXPECT_NEAR(again.tokens[i], ts.tokens[i], 1e-12);
}

TEST(Tokenize, AsTensorShape) {
  const auto ts = tokenize(random_waveform(64, 7), 16);
  const Tensor t = ts.as_tensor();
  EXPECT_EQ(t.shape(), (Shape{4, 16, 3}));
  EXPECT_EQ(t.at(5), ts.tokens[5]);
}

TEST(PaddingMask, FullKeepRange) {
  std::mt19937_64 rng(1);
  const auto m = random_padding_mask(64, 64, rng);
  EXPECT_EQ(m.kept(), 64u);
}

TEST(PaddingMask, KeepCountBoundsAndSuffix) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto m = random_padding_mask(64, 8, rng);
    ASSERT_GE(m.kept(), 8u);
    ASSERT_LE(m.kept(), 64u);
    ASSERT_TRUE(m.is_suffix());
  }
}

TEST(PaddingMask, KeepCountIsUniformChiSquare) {
  // n = 4, min_keep = 1: four patterns, each with probability 1/4.
  std::mt19937_64 rng(3);
  std::array<int, 4> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto m = random_padding_mask(4, 1, rng);
    ASSERT_TRUE(m.is_suffix());
    ++counts[m.kept() - 1];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  // 0.99 quantile of chi-square with 3 degrees of freedom
  EXPECT_LT(chi2, 11.345);
}

TEST(PaddingMask, OutOfRangeMinKeep) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(random_padding_mask(4, 0, rng), ContractError);
  EXPECT_THROW(random_padding_mask(4, 5, rng), ContractError);
}

TEST(PaddingMask, SuffixPredicate) {
  EXPECT_TRUE((PaddingMask{{false, false, true, true}}).is_suffix());
  EXPECT_FALSE((PaddingMask{{true, false, true, true}}).is_suffix());
  EXPECT_FALSE((PaddingMask{{false, true, false, true}}).is_suffix());
}

TEST(Waveform, ValidateRejectsBadTraces) {
  Waveform w;
  w.sampling_rate_hz = 1.0;
  EXPECT_THROW(w.validate(), ContractError);
  w.samples = {1.0, 2.0, 3.0};
  w.sampling_rate_hz = 0.0;
  EXPECT_THROW(w.validate(), ContractError);
  w.sampling_rate_hz = 2.0;
  EXPECT_NO_THROW(w.validate());
  w.samples.push_back(1.0);
  EXPECT_THROW(w.validate(), ContractError);
}

TEST(WaveformIo, BinaryRoundTripIsExact) {
  std::vector<Waveform> ws{random_waveform(40, 1), random_waveform(40, 2)};
  ws[1].station_id = "station-two";
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_waveforms(ss, ws);
  const auto back = read_waveforms(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(back[s].station_id, ws[s].station_id);
    EXPECT_EQ(back[s].sampling_rate_hz, ws[s].sampling_rate_hz);
    EXPECT_EQ(back[s].samples, ws[s].samples);
  }
}

TEST(WaveformIo, HeaderLayout) {
  std::vector<Waveform> ws{random_waveform(2, 1)};
  ws[0].station_id = "AB";
  std::ostringstream os(std::ios::binary);
  write_waveforms(os, ws);
  const std::string b = os.str();
  ASSERT_EQ(b.substr(0, 4), "SGWF");
  // magic + version + count + rate + T + id length + id + samples
  EXPECT_EQ(b.size(), 4u + 4 + 4 + 8 + 8 + 4 + 2 + 2 * 3 * 8);
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);  // little-endian version 1
}

TEST(WaveformIo, RejectsBadMagicAndTruncation) {
  std::istringstream bad("XXXX1234", std::ios::binary);
  EXPECT_THROW(read_waveforms(bad), FormatError);
  std::ostringstream os(std::ios::binary);
  const std::vector<Waveform> one{random_waveform(8, 1)};
  write_waveforms(os, one);
  std::string b = os.str();
  std::istringstream cut(b.substr(0, b.size() - 5), std::ios::binary);
  EXPECT_THROW(read_waveforms(cut), FormatError);
}

TEST(WaveformIo, MissingFileReportsPath) {
  try {
    load_waveforms("/nonexistent/dir/trace.sgwf");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), "/nonexistent/dir/trace.sgwf");
  }
}

TEST(WaveformIo, CsvImport) {
  const auto dir = temp_dir("csv");
  const auto path = dir / "trace.csv";
  {
    std::ofstream os(path);
    os << "time,Z,N,E\n";
    for (int i = 0; i < 5; ++i) os << 10.0 + i * 0.5 << ',' << i << ',' << -i << ',' << 2 * i << '\n';
  }
  const Waveform w = load_waveform_csv(path, "csv");
  EXPECT_EQ(w.length(), 5u);
  EXPECT_DOUBLE_EQ(w.sampling_rate_hz, 2.0);
  EXPECT_DOUBLE_EQ(w.start_time_s, 10.0);
  EXPECT_EQ(w.at(3, 2), 6.0);
  const auto any = load_any_waveforms(path);
  ASSERT_EQ(any.size(), 1u);
  EXPECT_EQ(any[0].samples, w.samples);
}

TEST(WaveformIo, CsvNonUniformSamplingRejected) {
  const auto dir = temp_dir("csv_bad");
  const auto path = dir / "trace.csv";
  {
    std::ofstream os(path);
    os << "time,Z,N,E\n0,1,1,1\n1,1,1,1\n3,1,1,1\n";
  }
  EXPECT_THROW(load_waveform_csv(path, "x"), FormatError);
}
