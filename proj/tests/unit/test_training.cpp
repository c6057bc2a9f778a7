#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "seismogpt/checkpoint.hpp"
#include "seismogpt/errors.hpp"
#include "seismogpt/optim.hpp"
#include "seismogpt/training.hpp"

using namespace seismo;
using seismo::testing::random_tensor;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("seismogpt_train_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

Waveform noise_trace(std::size_t t, std::uint64_t seed, const std::string& id = "S") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Waveform w;
  w.station_id = id;
  w.sampling_rate_hz = 1.9;
  w.samples.resize(t * 3);
  // Smooth-ish signal so there is something learnable.
  double a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    a = 0.9 * a + nd(rng);
    b = 0.8 * b + nd(rng);
    c = 0.7 * c + nd(rng);
    w.samples[i * 3] = a;
    w.samples[i * 3 + 1] = b;
    w.samples[i * 3 + 2] = c;
  }
  return w;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.token_len = 4;
  c.context_tokens = 6;
  c.dropout = 0.1;
  c.init_seed = 3;
  return c;
}

TrainingSet tiny_set(std::size_t events, std::uint64_t seed) {
  std::vector<std::vector<Waveform>> ev;
  for (std::size_t e = 0; e < events; ++e) ev.push_back({noise_trace(40, seed + e)});
  return TrainingSet(std::move(ev), 6, 4, 4);
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.min_keep_tokens = 2;
  cfg.max_epochs = 3;
  cfg.seed = 17;
  return cfg;
}

bool same_params(const SeismoModel& a, const SeismoModel& b) {
  const auto& x = a.params().entries();
  const auto& y = b.params().entries();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto dx = x[i].tensor.data(), dy = y[i].tensor.data();
    if (!std::equal(dx.begin(), dx.end(), dy.begin(), dy.end())) return false;
  }
  return true;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace

TEST(MseLoss, HandExamples) {
  const Tensor a = Tensor::from_data({2}, {1.0, 1.0});
  const Tensor z = Tensor::zeros({2});
  EXPECT_EQ(mse_loss(a, a).item(), 0.0);
  EXPECT_EQ(mse_loss(a, z).item(), 1.0);
  EXPECT_THROW(mse_loss(a, Tensor::zeros({3})), DimensionError);
}

TEST(MseLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor p = random_tensor({3, 5, 7}, rng, false), t = random_tensor({3, 5, 7}, rng, false);
    std::vector<double> m(p.numel());
    for (double& v : m) v = (rng() % 3 == 0) ? 0.0 : 1.0;
    m[0] = 1.0;
    double s = 0.0, sm = 0.0, k = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double d = p.at(i) - t.at(i);
      s += d * d;
      sm += d * d * m[i];
      k += m[i];
    }
    EXPECT_NEAR(mse_loss(p, t).item(), s / static_cast<double>(p.numel()), 1e-12);
    EXPECT_NEAR(mse_loss(p, t, Tensor::from_data(p.shape(), m)).item(), sm / k, 1e-12);
  }
}

TEST(MseLoss, MaskedGradientAndDegenerateMask) {
  Tensor p = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  const Tensor t = Tensor::zeros({3});
  mse_loss(p, t, Tensor::from_data({3}, {1.0, 0.0, 1.0})).backward();
  EXPECT_DOUBLE_EQ(p.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(p.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(p.grad()[2], 3.0);
  EXPECT_THROW(mse_loss(p, t, Tensor::zeros({3})), DegenerateMaskError);
}

TEST(MseLoss, TokenMaskExpandsRows) {
  const PaddingMask pads[] = {PaddingMask{{false, true}}, PaddingMask{{true, true}}};
  const Tensor m = token_loss_mask({2, 1, 2, 2, 3}, pads);
  // row 0: token 0 masked (6 zeros), token 1 kept (6 ones); row 1 all kept
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(m.at(i), 0.0);
  for (std::size_t i = 6; i < 24; ++i) EXPECT_EQ(m.at(i), 1.0);
}

TEST(Schedule, StepDecayValues) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 0), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(cfg, 4), 5e-4);
  EXPECT_NEAR(lr_at_epoch(cfg, 5), 4e-4, 1e-18);
  EXPECT_NEAR(lr_at_epoch(cfg, 10), 3.2e-4, 1e-18);
  EXPECT_NEAR(lr_at_epoch(cfg, 99), 5e-4 * std::pow(0.8, 19), 1e-18);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.decay_factor = 1.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.patience = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.val_fraction = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(EarlyStopping, PatienceThreeScriptedSequence) {
  EarlyStopping es(3);
  const double seq[] = {1.0, 0.8, 0.9, 0.85, 0.81};
  std::size_t stopped_after = 0;
  for (double v : seq) {
    es.update(v);
    ++stopped_after;
    if (es.should_stop()) break;
  }
  EXPECT_EQ(stopped_after, 5u);
  EXPECT_EQ(es.best_epoch(), 1u);
  EXPECT_EQ(es.best_loss(), 0.8);
}

TEST(EarlyStopping, EqualLossIsNotImprovementAndResetOnImprove) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.update(1.0));
  EXPECT_FALSE(es.update(1.0));
  EXPECT_EQ(es.bad_epochs(), 1u);
  EXPECT_TRUE(es.update(0.5));
  EXPECT_EQ(es.bad_epochs(), 0u);
  EXPECT_FALSE(es.should_stop());
  EXPECT_THROW(EarlyStopping(0), ContractError);
}

TEST(Windows, CountFormula) {
  EXPECT_EQ(window_count(1040, 64, 16, 16), 1u);
  EXPECT_EQ(window_count(1056, 64, 16, 16), 2u);
  EXPECT_EQ(window_count(1039, 64, 16, 16), 0u);
  EXPECT_EQ(window_count(1536, 64, 16, 16), 32u);
  EXPECT_EQ(window_count(1536, 64, 16, 64), 8u);
}

TEST(Windows, MinimalTraceGivesOnePairShiftedByOneToken) {
  const Waveform w = noise_trace(1040, 1);
  const TrainingSet ts = make_training_pairs({{w}});
  ASSERT_EQ(ts.size(), 1u);
  const TrainingPair p = ts.pair(0);
  ASSERT_EQ(p.input.size(), 64u * 16 * 3);
  ASSERT_EQ(p.target.size(), 64u * 16 * 3);
  const ChannelNorm& n = p.norms[0];
  for (std::size_t i = 0; i < p.input.size(); ++i) {
    const std::size_t c = i % 3;
    EXPECT_NEAR(p.input[i], (w.samples[i] - n.offset[c]) / n.scale[c], 1e-12);
    EXPECT_NEAR(p.target[i], (w.samples[i + 48] - n.offset[c]) / n.scale[c], 1e-12);
  }
  // Normalisation comes from the input context alone.
  const TokenSequence ctx = tokenize(
      Waveform{std::vector<double>(w.samples.begin(), w.samples.begin() + 1024 * 3), w.sampling_rate_hz, w.station_id, 0.0},
      16);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(n.scale[c], ctx.norm.scale[c], 1e-12);
}

TEST(Windows, TwoPairsWithStrideAndShortTracesSkipped) {
  const TrainingSet ts = make_training_pairs({{noise_trace(1056, 2)}, {noise_trace(500, 3)}});
  EXPECT_EQ(ts.size(), 2u);
  EXPECT_EQ(ts.skipped_traces(), 1u);
  EXPECT_EQ(ts.windows()[1].offset, 16u);
}

TEST(Windows, ArrayPairsAreStationAligned) {
  std::vector<Waveform> st;
  for (std::size_t s = 0; s < 16; ++s) st.push_back(noise_trace(60, 100 + s, "A" + std::to_string(s)));
  const TrainingSet ts({st}, 6, 4, 4);
  EXPECT_EQ(ts.n_stations(), 16u);
  ASSERT_EQ(ts.size(), window_count(60, 6, 4, 4));
  const std::size_t k = 2;
  const TrainingPair p = ts.pair(k);
  const std::size_t off = ts.windows()[k].offset, per = 6 * 4 * 3;
  ASSERT_EQ(p.input.size(), 16 * per);
  for (std::size_t s = 0; s < 16; ++s) {
    const ChannelNorm& n = p.norms[s];
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t c = i % 3;
      ASSERT_NEAR(p.input[s * per + i], (st[s].samples[off * 3 + i] - n.offset[c]) / n.scale[c], 1e-12);
    }
  }
}

TEST(Windows, MismatchedStationCountsRejected) {
  EXPECT_THROW(TrainingSet({{noise_trace(60, 1)}, {noise_trace(60, 2), noise_trace(60, 3)}}, 6, 4, 4),
               ContractError);
}

TEST(Split, ByEventDisjointAndDeterministic) {
  const auto [tr, va] = split_events(100, 0.1, 5);
  EXPECT_EQ(tr.size(), 90u);
  EXPECT_EQ(va.size(), 10u);
  std::vector<bool> seen(100, false);
  for (auto i : tr) seen[i] = true;
  for (auto i : va) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
  EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 100);
  EXPECT_EQ(split_events(100, 0.1, 5), split_events(100, 0.1, 5));
  EXPECT_NE(split_events(100, 0.1, 5).second, split_events(100, 0.1, 6).second);
  EXPECT_EQ(split_events(3, 0.01, 1).second.size(), 1u);
}

TEST(Adam, ZeroLearningRateLeavesParametersBitwise) {
  SingleStationModel m(tiny_model());
  SingleStationModel ref(tiny_model());
  std::mt19937_64 rng(1);
  for (auto& p : m.params().entries()) {
    for (double& g : p.tensor.mutable_grad()) g = std::normal_distribution<double>()(rng);
  }
  AdamState st;
  adam_step(m.params(), st, 0.0);
  EXPECT_TRUE(same_params(m, ref));
}

TEST(Adam, FirstStepMatchesClosedForm) {
  ParameterStore ps;
  Tensor w = ps.add("w", Tensor::from_data({3}, {1.0, -2.0, 0.5}));
  const double g[] = {0.3, -4.0, 1e-3};
  for (int i = 0; i < 3; ++i) w.mutable_grad()[static_cast<std::size_t>(i)] = g[i];
  AdamState st;
  adam_step(ps, st, 0.1);
  // m_hat = g, v_hat = g^2 on the first step.
  const double start[] = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(w.at(static_cast<std::size_t>(i)), start[i] - 0.1 * g[i] / (std::abs(g[i]) + 1e-8), 1e-12);
  }
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, NonFiniteGradientRejectedBeforeUpdate) {
  ParameterStore ps;
  Tensor a = ps.add("a", Tensor::from_data({1}, {1.0}));
  Tensor b = ps.add("b", Tensor::from_data({1}, {2.0}));
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  EXPECT_THROW(adam_step(ps, st, 0.1), NonFiniteError);
  EXPECT_EQ(a.at(0), 1.0);
}

TEST(ClipGradNorm, RescalesToMaxNorm) {
  ParameterStore ps;
  Tensor a = ps.add("a", Tensor::from_data({2}, {0.0, 0.0}));
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(ps.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(ps.grad_norm(), 1.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(ps.clip_grad_norm(2.0), 1.0);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-12);
}

TEST(Fit, PatienceOneStopsAtSecondEpochWithFirstAsBest) {
  SingleStationModel m(tiny_model());
  const TrainingSet train = tiny_set(4, 1), val = tiny_set(2, 50);
  TrainConfig cfg = tiny_train();
  cfg.patience = 1;
  cfg.max_epochs = 10;
  const auto dir = temp_dir("p1");
  cfg.checkpoint_path = dir / "best.sgpt";
  cfg.report_path = dir / "report.jsonl";
  std::unique_ptr<SeismoModel> after_first;
  FitHooks hooks;
  hooks.validation = [&](std::size_t epoch, const SeismoModel& model) {
    if (epoch == 0) {
      std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
      write_checkpoint(ss, model);
      after_first = read_checkpoint(ss);
    }
    return epoch == 0 ? 1.0 : 2.0;
  };
  const TrainReport r = fit(m, train, val, cfg, hooks);
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_EQ(r.stop_epoch + 1, 2u);
  EXPECT_EQ(r.best_epoch + 1, 1u);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.best_val_loss, 1.0);
  ASSERT_TRUE(after_first);
  EXPECT_TRUE(same_params(m, *after_first));
  EXPECT_TRUE(same_params(*load_checkpoint(cfg.checkpoint_path), *after_first));
  const auto rows = read_jsonl(cfg.report_path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["epoch"], 1);
  EXPECT_EQ(rows[1]["epoch"], 2);
  EXPECT_EQ(rows[0]["improved"], true);
  EXPECT_EQ(rows[1]["improved"], false);
}

TEST(Fit, PatienceThreeNonImprovingEpochs) {
  SingleStationModel m(tiny_model());
  TrainConfig cfg = tiny_train();
  cfg.max_epochs = 20;
  cfg.patience = 3;
  const double script[] = {1.0, 0.7, 0.9, 0.8, 0.75, 0.1, 0.2};
  FitHooks hooks;
  hooks.validation = [&](std::size_t e, const SeismoModel&) { return script[e]; };
  const TrainReport r = fit(m, tiny_set(4, 1), tiny_set(2, 50), cfg, hooks);
  EXPECT_EQ(r.epochs.size(), 5u);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_TRUE(r.stopped_early);
}

TEST(Fit, MaxEpochsWithoutEarlyStopping) {
  SingleStationModel m(tiny_model());
  TrainConfig cfg = tiny_train();
  cfg.max_epochs = 4;
  cfg.early_stopping = false;
  cfg.patience = 1;
  FitHooks hooks;
  hooks.validation = [](std::size_t e, const SeismoModel&) { return static_cast<double>(e); };
  const TrainReport r = fit(m, tiny_set(4, 1), tiny_set(2, 50), cfg, hooks);
  EXPECT_EQ(r.epochs.size(), 4u);
  EXPECT_FALSE(r.stopped_early);
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Fit, ReportLrColumnFollowsScheduleAndBestIsMinimal) {
  SingleStationModel m(tiny_model());
  TrainConfig cfg = tiny_train();
  cfg.max_epochs = 7;
  cfg.decay_every_epochs = 2;
  cfg.early_stopping = false;
  cfg.report_path = temp_dir("lr") / "r.jsonl";
  const TrainReport r = fit(m, tiny_set(4, 1), tiny_set(2, 50), cfg);
  ASSERT_EQ(r.epochs.size(), 7u);
  double min_val = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < 7; ++e) {
    EXPECT_EQ(r.epochs[e].lr, lr_at_epoch(cfg, e));
    EXPECT_TRUE(std::isfinite(r.epochs[e].train_loss));
    EXPECT_GE(r.epochs[e].train_loss, 0.0);
    min_val = std::min(min_val, r.epochs[e].val_loss);
  }
  EXPECT_EQ(r.best_val_loss, min_val);
  EXPECT_EQ(r.epochs[r.best_epoch].val_loss, min_val);
  // The restored model reproduces the best validation loss.
  EXPECT_EQ(evaluate_loss(m, tiny_set(2, 50), cfg.batch_size), min_val);
  const auto rows = read_jsonl(cfg.report_path);
  ASSERT_EQ(rows.size(), 7u);
  for (std::size_t e = 0; e < 7; ++e) EXPECT_EQ(rows[e]["lr"].get<double>(), lr_at_epoch(cfg, e));
}

TEST(Fit, SeededRunsAreIdentical) {
  auto run = [] {
    SingleStationModel m(tiny_model());
    TrainConfig cfg = tiny_train();
    cfg.early_stopping = false;
    TrainReport r = fit(m, tiny_set(5, 1), tiny_set(2, 50), cfg);
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, m);
    return std::pair(r, os.str());
  };
  const auto [ra, ca] = run();
  const auto [rb, cb] = run();
  ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    EXPECT_EQ(ra.epochs[e].train_loss, rb.epochs[e].train_loss);
    EXPECT_EQ(ra.epochs[e].val_loss, rb.epochs[e].val_loss);
    EXPECT_EQ(ra.epochs[e].lr, rb.epochs[e].lr);
  }
  EXPECT_EQ(ra.best_epoch, rb.best_epoch);
  EXPECT_EQ(ca, cb);
}

TEST(Fit, TrainingLossDecreasesOnSmallSet) {
  auto c = tiny_model();
  c.dropout = 0.0;
  SingleStationModel m(c);
  TrainConfig cfg = tiny_train();
  cfg.lr0 = 3e-3;
  cfg.max_epochs = 30;
  cfg.early_stopping = false;
  cfg.padding_masks = false;
  const TrainReport r = fit(m, tiny_set(2, 1), tiny_set(1, 50), cfg);
  EXPECT_LT(r.epochs.back().train_loss, 0.7 * r.epochs.front().train_loss);
}

TEST(Fit, NonFiniteLossAbortsWithReplayRecord) {
  SingleStationModel m(tiny_model());
  m.params().find("head.bias")->tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = tiny_train();
  const auto dir = temp_dir("abort");
  cfg.report_path = dir / "r.jsonl";
  try {
    fit(m, tiny_set(4, 1), tiny_set(2, 50), cfg);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.batch(), 0u);
  }
  const auto path = dir / "r.jsonl.abort.json";
  ASSERT_TRUE(std::filesystem::exists(path));
  std::ifstream is(path);
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j["epoch"], 0);
  EXPECT_EQ(j["batch"], 0);
  EXPECT_EQ(j["seed"], 17);
}

TEST(Fit, EmptySetsRejected) {
  SingleStationModel m(tiny_model());
  EXPECT_THROW(fit(m, TrainingSet{}, tiny_set(1, 2), tiny_train()), ContractError);
}
