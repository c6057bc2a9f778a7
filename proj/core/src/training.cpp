#include "seismogpt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "seismogpt/checkpoint.hpp"
#include "seismogpt/log.hpp"
#include "seismogpt/ops.hpp"
#include "seismogpt/optim.hpp"

namespace seismo {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

enum StreamTag : std::uint64_t { kShuffleTag = 1, kMaskTag = 2, kDropoutTag = 3, kSplitTag = 4 };

struct Batch {
  Tensor input;   // [B, S, N, L, 3]
  Tensor target;  // same
  std::size_t size = 0;
};

Batch assemble(const TrainingSet& data, std::span<const std::size_t> idx) {
  const std::size_t s = data.n_stations(), n = data.context_tokens(), l = data.token_len();
  const std::size_t per = s * n * l * kComponents;
  std::vector<double> in(idx.size() * per), tg(idx.size() * per);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    TrainingPair p = data.pair(idx[b]);
    std::copy(p.input.begin(), p.input.end(), in.begin() + static_cast<std::ptrdiff_t>(b * per));
    std::copy(p.target.begin(), p.target.end(), tg.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  Shape shape{idx.size(), s, n, l, kComponents};
  return {Tensor::from_data(shape, std::move(in)), Tensor::from_data(shape, std::move(tg)), idx.size()};
}

std::vector<std::vector<double>> snapshot(const SeismoModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto& p : model.params().entries()) {
    const auto d = p.tensor.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

void restore(SeismoModel& model, const std::vector<std::vector<double>>& values) {
  auto& entries = model.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto dst = entries[i].tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

void write_abort_record(const TrainConfig& cfg, std::size_t epoch, std::size_t batch, double loss,
                        const std::string& reason) {
  if (cfg.report_path.empty()) return;
  auto path = cfg.report_path;
  path += ".abort.json";
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["batch"] = batch;
  j["seed"] = cfg.seed;
  j["loss"] = std::isfinite(loss) ? nlohmann::ordered_json(loss) : nlohmann::ordered_json(std::to_string(loss));
  j["reason"] = reason;
  std::ofstream os(path);
  if (!os) throw IoError(path.string(), "cannot write abort record");
  os << j.dump(2) << '\n';
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0)) throw ContractError("lr0 must be non-negative");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ContractError("decay_factor must lie in (0, 1)");
  if (decay_every_epochs == 0) throw ContractError("decay_every_epochs must be positive");
  if (patience == 0) throw ContractError("patience must be at least 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ContractError("val_fraction must lie in (0, 1)");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (min_keep_tokens == 0) throw ContractError("min_keep_tokens must be positive");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every_epochs));
}

void write_report(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError(path.string(), "cannot write training report");
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch + 1;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["lr"] = e.lr;
    j["improved"] = e.improved;
    j["seconds"] = e.seconds;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError(path.string(), "write failed");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ContractError("patience must be at least 1");
}

bool EarlyStopping::update(double val_loss) {
  const std::size_t epoch = seen_++;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss shapes " + shape_string(pred.shape()) + " and " + shape_string(target.shape()));
  }
  const Tensor d = sub(pred, target);
  return mean(mul(d, d));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  if (pred.shape() != target.shape() || mask.shape() != pred.shape()) {
    throw DimensionError("mse_loss shapes " + shape_string(pred.shape()) + ", " + shape_string(target.shape()) +
                         " and mask " + shape_string(mask.shape()));
  }
  double kept = 0.0;
  for (double m : mask.data()) kept += m;
  if (!(kept > 0.0)) throw DegenerateMaskError("mse_loss: every position is masked");
  const Tensor d = sub(pred, target);
  return scale(sum(mul(mul(d, d), mask)), 1.0 / kept);
}

Tensor token_loss_mask(const Shape& shape, std::span<const PaddingMask> pads) {
  if (shape.size() != 5) throw DimensionError("token_loss_mask expects [B, S, N, L, 3]");
  const std::size_t b = shape[0], s = shape[1], n = shape[2], inner = shape[3] * shape[4];
  if (pads.size() != b) throw DimensionError("one padding mask per batch row expected");
  std::vector<double> m(shape_numel(shape), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (pads[i].size() != n) throw DimensionError("padding mask length does not match token count");
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t t = 0; t < n; ++t) {
        if (!pads[i].keep[t]) continue;
        const std::size_t base = ((i * s + j) * n + t) * inner;
        std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(base), inner, 1.0);
      }
    }
  }
  return Tensor::from_data(shape, std::move(m));
}

std::size_t window_count(std::size_t n_samples, std::size_t context_tokens, std::size_t token_len,
                         std::size_t stride_samples) {
  if (stride_samples == 0) throw ContractError("window stride must be positive");
  const std::size_t span = (context_tokens + 1) * token_len;
  if (n_samples < span) return 0;
  return (n_samples - span) / stride_samples + 1;
}

TrainingSet::TrainingSet(std::vector<std::vector<Waveform>> events, std::size_t context_tokens,
                         std::size_t token_len, std::size_t stride_samples)
    : events_(std::move(events)), context_tokens_(context_tokens), token_len_(token_len) {
  if (context_tokens == 0 || token_len == 0) throw ContractError("context and token length must be positive");
  for (std::size_t e = 0; e < events_.size(); ++e) {
    const auto& stations = events_[e];
    if (stations.empty()) throw ContractError("event " + std::to_string(e) + " has no stations");
    if (n_stations_ == 0) n_stations_ = stations.size();
    if (stations.size() != n_stations_) {
      throw ContractError("event " + std::to_string(e) + " has " + std::to_string(stations.size()) +
                          " stations, expected " + std::to_string(n_stations_));
    }
    std::size_t t = stations.front().length();
    for (const auto& w : stations) {
      w.validate();
      if (w.length() != t) throw ContractError("stations of event " + std::to_string(e) + " differ in length");
    }
    const std::size_t count = window_count(t, context_tokens, token_len, stride_samples);
    if (count == 0) {
      ++skipped_;
      continue;
    }
    for (std::size_t k = 0; k < count; ++k) windows_.push_back({e, k * stride_samples});
  }
  if (skipped_ > 0) {
    log_warn("skipped " + std::to_string(skipped_) + " trace(s) shorter than one " +
             std::to_string((context_tokens + 1) * token_len) + "-sample window");
  }
}

TrainingPair TrainingSet::pair(std::size_t i) const {
  const WindowRef& w = windows_.at(i);
  const std::size_t n = context_tokens_, l = token_len_;
  const std::size_t ctx_len = n * l * kComponents;
  TrainingPair p;
  p.n_stations = n_stations_;
  p.input.resize(n_stations_ * ctx_len);
  p.target.resize(n_stations_ * ctx_len);
  for (std::size_t s = 0; s < n_stations_; ++s) {
    const auto& samples = events_[w.event][s].samples;
    const double* base = samples.data() + w.offset * kComponents;
    const ChannelNorm norm = ChannelNorm::fit(std::span<const double>(base, ctx_len));
    for (std::size_t k = 0; k < ctx_len; ++k) {
      const std::size_t c = k % kComponents;
      p.input[s * ctx_len + k] = (base[k] - norm.offset[c]) / norm.scale[c];
      p.target[s * ctx_len + k] = (base[k + l * kComponents] - norm.offset[c]) / norm.scale[c];
    }
    p.norms.push_back(norm);
  }
  return p;
}

TrainingSet make_training_pairs(std::vector<std::vector<Waveform>> events, std::size_t context_tokens,
                                std::size_t token_len, std::size_t stride_samples) {
  return TrainingSet(std::move(events), context_tokens, token_len, stride_samples);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_events(std::size_t n_events, double val_fraction,
                                                                           std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ContractError("val_fraction must lie in (0, 1)");
  if (n_events < 2) throw ContractError("splitting needs at least two events");
  std::vector<std::size_t> order(n_events);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(seed, kSplitTag, 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n_events)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_events - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(val)};
}

double evaluate_loss(const SeismoModel& model, const TrainingSet& data, std::size_t batch_size) {
  if (data.empty()) throw ContractError("evaluate_loss on an empty set");
  NoGradGuard guard;
  ForwardContext ctx{false, nullptr};
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    Batch b = assemble(data, std::span(idx).subspan(start, end - start));
    const Tensor pred = model.predict_tokens(b.input, {}, ctx);
    total += mse_loss(pred, b.target).item() * static_cast<double>(b.size);
  }
  return total / static_cast<double>(data.size());
}

TrainReport fit(SeismoModel& model, const TrainingSet& train, const TrainingSet& val, const TrainConfig& cfg,
                const FitHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw ContractError("fit: training set has no windows");
  if (val.empty() && !hooks.validation) throw ContractError("fit: validation set has no windows");
  const ModelConfig& mc = model.config();
  if (train.context_tokens() != mc.context_tokens || train.token_len() != mc.token_len) {
    throw ContractError("training windows do not match the model's context/token length");
  }
  if (train.n_stations() != mc.n_stations && mc.kind == ModelKind::Array) {
    throw ContractError("training set has " + std::to_string(train.n_stations()) + " stations, model expects " +
                        std::to_string(mc.n_stations));
  }
  const std::size_t min_keep = std::min(cfg.min_keep_tokens, mc.context_tokens);

  TrainReport report;
  report.best_checkpoint = cfg.checkpoint_path;
  EarlyStopping stopper(cfg.patience);
  AdamState adam;
  auto dropout_rng = stream(cfg.seed, kDropoutTag, 0);
  std::vector<std::vector<double>> best = snapshot(model);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg, epoch);
    auto shuffle_rng = stream(cfg.seed, kShuffleTag, epoch);
    auto mask_rng = stream(cfg.seed, kMaskTag, epoch);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    if (cfg.max_windows_per_epoch > 0 && order.size() > cfg.max_windows_per_epoch) {
      order.resize(cfg.max_windows_per_epoch);
    }

    double loss_sum = 0.0;
    double weight_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Batch b = assemble(train, std::span(order).subspan(start, end - start));
      std::vector<PaddingMask> pads;
      pads.reserve(b.size);
      for (std::size_t i = 0; i < b.size; ++i) {
        pads.push_back(cfg.padding_masks ? random_padding_mask(mc.context_tokens, min_keep, mask_rng)
                                         : PaddingMask::all(mc.context_tokens));
      }
      ForwardContext ctx{true, &dropout_rng};
      const Tensor pred = model.predict_tokens(b.input, pads, ctx);
      const Tensor mask = token_loss_mask(b.input.shape(), pads);
      Tensor loss = mse_loss(pred, b.target, mask);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        write_abort_record(cfg, epoch, batch_index, value, "non-finite loss");
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batch_index),
                              epoch, batch_index);
      }
      model.params().zero_grad();
      loss.backward();
      try {
        if (cfg.clip_norm > 0.0) model.params().clip_grad_norm(cfg.clip_norm);
        adam_step(model.params(), adam, lr);
      } catch (const NonFiniteError& e) {
        write_abort_record(cfg, epoch, batch_index, value, e.what());
        throw TrainingAborted(std::string("non-finite gradient at epoch ") + std::to_string(epoch + 1) +
                                  ", batch " + std::to_string(batch_index) + ": " + e.what(),
                              epoch, batch_index);
      }
      double kept = 0.0;
      for (const auto& p : pads) kept += static_cast<double>(p.kept());
      loss_sum += value * kept;
      weight_sum += kept;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / weight_sum;
    rec.val_loss = hooks.validation ? hooks.validation(epoch, model) : evaluate_loss(model, val, cfg.batch_size);
    rec.improved = stopper.update(rec.val_loss);
    if (rec.improved) {
      best = snapshot(model);
      report.best_epoch = epoch;
      report.best_val_loss = rec.val_loss;
      if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    report.stop_epoch = epoch;
    if (!cfg.report_path.empty()) write_report(report, cfg.report_path);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (cfg.early_stopping && stopper.should_stop()) {
      report.stopped_early = true;
      break;
    }
  }
  restore(model, best);
  return report;
}

}  // namespace seismo
