#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/errors.hpp"
#include "seismogpt/models.hpp"
#include "seismogpt/waveform.hpp"

namespace seismo {

struct TrainConfig {
  double lr0 = 5e-4;
  double decay_factor = 0.8;
  std::size_t decay_every_epochs = 5;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  bool early_stopping = true;
  std::size_t batch_size = 32;  // 8 is the array default
  std::size_t min_keep_tokens = 8;
  bool padding_masks = true;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  // Caps the windows drawn per epoch (0 = all), resampled every epoch.
  std::size_t max_windows_per_epoch = 0;
  std::filesystem::path checkpoint_path;  // best-validation checkpoint; empty = keep in memory only
  std::filesystem::path report_path;      // per-epoch JSON lines; empty = none

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 0-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stop_epoch = 0;  // last completed epoch (0-based)
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  std::filesystem::path best_checkpoint;
};

void write_report(const TrainReport& report, const std::filesystem::path& path);

// Patience counter over a validation-loss sequence. Any strictly lower loss
// counts as an improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Records one epoch's validation loss; returns true when it improved.
  bool update(double val_loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t bad_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// Mean of squared differences. With `mask` (same shape, entries 0 or 1) only
// positions where mask == 1 count; an all-zero mask throws
// DegenerateMaskError.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor mse_loss(const Tensor& pred, const Tensor& target, const Tensor& mask);

// Expands per-row token masks to an element mask over [B, S, N, L, 3].
Tensor token_loss_mask(const Shape& shape, std::span<const PaddingMask> pads);

// One training example: every station of an event over the same samples.
// input/target are normalised [S, N, L, 3]; target is input shifted by one
// token. Each station is normalised by its own input-context statistics.
struct TrainingPair {
  std::vector<double> input;
  std::vector<double> target;
  std::vector<ChannelNorm> norms;
  std::size_t n_stations = 0;
};

struct WindowRef {
  std::size_t event = 0;
  std::size_t offset = 0;  // first sample
};

// Sliding windows of (context_tokens + 1) * token_len samples over every
// event. Windows are materialised on demand.
class TrainingSet {
 public:
  TrainingSet() = default;
  TrainingSet(std::vector<std::vector<Waveform>> events, std::size_t context_tokens, std::size_t token_len,
              std::size_t stride_samples);

  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  std::size_t n_stations() const { return n_stations_; }
  std::size_t context_tokens() const { return context_tokens_; }
  std::size_t token_len() const { return token_len_; }
  std::size_t skipped_traces() const { return skipped_; }
  std::size_t n_events() const { return events_.size(); }
  const std::vector<WindowRef>& windows() const { return windows_; }
  const std::vector<std::vector<Waveform>>& events() const { return events_; }

  TrainingPair pair(std::size_t i) const;

 private:
  std::vector<std::vector<Waveform>> events_;
  std::vector<WindowRef> windows_;
  std::size_t context_tokens_ = 0;
  std::size_t token_len_ = 0;
  std::size_t n_stations_ = 0;
  std::size_t skipped_ = 0;
};

// Number of windows a trace of T samples yields: (T - (N + 1) L) / stride + 1,
// or 0 when T < (N + 1) L.
std::size_t window_count(std::size_t n_samples, std::size_t context_tokens, std::size_t token_len,
                         std::size_t stride_samples);

TrainingSet make_training_pairs(std::vector<std::vector<Waveform>> events, std::size_t context_tokens = 64,
                                std::size_t token_len = 16, std::size_t stride_samples = 16);

// Deterministic split by event: returns (train, validation) event indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_events(std::size_t n_events, double val_fraction,
                                                                           std::uint64_t seed);

class TrainingAborted : public NonFiniteError {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t batch)
      : NonFiniteError(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct FitHooks {
  // Replaces the computed validation loss (scripted schedules, custom metrics).
  std::function<double(std::size_t epoch, const SeismoModel& model)> validation;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Mean masked-free next-token MSE over `data` in inference mode.
double evaluate_loss(const SeismoModel& model, const TrainingSet& data, std::size_t batch_size);

// Trains in place. On return the model holds the best-validation parameters.
// A non-finite loss throws TrainingAborted after writing
// `<report_path>.abort.json` (when a report path is set).
TrainReport fit(SeismoModel& model, const TrainingSet& train, const TrainingSet& val, const TrainConfig& cfg,
                const FitHooks& hooks = {});

}  // namespace seismo
