#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/models.hpp"
#include "seismogpt/synthdata.hpp"
#include "seismogpt/waveform.hpp"

namespace seismo {

struct ForecastResult {
  // One entry per station: `steps` tokens in the context's normalised domain.
  std::vector<TokenSequence> predicted;
  // The same tokens mapped back through each station's context normalisation.
  std::vector<Waveform> predicted_waveforms;
  // Filled by score_forecast; averaged over stations and components.
  std::vector<double> per_step_mse;
  std::vector<double> per_step_correlation;
  std::size_t context_tokens = 0;  // tokens actually used as context
  std::size_t steps = 0;
  double horizon_seconds = 0.0;  // steps * L / sampling rate
};

// Autoregressive decoding: each step runs the model on the current context,
// appends the final-position prediction, and drops the oldest token once the
// context exceeds the model's window. Contexts longer than the window are
// truncated to their trailing tokens with a warning.
ForecastResult forecast(const SeismoModel& model, const TokenSequence& context, std::size_t steps);
// Array form: one context per station, all of equal length and sampling.
ForecastResult forecast(const SeismoModel& model, std::span<const TokenSequence> contexts, std::size_t steps);

// Fills per_step_mse / per_step_correlation against normalised truth tokens
// (one sequence per station, at least `steps` tokens each).
void score_forecast(ForecastResult& result, std::span<const TokenSequence> truth);

// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

enum class Predictor {
  Model,       // autoregressive model rollout
  Zero,        // constant zero in the normalised domain
  RepeatLast,  // last context token repeated
  Oracle,      // ground truth fed back
};
std::string to_string(Predictor p);

struct EvalOptions {
  std::size_t context_tokens = 40;
  std::size_t steps = 24;
  std::size_t offset_tokens = 0;  // first context token within each trace
  Predictor predictor = Predictor::Model;
  bool normalized_domain = true;  // false: metrics on physical amplitudes
  std::uint64_t seed = 0;
};

// Per-step metrics. mse/correlation are [station][component][step],
// averaged over events (correlation skips NaN entries).
struct HorizonMetrics {
  std::vector<std::string> station_ids;
  std::size_t steps = 0;
  std::size_t token_len = 0;
  double sampling_rate_hz = 1.0;
  std::size_t n_events = 0;
  std::vector<std::vector<std::vector<double>>> mse;
  std::vector<std::vector<std::vector<double>>> correlation;
  // [event][step], averaged over stations and components.
  std::vector<std::vector<double>> event_step_mse;

  double seconds_ahead(std::size_t step) const {
    return static_cast<double>((step + 1) * token_len) / sampling_rate_hz;
  }
  // Mean over stations/components/events of steps [first, last).
  double mean_mse(std::size_t first, std::size_t last) const;
  std::vector<double> step_mse() const;
};

// Runs `opt.predictor` over every event of `events` (one station list per
// event). Events are processed in parallel; the result does not depend on
// the thread count.
HorizonMetrics evaluate_horizon(const SeismoModel* model, std::span<const std::vector<Waveform>> events,
                                const EvalOptions& opt);
HorizonMetrics evaluate_horizon(const SeismoModel* model, const Dataset& dataset, const EvalOptions& opt);

struct Comparison {
  HorizonMetrics single;
  HorizonMetrics array;
  double single_late_mse = 0.0;  // last quartile of steps
  double array_late_mse = 0.0;
};

// The single model is run on each station independently, the array model on
// all stations jointly.
Comparison compare_single_vs_array(const SeismoModel& single_model, const SeismoModel& array_model,
                                   const Dataset& array_dataset, const EvalOptions& opt);

// station,component,step,seconds_ahead,mse,correlation
void write_metrics_csv(std::ostream& os, const HorizonMetrics& m);
// model,station,component,step,seconds_ahead,mse,correlation
void write_comparison_csv(std::ostream& os, const Comparison& c);
// time,truth_Z,truth_N,truth_E[,pred_Z,pred_N,pred_E]; prediction columns only
// when `prediction` has samples, left empty over the context.
void write_overlay_csv(std::ostream& os, const Waveform& truth, std::size_t context_samples,
                       const Waveform* prediction);

}  // namespace seismo
