#include "seismogpt/forecasting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include "seismogpt/errors.hpp"
#include "seismogpt/log.hpp"
#include "seismogpt/ops.hpp"
#include "seismogpt/parallel.hpp"

namespace seismo {

namespace {

constexpr std::array<const char*, kComponents> kComponentNames{"Z", "N", "E"};

Waveform slice(const Waveform& w, std::size_t first, std::size_t count) {
  Waveform out;
  out.sampling_rate_hz = w.sampling_rate_hz;
  out.station_id = w.station_id;
  out.start_time_s = w.start_time_s + static_cast<double>(first) / w.sampling_rate_hz;
  const auto b = w.samples.begin() + static_cast<std::ptrdiff_t>(first * kComponents);
  out.samples.assign(b, b + static_cast<std::ptrdiff_t>(count * kComponents));
  return out;
}

TokenSequence make_sequence(const TokenSequence& like, std::vector<double> tokens, double start_time_s) {
  TokenSequence ts;
  ts.tokens = std::move(tokens);
  ts.token_len = like.token_len;
  ts.norm = like.norm;
  ts.sampling_rate_hz = like.sampling_rate_hz;
  ts.station_id = like.station_id;
  ts.start_time_s = start_time_s;
  return ts;
}

ForecastResult assemble_result(std::span<const TokenSequence> contexts, std::vector<std::vector<double>> tokens,
                               std::size_t used, std::size_t steps) {
  ForecastResult r;
  r.context_tokens = used;
  r.steps = steps;
  const TokenSequence& c0 = contexts.front();
  r.horizon_seconds = static_cast<double>(steps * c0.token_len) / c0.sampling_rate_hz;
  for (std::size_t s = 0; s < contexts.size(); ++s) {
    const auto& c = contexts[s];
    const double t0 = c.start_time_s + static_cast<double>(c.n_tokens() * c.token_len) / c.sampling_rate_hz;
    r.predicted.push_back(make_sequence(c, std::move(tokens[s]), t0));
    r.predicted_waveforms.push_back(detokenize(r.predicted.back()));
  }
  return r;
}

struct EventMetrics {
  // [station][component][step]
  std::vector<std::vector<std::vector<double>>> mse;
  std::vector<std::vector<std::vector<double>>> corr;
};

// Normalised context and truth tokens of one station.
struct StationWindow {
  TokenSequence context;
  TokenSequence truth;
};

StationWindow cut_window(const Waveform& w, const EvalOptions& opt, std::size_t token_len) {
  const std::size_t first = opt.offset_tokens * token_len;
  const std::size_t ctx_len = opt.context_tokens * token_len;
  const std::size_t need = first + (opt.context_tokens + opt.steps) * token_len;
  if (w.length() < need) {
    throw ContractError("trace " + w.station_id + " has " + std::to_string(w.length()) + " samples, evaluation needs " +
                        std::to_string(need));
  }
  const Waveform ctx = slice(w, first, ctx_len);
  StationWindow sw;
  sw.context = tokenize(ctx, token_len);
  if (opt.steps > 0) sw.truth = tokenize(slice(w, first + ctx_len, opt.steps * token_len), token_len, sw.context.norm);
  return sw;
}

EventMetrics evaluate_event(const SeismoModel* model, const std::vector<Waveform>& stations, const EvalOptions& opt,
                            std::size_t token_len) {
  std::vector<TokenSequence> contexts, truths;
  for (const auto& w : stations) {
    StationWindow sw = cut_window(w, opt, token_len);
    contexts.push_back(std::move(sw.context));
    truths.push_back(std::move(sw.truth));
  }
  const std::size_t n_st = stations.size(), l = token_len, tok = l * kComponents;
  std::vector<std::vector<double>> pred(n_st);
  switch (opt.predictor) {
    case Predictor::Model: {
      ForecastResult r = forecast(*model, contexts, opt.steps);
      for (std::size_t s = 0; s < n_st; ++s) pred[s] = std::move(r.predicted[s].tokens);
      break;
    }
    case Predictor::Zero:
      for (auto& p : pred) p.assign(opt.steps * tok, 0.0);
      break;
    case Predictor::RepeatLast:
      for (std::size_t s = 0; s < n_st; ++s) {
        const auto last = contexts[s].token(contexts[s].n_tokens() - 1);
        for (std::size_t k = 0; k < opt.steps; ++k) pred[s].insert(pred[s].end(), last.begin(), last.end());
      }
      break;
    case Predictor::Oracle:
      for (std::size_t s = 0; s < n_st; ++s) pred[s] = truths[s].tokens;
      break;
  }

  EventMetrics m;
  m.mse.assign(n_st, std::vector<std::vector<double>>(kComponents, std::vector<double>(opt.steps, 0.0)));
  m.corr = m.mse;
  std::vector<double> a(l), b(l);
  for (std::size_t s = 0; s < n_st; ++s) {
    const ChannelNorm& norm = contexts[s].norm;
    for (std::size_t k = 0; k < opt.steps; ++k) {
      for (std::size_t c = 0; c < kComponents; ++c) {
        const double unit = opt.normalized_domain ? 1.0 : norm.scale[c];
        double se = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
          a[j] = pred[s][k * tok + j * kComponents + c];
          b[j] = truths[s].tokens[k * tok + j * kComponents + c];
          const double d = (a[j] - b[j]) * unit;
          se += d * d;
        }
        m.mse[s][c][k] = se / static_cast<double>(l);
        m.corr[s][c][k] = pearson(a, b);
      }
    }
  }
  return m;
}

HorizonMetrics evaluate_impl(const SeismoModel* model, std::size_t n_events,
                             const std::function<const std::vector<Waveform>&(std::size_t)>& event,
                             const EvalOptions& opt) {
  if (n_events == 0) throw ContractError("evaluate_horizon needs at least one event");
  if (opt.context_tokens == 0) throw ContractError("evaluation context must hold at least one token");
  if (opt.predictor == Predictor::Model && model == nullptr) throw ContractError("model predictor needs a model");
  const std::size_t token_len = model ? model->config().token_len : 16;
  const auto& first = event(0);
  if (first.empty()) throw ContractError("event without stations");
  if (model && model->kind() == ModelKind::Array && first.size() != model->config().n_stations) {
    throw ContractError("dataset has " + std::to_string(first.size()) + " stations per event, array model expects " +
                        std::to_string(model->config().n_stations));
  }

  std::vector<EventMetrics> per_event(n_events);
  parallel_for(n_events, [&](std::size_t e) {
    const auto& stations = event(e);
    if (stations.size() != first.size()) throw ContractError("events differ in station count");
    per_event[e] = evaluate_event(model, stations, opt, token_len);
  });

  HorizonMetrics h;
  for (const auto& w : first) h.station_ids.push_back(w.station_id);
  h.steps = opt.steps;
  h.token_len = token_len;
  h.sampling_rate_hz = first.front().sampling_rate_hz;
  h.n_events = n_events;
  const std::size_t n_st = first.size();
  h.mse.assign(n_st, std::vector<std::vector<double>>(kComponents, std::vector<double>(opt.steps, 0.0)));
  h.correlation = h.mse;
  std::vector<std::vector<std::vector<std::size_t>>> corr_n(
      n_st, std::vector<std::vector<std::size_t>>(kComponents, std::vector<std::size_t>(opt.steps, 0)));
  for (const auto& em : per_event) {
    std::vector<double> ev(opt.steps, 0.0);
    for (std::size_t s = 0; s < n_st; ++s) {
      for (std::size_t c = 0; c < kComponents; ++c) {
        for (std::size_t k = 0; k < opt.steps; ++k) {
          h.mse[s][c][k] += em.mse[s][c][k];
          ev[k] += em.mse[s][c][k];
          if (!std::isnan(em.corr[s][c][k])) {
            h.correlation[s][c][k] += em.corr[s][c][k];
            ++corr_n[s][c][k];
          }
        }
      }
    }
    for (double& v : ev) v /= static_cast<double>(n_st * kComponents);
    h.event_step_mse.push_back(std::move(ev));
  }
  for (std::size_t s = 0; s < n_st; ++s) {
    for (std::size_t c = 0; c < kComponents; ++c) {
      for (std::size_t k = 0; k < opt.steps; ++k) {
        h.mse[s][c][k] /= static_cast<double>(n_events);
        const std::size_t n = corr_n[s][c][k];
        h.correlation[s][c][k] = n ? h.correlation[s][c][k] / static_cast<double>(n)
                                   : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return h;
}

void write_metric_rows(std::ostream& os, const HorizonMetrics& m, const std::string& prefix) {
  for (std::size_t s = 0; s < m.station_ids.size(); ++s) {
    for (std::size_t c = 0; c < kComponents; ++c) {
      for (std::size_t k = 0; k < m.steps; ++k) {
        os << prefix << m.station_ids[s] << ',' << kComponentNames[c] << ',' << (k + 1) << ',' << m.seconds_ahead(k)
           << ',' << m.mse[s][c][k] << ',' << m.correlation[s][c][k] << '\n';
      }
    }
  }
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  if (a.empty()) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

ForecastResult forecast(const SeismoModel& model, const TokenSequence& context, std::size_t steps) {
  return forecast(model, std::span<const TokenSequence>(&context, 1), steps);
}

ForecastResult forecast(const SeismoModel& model, std::span<const TokenSequence> contexts, std::size_t steps) {
  if (contexts.empty()) throw ContractError("forecast needs at least one station context");
  const ModelConfig& cfg = model.config();
  const std::size_t n_st = contexts.size(), l = cfg.token_len, tok = l * kComponents;
  if (model.kind() == ModelKind::Array && n_st != cfg.n_stations) {
    throw ContractError("array model expects " + std::to_string(cfg.n_stations) + " station contexts, got " +
                        std::to_string(n_st));
  }
  const std::size_t n0 = contexts.front().n_tokens();
  for (const auto& c : contexts) {
    if (c.token_len != l) {
      throw ContractError("context token length " + std::to_string(c.token_len) + " does not match model token_len " +
                          std::to_string(l));
    }
    if (c.n_tokens() != n0) throw ContractError("station contexts differ in length");
  }
  if (n0 == 0) throw ContractError("forecast context must hold at least one token");

  const std::size_t window = cfg.context_tokens;
  std::size_t skip = 0;
  if (n0 > window) {
    skip = n0 - window;
    log_warn("context of " + std::to_string(n0) + " tokens exceeds the model window; using the last " +
             std::to_string(window));
  }
  // Running sequence per station: context tail followed by predictions.
  std::vector<std::vector<double>> seq(n_st);
  for (std::size_t s = 0; s < n_st; ++s) {
    seq[s].assign(contexts[s].tokens.begin() + static_cast<std::ptrdiff_t>(skip * tok), contexts[s].tokens.end());
  }
  const std::size_t used = n0 - skip;

  NoGradGuard guard;
  ForwardContext ctx{false, nullptr};
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t len = used + step;
    const std::size_t n = std::min(len, window);
    std::vector<double> x(n_st * n * tok);
    for (std::size_t s = 0; s < n_st; ++s) {
      const auto b = seq[s].begin() + static_cast<std::ptrdiff_t>((len - n) * tok);
      std::copy(b, b + static_cast<std::ptrdiff_t>(n * tok), x.begin() + static_cast<std::ptrdiff_t>(s * n * tok));
    }
    const Tensor y = model.predict_tokens(Tensor::from_data({1, n_st, n, l, kComponents}, std::move(x)), {}, ctx);
    const auto yd = y.data();
    for (std::size_t s = 0; s < n_st; ++s) {
      const auto b = yd.begin() + static_cast<std::ptrdiff_t>((s * n + n - 1) * tok);
      seq[s].insert(seq[s].end(), b, b + static_cast<std::ptrdiff_t>(tok));
    }
  }

  std::vector<std::vector<double>> predicted(n_st);
  for (std::size_t s = 0; s < n_st; ++s) {
    predicted[s].assign(seq[s].begin() + static_cast<std::ptrdiff_t>(used * tok), seq[s].end());
  }
  if (steps == 0) {
    ForecastResult r;
    r.context_tokens = used;
    r.predicted.resize(n_st);
    for (std::size_t s = 0; s < n_st; ++s) {
      r.predicted[s] = make_sequence(contexts[s], {}, contexts[s].start_time_s);
      Waveform w;
      w.sampling_rate_hz = contexts[s].sampling_rate_hz;
      w.station_id = contexts[s].station_id;
      r.predicted_waveforms.push_back(std::move(w));
    }
    return r;
  }
  return assemble_result(contexts, std::move(predicted), used, steps);
}

void score_forecast(ForecastResult& result, std::span<const TokenSequence> truth) {
  if (truth.size() != result.predicted.size()) throw DimensionError("one truth sequence per station expected");
  const std::size_t steps = result.steps;
  result.per_step_mse.assign(steps, 0.0);
  result.per_step_correlation.assign(steps, 0.0);
  std::vector<std::size_t> corr_n(steps, 0);
  for (std::size_t s = 0; s < truth.size(); ++s) {
    const auto& p = result.predicted[s];
    const auto& t = truth[s];
    if (t.token_len != p.token_len || t.n_tokens() < steps) {
      throw DimensionError("truth for station " + std::to_string(s) + " is shorter than the forecast");
    }
    const std::size_t l = p.token_len;
    std::vector<double> a(l), b(l);
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t c = 0; c < kComponents; ++c) {
        double se = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
          a[j] = p.token(k)[j * kComponents + c];
          b[j] = t.token(k)[j * kComponents + c];
          se += (a[j] - b[j]) * (a[j] - b[j]);
        }
        result.per_step_mse[k] += se / static_cast<double>(l);
        const double r = pearson(a, b);
        if (!std::isnan(r)) {
          result.per_step_correlation[k] += r;
          ++corr_n[k];
        }
      }
    }
  }
  for (std::size_t k = 0; k < steps; ++k) {
    result.per_step_mse[k] /= static_cast<double>(truth.size() * kComponents);
    result.per_step_correlation[k] = corr_n[k] ? result.per_step_correlation[k] / static_cast<double>(corr_n[k])
                                               : std::numeric_limits<double>::quiet_NaN();
  }
}

std::string to_string(Predictor p) {
  switch (p) {
    case Predictor::Model: return "model";
    case Predictor::Zero: return "zero";
    case Predictor::RepeatLast: return "repeat-last";
    case Predictor::Oracle: return "oracle";
  }
  return "?";
}

double HorizonMetrics::mean_mse(std::size_t first, std::size_t last) const {
  if (first >= last || last > steps) throw ContractError("mean_mse: empty or out-of-range step interval");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& st : mse) {
    for (const auto& comp : st) {
      for (std::size_t k = first; k < last; ++k) {
        total += comp[k];
        ++n;
      }
    }
  }
  return total / static_cast<double>(n);
}

std::vector<double> HorizonMetrics::step_mse() const {
  std::vector<double> out(steps);
  for (std::size_t k = 0; k < steps; ++k) out[k] = mean_mse(k, k + 1);
  return out;
}

HorizonMetrics evaluate_horizon(const SeismoModel* model, std::span<const std::vector<Waveform>> events,
                                const EvalOptions& opt) {
  return evaluate_impl(model, events.size(), [&](std::size_t i) -> const std::vector<Waveform>& { return events[i]; },
                       opt);
}

HorizonMetrics evaluate_horizon(const SeismoModel* model, const Dataset& dataset, const EvalOptions& opt) {
  return evaluate_impl(
      model, dataset.events.size(),
      [&](std::size_t i) -> const std::vector<Waveform>& { return dataset.events[i].stations; }, opt);
}

Comparison compare_single_vs_array(const SeismoModel& single_model, const SeismoModel& array_model,
                                   const Dataset& array_dataset, const EvalOptions& opt) {
  if (opt.steps == 0) throw ContractError("comparison needs at least one forecast step");
  if (single_model.config().token_len != array_model.config().token_len) {
    throw ContractError("single and array models use different token lengths");
  }
  EvalOptions o = opt;
  o.predictor = Predictor::Model;
  Comparison c;
  c.single = evaluate_horizon(&single_model, array_dataset, o);
  c.array = evaluate_horizon(&array_model, array_dataset, o);
  const std::size_t late = opt.steps - std::max<std::size_t>(1, opt.steps / 4);
  c.single_late_mse = c.single.mean_mse(late, opt.steps);
  c.array_late_mse = c.array.mean_mse(late, opt.steps);
  return c;
}

void write_metrics_csv(std::ostream& os, const HorizonMetrics& m) {
  os << "station,component,step,seconds_ahead,mse,correlation\n";
  write_metric_rows(os, m, "");
}

void write_comparison_csv(std::ostream& os, const Comparison& c) {
  os << "model,station,component,step,seconds_ahead,mse,correlation\n";
  write_metric_rows(os, c.single, "single,");
  write_metric_rows(os, c.array, "array,");
}

void write_overlay_csv(std::ostream& os, const Waveform& truth, std::size_t context_samples,
                       const Waveform* prediction) {
  const bool with_pred = prediction && prediction->length() > 0;
  const std::size_t rows = context_samples + (with_pred ? prediction->length() : 0);
  os << "time,truth_Z,truth_N,truth_E";
  if (with_pred) os << ",pred_Z,pred_N,pred_E";
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << truth.start_time_s + static_cast<double>(i) / truth.sampling_rate_hz;
    for (std::size_t c = 0; c < kComponents; ++c) {
      os << ',';
      if (i < truth.length()) os << truth.at(i, c);
    }
    if (with_pred) {
      for (std::size_t c = 0; c < kComponents; ++c) {
        os << ',';
        if (i >= context_samples) os << prediction->at(i - context_samples, c);
      }
    }
    os << '\n';
  }
}

}  // namespace seismo
