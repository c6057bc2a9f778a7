#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "seismogpt/checkpoint.hpp"
#include "seismogpt/errors.hpp"
#include "seismogpt/forecasting.hpp"
#include "seismogpt/log.hpp"
#include "seismogpt/parallel.hpp"
#include "seismogpt/synthdata.hpp"
#include "seismogpt/training.hpp"
#include "seismogpt/waveform_io.hpp"

namespace seismo::cli {

namespace {

std::string normalise_key(std::string key) {
  for (char& c : key) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (c == '_') c = '-';
  }
  return key;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool quiet = false;
};

struct GenDataArgs {
  std::string out;
  std::string mode = "single";
  std::size_t events = 2000;
  double sampling_rate = kDefaultSamplingRateHz;
  std::size_t samples = 1536;
  double apparent_velocity = 10.0;
  double corner_hz = 0.45;
  double taper = 0.05;
};

struct TrainArgs {
  std::string data;
  std::string out = "model.sgpt";
  std::string report;
  std::string model;  // empty: follow the dataset mode
  std::size_t d_model = 128;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t token_len = 16;
  std::size_t context_tokens = 64;
  double dropout = 0.1;
  double lr = 5e-4;
  double decay_factor = 0.8;
  std::size_t decay_every = 5;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  std::size_t batch_size = 0;  // 0: 32 single, 8 array
  std::size_t min_keep = 8;
  double val_fraction = 0.1;
  double clip_norm = 1.0;
  std::size_t window_stride = 16;
  std::size_t max_windows = 0;
  bool no_padding_masks = false;
};

struct ForecastArgs {
  std::string checkpoint;
  std::string input;
  std::string out = "forecast.csv";
  std::size_t station = 0;
  std::size_t context_tokens = 40;
  std::size_t steps = 24;
  std::size_t offset_tokens = 0;
};

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string out = "metrics.csv";
  bool compare = false;
  std::string predictor = "model";
  std::size_t context_tokens = 40;
  std::size_t steps = 24;
  std::size_t offset_tokens = 0;
  std::size_t max_events = 0;
  bool physical = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value configuration file [none]");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--threads", c.threads, "Worker thread cap (0 = all cores)");
  sub->add_flag("--quiet", c.quiet, "Only print warnings and errors [off]");
}

// Fills options absent from the command line from the environment, then
// from the config file.
void apply_fallbacks(CLI::App* sub, const ConfigFile& file, const EnvLookup& env) {
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->count() > 0) continue;
    const std::string& lname = opt->get_single_name();
    if (lname.empty() || lname == "help" || lname == "config") continue;
    const std::string key = normalise_key(lname);
    std::optional<std::string> value = env(env_name(key));
    if (!value) value = file.lookup(sub->get_name(), key);
    if (!value) continue;
    if (opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1) {
      std::istringstream ss(*value);
      std::string item;
      while (ss >> item) opt->add_result(item);
    } else {
      opt->add_result(*value);
    }
    opt->run_callback();
  }
}

void require(CLI::App* sub, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (sub->get_option(n)->count() == 0) {
      throw CLI::RequiredError(std::string(n) + " is required (flag, " + env_name(normalise_key(n + 2)) +
                               ", or config file)");
    }
  }
}

DatasetMode parse_mode(const std::string& s) { return s == "array" ? DatasetMode::Array : DatasetMode::Single; }

Predictor parse_predictor(const std::string& s) {
  if (s == "zero") return Predictor::Zero;
  if (s == "repeat-last") return Predictor::RepeatLast;
  if (s == "oracle") return Predictor::Oracle;
  return Predictor::Model;
}

int cmd_gen_data(const Common& c, const GenDataArgs& a, std::ostream& out) {
  SynthOptions o;
  o.sampling_rate_hz = a.sampling_rate;
  o.n_samples = a.samples;
  o.apparent_velocity_km_s = a.apparent_velocity;
  o.corner_hz = a.corner_hz;
  o.taper_fraction = a.taper;
  if (a.events == 0) throw ContractError("--events must be at least 1");
  const DatasetSummary s = generate_dataset(a.events, parse_mode(a.mode), o, c.seed, a.out);
  out << "events: " << s.n_events << "\n"
      << "traces: " << s.n_traces << "\n"
      << "manifest: " << s.manifest_path.string() << "\n"
      << "manifest checksum: " << hex64(s.manifest_checksum) << "\n";
  return kOk;
}

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  const ModelKind kind = a.model.empty() ? (ds.mode == DatasetMode::Array ? ModelKind::Array : ModelKind::Single)
                                         : (a.model == "array" ? ModelKind::Array : ModelKind::Single);
  if (kind == ModelKind::Array && ds.mode != DatasetMode::Array) {
    throw ArtifactMismatchError("array model needs an array dataset: " + a.data);
  }

  ModelConfig mc;
  mc.kind = kind;
  mc.d_model = a.d_model;
  mc.n_layers = a.layers;
  mc.n_heads = a.heads;
  mc.token_len = a.token_len;
  mc.context_tokens = a.context_tokens;
  mc.n_stations = kind == ModelKind::Array ? ds.events.front().stations.size() : 1;
  mc.dropout = a.dropout;
  mc.init_seed = c.seed;
  mc.validate();

  TrainConfig tc;
  tc.lr0 = a.lr;
  tc.decay_factor = a.decay_factor;
  tc.decay_every_epochs = a.decay_every;
  tc.max_epochs = a.max_epochs;
  tc.patience = a.patience;
  tc.batch_size = a.batch_size ? a.batch_size : (kind == ModelKind::Array ? 8 : 32);
  tc.min_keep_tokens = a.min_keep;
  tc.padding_masks = !a.no_padding_masks;
  tc.val_fraction = a.val_fraction;
  tc.seed = c.seed;
  tc.clip_norm = a.clip_norm;
  tc.max_windows_per_epoch = a.max_windows;
  tc.checkpoint_path = a.out;
  tc.report_path = a.report.empty() ? a.out + ".report.jsonl" : a.report;
  tc.validate();

  // Split by event, then flatten stations for the single-station model.
  const auto [train_idx, val_idx] = split_events(ds.events.size(), tc.val_fraction, c.seed);
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<Waveform>> events;
    for (std::size_t i : idx) {
      const auto& st = ds.events[i].stations;
      if (kind == ModelKind::Array) {
        events.push_back(st);
      } else {
        for (const auto& w : st) events.push_back({w});
      }
    }
    return make_training_pairs(std::move(events), mc.context_tokens, mc.token_len, a.window_stride);
  };
  const TrainingSet train = gather(train_idx);
  const TrainingSet val = gather(val_idx);

  std::unique_ptr<SeismoModel> model = make_model(mc);
  out << "model: " << to_string(kind) << ", d_model " << mc.d_model << ", layers " << mc.n_layers << ", heads "
      << mc.n_heads << ", token_len " << mc.token_len << ", context " << mc.context_tokens << " tokens, stations "
      << mc.n_stations << ", dropout " << mc.dropout << ", parameters " << count_parameters(*model) << "\n"
      << "optimizer: adam lr " << tc.lr0 << ", step decay " << tc.decay_factor << " every " << tc.decay_every_epochs
      << " epochs, max_epochs " << tc.max_epochs << ", patience " << tc.patience << ", batch " << tc.batch_size
      << ", clip " << tc.clip_norm << "\n"
      << "data: " << train_idx.size() << " train / " << val_idx.size() << " validation events, " << train.size()
      << " / " << val.size() << " windows, stride " << a.window_stride << " samples, padding masks "
      << (tc.padding_masks ? "on" : "off") << " (min keep " << tc.min_keep_tokens << ")\n";

  FitHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << (r.epoch + 1) << "  lr " << r.lr << "  train " << r.train_loss << "  val " << r.val_loss
        << (r.improved ? "  *" : "") << "  (" << std::fixed << std::setprecision(1) << r.seconds << " s)"
        << std::defaultfloat << std::setprecision(6) << "\n";
    out.flush();
  };
  const TrainReport rep = fit(*model, train, val, tc, hooks);
  out << "stopped after epoch " << (rep.stop_epoch + 1) << (rep.stopped_early ? " (early stopping)" : "")
      << "; best epoch " << (rep.best_epoch + 1) << " val " << rep.best_val_loss << "\n"
      << "checkpoint: " << a.out << "\n"
      << "report: " << tc.report_path.string() << "\n";
  return kOk;
}

Waveform slice(const Waveform& w, std::size_t first, std::size_t count) {
  Waveform out;
  out.sampling_rate_hz = w.sampling_rate_hz;
  out.station_id = w.station_id;
  out.start_time_s = w.start_time_s + static_cast<double>(first) / w.sampling_rate_hz;
  first = std::min(first, w.length());
  count = std::min(count, w.length() - first);
  const auto b = w.samples.begin() + static_cast<std::ptrdiff_t>(first * kComponents);
  out.samples.assign(b, b + static_cast<std::ptrdiff_t>(count * kComponents));
  return out;
}

int cmd_forecast(const ForecastArgs& a, std::ostream& out) {
  const std::unique_ptr<SeismoModel> model = load_checkpoint(a.checkpoint);
  const ModelConfig& mc = model->config();
  const std::vector<Waveform> waves = load_any_waveforms(a.input);
  if (a.context_tokens == 0) throw ContractError("--context-tokens must be at least 1");

  std::vector<std::size_t> used;
  if (model->kind() == ModelKind::Array) {
    if (waves.size() != mc.n_stations) {
      throw ArtifactMismatchError("checkpoint expects " + std::to_string(mc.n_stations) + " stations, " + a.input +
                                  " has " + std::to_string(waves.size()));
    }
    for (std::size_t s = 0; s < waves.size(); ++s) used.push_back(s);
  } else {
    used.push_back(a.station);
  }
  if (a.station >= waves.size()) {
    throw ContractError("--station " + std::to_string(a.station) + " out of range (" + std::to_string(waves.size()) +
                        " stations)");
  }

  const std::size_t l = mc.token_len;
  const std::size_t first = a.offset_tokens * l;
  const std::size_t ctx_samples = a.context_tokens * l;
  std::vector<TokenSequence> contexts;
  for (std::size_t s : used) {
    if (waves[s].length() < first + ctx_samples) {
      throw ContractError("input trace " + waves[s].station_id + " has " + std::to_string(waves[s].length()) +
                          " samples, the context needs " + std::to_string(first + ctx_samples));
    }
    contexts.push_back(tokenize(slice(waves[s], first, ctx_samples), l));
  }
  ForecastResult r = forecast(*model, contexts, a.steps);
  const std::size_t pick = model->kind() == ModelKind::Array ? a.station : 0;
  const Waveform truth = slice(waves[a.station], first, ctx_samples + a.steps * l);

  std::ofstream os(a.out);
  if (!os) throw IoError(a.out, "cannot open output");
  write_overlay_csv(os, truth, ctx_samples, a.steps > 0 ? &r.predicted_waveforms[pick] : nullptr);
  if (!os) throw IoError(a.out, "write failed");

  out << "context: " << r.context_tokens << " tokens (" << r.context_tokens * l << " samples)\n"
      << "forecast: " << a.steps << " tokens (" << a.steps * l << " samples, " << r.horizon_seconds << " s)\n";
  if (a.steps > 0 && truth.length() == ctx_samples + a.steps * l) {
    std::vector<TokenSequence> truth_tokens;
    for (std::size_t s : used) {
      truth_tokens.push_back(tokenize(slice(waves[s], first + ctx_samples, a.steps * l), l,
                                      contexts[truth_tokens.size()].norm));
    }
    score_forecast(r, truth_tokens);
    out << "step,mse,correlation\n";
    for (std::size_t k = 0; k < a.steps; ++k) {
      out << (k + 1) << ',' << r.per_step_mse[k] << ',' << r.per_step_correlation[k] << "\n";
    }
  }
  out << "overlay: " << a.out << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.compare && a.checkpoints.size() != 2) {
    throw CLI::ValidationError("--compare", "needs exactly two --checkpoint values (single and array)");
  }
  if (!a.compare && a.checkpoints.size() != 1) {
    throw CLI::ValidationError("--checkpoint", "give one checkpoint, or two together with --compare");
  }
  Dataset ds = load_dataset(a.data);
  if (a.max_events > 0 && ds.events.size() > a.max_events) ds.events.resize(a.max_events);

  EvalOptions eo;
  eo.context_tokens = a.context_tokens;
  eo.steps = a.steps;
  eo.offset_tokens = a.offset_tokens;
  eo.predictor = parse_predictor(a.predictor);
  eo.normalized_domain = !a.physical;
  if (eo.steps == 0) throw ContractError("--steps must be at least 1 for evaluation");

  auto check_fit = [&](const SeismoModel& m) {
    const std::size_t stations = ds.events.front().stations.size();
    if (m.kind() == ModelKind::Array && stations != m.config().n_stations) {
      throw ArtifactMismatchError("checkpoint expects " + std::to_string(m.config().n_stations) +
                                  " stations per event, dataset has " + std::to_string(stations));
    }
  };

  std::ofstream os(a.out);
  if (!os) throw IoError(a.out, "cannot open output");
  const std::size_t late = eo.steps - std::max<std::size_t>(1, eo.steps / 4);
  const std::size_t early = std::min<std::size_t>(4, eo.steps);
  if (a.compare) {
    auto m1 = load_checkpoint(a.checkpoints[0]);
    auto m2 = load_checkpoint(a.checkpoints[1]);
    if (m1->kind() == ModelKind::Array) std::swap(m1, m2);
    if (m1->kind() != ModelKind::Single || m2->kind() != ModelKind::Array) {
      throw ArtifactMismatchError("--compare needs one single-station and one array checkpoint");
    }
    check_fit(*m2);
    const Comparison cmp = compare_single_vs_array(*m1, *m2, ds, eo);
    write_comparison_csv(os, cmp);
    out << "events: " << ds.events.size() << "\n"
        << "single: steps 1-" << early << " mse " << cmp.single.mean_mse(0, early) << ", steps " << (late + 1) << '-'
        << eo.steps << " mse " << cmp.single_late_mse << "\n"
        << "array:  steps 1-" << early << " mse " << cmp.array.mean_mse(0, early) << ", steps " << (late + 1) << '-'
        << eo.steps << " mse " << cmp.array_late_mse << "\n";
  } else {
    std::unique_ptr<SeismoModel> model;
    if (eo.predictor == Predictor::Model) {
      model = load_checkpoint(a.checkpoints[0]);
      check_fit(*model);
    } else {
      // Baselines only need the token length.
      model = load_checkpoint(a.checkpoints[0]);
    }
    const HorizonMetrics m = evaluate_horizon(model.get(), ds, eo);
    write_metrics_csv(os, m);
    out << "events: " << m.n_events << ", predictor " << to_string(eo.predictor) << "\n"
        << "steps 1-" << early << " mse " << m.mean_mse(0, early) << "\n"
        << "steps " << (late + 1) << '-' << eo.steps << " mse " << m.mean_mse(late, eo.steps) << "\n";
  }
  if (!os) throw IoError(a.out, "write failed");
  out << "metrics: " << a.out << "\n";
  return kOk;
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

std::optional<std::string> ConfigFile::lookup(const std::string& subcommand, const std::string& key) const {
  if (auto s = sections.find(subcommand); s != sections.end()) {
    if (auto it = s->second.find(key); it != s->second.end()) return it->second;
  }
  if (auto it = global.find(key); it != global.end()) return it->second;
  return std::nullopt;
}

ConfigFile parse_config(std::istream& is, const std::string& origin) {
  ConfigFile cfg;
  std::map<std::string, std::string>* target = &cfg.global;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(origin + ":" + std::to_string(lineno) + ": unterminated section");
      target = &cfg.sections[trim(line.substr(1, line.size() - 2))];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = normalise_key(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
    (*target)[key] = value;
  }
  return cfg;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(path, "cannot open config file");
  return parse_config(is, path);
}

std::string env_name(const std::string& key) {
  std::string n = kEnvPrefix;
  for (char c : key) n += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return n;
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"seismoforge: synthetic seismic data, autoregressive transformer training, forecasting and "
               "evaluation for three-component waveforms.\n"
               "Settings resolve as: flags > SEISMOFORGE_* environment > --config file > defaults.",
               "seismoforge"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  GenDataArgs gd;
  TrainArgs tr;
  ForecastArgs fc;
  EvalArgs ev;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  add_common(gen, common);
  gen->add_option("--out", gd.out, "Existing output directory (required)");
  gen->add_option("--mode", gd.mode, "single or array")->check(CLI::IsMember({"single", "array"}));
  gen->add_option("--events", gd.events, "Number of events");
  gen->add_option("--sampling-rate", gd.sampling_rate, "Sampling rate (Hz)");
  gen->add_option("--samples", gd.samples, "Samples per trace");
  gen->add_option("--apparent-velocity", gd.apparent_velocity, "Plane-wave apparent velocity (km/s)");
  gen->add_option("--corner-hz", gd.corner_hz, "Low-pass corner frequency (Hz)");
  gen->add_option("--taper", gd.taper, "Cosine taper fraction at each end");

  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset directory");
  add_common(train, common);
  train->add_option("--data", tr.data, "Dataset directory (required)");
  train->add_option("--out", tr.out, "Best-validation checkpoint path");
  train->add_option("--report", tr.report, "Per-epoch report [<out>.report.jsonl]");
  train->add_option("--model", tr.model, "single or array [dataset mode]")
      ->check(CLI::IsMember({"", "single", "array"}));
  train->add_option("--d-model", tr.d_model, "Model width");
  train->add_option("--layers", tr.layers, "Encoder layers per stack");
  train->add_option("--heads", tr.heads, "Attention heads");
  train->add_option("--token-len", tr.token_len, "Samples per token");
  train->add_option("--context-tokens", tr.context_tokens, "Context window in tokens");
  train->add_option("--dropout", tr.dropout, "Dropout probability");
  train->add_option("--lr", tr.lr, "Initial learning rate");
  train->add_option("--decay-factor", tr.decay_factor, "Step decay factor");
  train->add_option("--decay-every", tr.decay_every, "Epochs between decays");
  train->add_option("--max-epochs", tr.max_epochs, "Maximum epochs");
  train->add_option("--patience", tr.patience, "Early-stopping patience (epochs)");
  train->add_option("--batch-size", tr.batch_size, "Windows per batch (0: 32 single, 8 array)");
  train->add_option("--min-keep", tr.min_keep, "Minimum kept tokens under a padding mask");
  train->add_option("--val-fraction", tr.val_fraction, "Fraction of events held out for validation");
  train->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip (0 disables)");
  train->add_option("--window-stride", tr.window_stride, "Training window stride (samples)");
  train->add_option("--max-windows", tr.max_windows, "Windows sampled per epoch (0 = all)");
  train->add_flag("--no-padding-masks", tr.no_padding_masks, "Disable random padding masks [off]");

  CLI::App* fcst = app.add_subcommand("forecast", "Forecast one trace autoregressively");
  add_common(fcst, common);
  fcst->add_option("--checkpoint", fc.checkpoint, "Model checkpoint (required)");
  fcst->add_option("--input", fc.input, "Waveform file, .sgwf or .csv with time,Z,N,E (required)");
  fcst->add_option("--out", fc.out, "Overlay CSV path");
  fcst->add_option("--station", fc.station, "Station index to export");
  fcst->add_option("--context-tokens", fc.context_tokens, "Context length in tokens");
  fcst->add_option("--steps", fc.steps, "Tokens to forecast");
  fcst->add_option("--offset-tokens", fc.offset_tokens, "First context token within the trace");

  CLI::App* eval = app.add_subcommand("eval", "Horizon-resolved evaluation on a held-out dataset");
  add_common(eval, common);
  eval->add_option("--checkpoint", ev.checkpoints, "Model checkpoint, twice with --compare (required)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->default_str("");
  eval->add_option("--data", ev.data, "Held-out dataset directory (required)");
  eval->add_option("--out", ev.out, "Metrics CSV path");
  eval->add_flag("--compare", ev.compare, "Compare a single-station and an array checkpoint [off]");
  eval->add_option("--predictor", ev.predictor, "model, zero, repeat-last or oracle")
      ->check(CLI::IsMember({"model", "zero", "repeat-last", "oracle"}));
  eval->add_option("--context-tokens", ev.context_tokens, "Context length in tokens");
  eval->add_option("--steps", ev.steps, "Tokens to forecast");
  eval->add_option("--offset-tokens", ev.offset_tokens, "First context token within each trace");
  eval->add_option("--max-events", ev.max_events, "Evaluate at most this many events (0 = all)");
  eval->add_flag("--physical", ev.physical, "Report MSE on physical amplitudes instead of normalised ones [off]");

  set_log_sink([&err](LogLevel level, std::string_view msg) {
    err << (level >= LogLevel::Warn ? "warning: " : "") << msg << '\n';
  });
  struct SinkReset {
    ~SinkReset() {
      set_log_sink({});
      set_log_level(LogLevel::Info);
    }
  } reset;

  try {
    std::vector<std::string> args(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
    app.parse(args);
    CLI::App* sub = app.get_subcommands().front();

    std::string config_path = common.config;
    if (config_path.empty()) config_path = env(env_name("config")).value_or("");
    const ConfigFile file = config_path.empty() ? ConfigFile{} : load_config(config_path);
    apply_fallbacks(sub, file, env);
    set_thread_limit(common.threads);
    if (common.quiet) set_log_level(LogLevel::Warn);

    if (sub == gen) {
      require(gen, {"--out"});
      return cmd_gen_data(common, gd, out);
    }
    if (sub == train) {
      require(train, {"--data"});
      return cmd_train(common, tr, out);
    }
    if (sub == fcst) {
      require(fcst, {"--checkpoint", "--input"});
      return cmd_forecast(fc, out);
    }
    require(eval, {"--checkpoint", "--data"});
    return cmd_eval(ev, out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::Error& e) {
    app.exit(e, out, err);
    return kUsage;
  } catch (const TrainingAborted& e) {
    err << "error: training aborted: " << e.what() << '\n';
    return kTrainingAbort;
  } catch (const ArtifactMismatchError& e) {
    err << "error: artifact mismatch: " << e.what() << '\n';
    return kArtifactMismatch;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace seismo::cli
