#include "seismogpt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "seismogpt/errors.hpp"
#include "seismogpt/waveform_io.hpp"

namespace seismo {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// (distance deg, t_p s); concave like real P curves.
constexpr std::array<std::array<double, 2>, 4> kPCurve{{{21.0, 280.0}, {30.0, 365.0}, {40.0, 452.0}, {49.0, 530.0}}};
constexpr double kSOverP = 1.8;

// Waveform shape parameters of one seismic phase, drawn from the event seed.
struct PhaseShape {
  double freq_hz;
  double width_s;
  double coda_tau_s;
  double coda_ratio;
  double coda_freq_hz;
  double drift;  // instantaneous coda frequency falls by drift * f per tau
  std::array<double, 3> packet_phase;
  std::array<double, 3> coda_phase;
};

struct EventShape {
  PhaseShape p;
  PhaseShape s;
  double s_to_p_amplitude;
};

EventShape draw_shape(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  auto phases = [&] {
    std::array<double, 3> a{};
    for (auto& v : a) v = range(0.0, 2.0 * kPi);
    return a;
  };
  EventShape e{};
  e.p.freq_hz = range(0.06, 0.14);
  e.p.width_s = range(15.0, 30.0);
  e.p.coda_tau_s = range(80.0, 200.0);
  e.p.coda_ratio = range(0.3, 0.6);
  e.p.coda_freq_hz = e.p.freq_hz * range(0.8, 1.0);
  e.p.drift = range(0.0, 0.2);
  e.p.packet_phase = phases();
  e.p.coda_phase = phases();
  e.s.freq_hz = e.p.freq_hz * range(0.6, 0.9);
  e.s.width_s = e.p.width_s * range(1.2, 1.6);
  e.s.coda_tau_s = range(100.0, 250.0);
  e.s.coda_ratio = range(0.3, 0.6);
  e.s.coda_freq_hz = e.s.freq_hz * range(0.8, 1.0);
  e.s.drift = range(0.0, 0.2);
  e.s.packet_phase = phases();
  e.s.coda_phase = phases();
  e.s_to_p_amplitude = range(1.0, 2.0);
  return e;
}

double phase_signal(const PhaseShape& ph, std::size_t c, double tau) {
  const double g = tau / ph.width_s;
  double v = std::exp(-g * g) * std::cos(2.0 * kPi * ph.freq_hz * tau + ph.packet_phase[c]);
  if (tau > 0.0) {
    const double onset = 1.0 - std::exp(-g * g);
    const double kappa = ph.drift * ph.coda_freq_hz / ph.coda_tau_s;
    const double arg = 2.0 * kPi * (ph.coda_freq_hz * tau - 0.5 * kappa * tau * tau) + ph.coda_phase[c];
    v += ph.coda_ratio * onset * std::exp(-tau / ph.coda_tau_s) * std::cos(arg);
  }
  return v;
}

void apply_biquad(std::span<double> x, std::size_t channel, const std::array<double, 5>& c) {
  // c = b0, b1, b2, a1, a2 (direct form II transposed)
  double z1 = 0.0, z2 = 0.0;
  const std::size_t t = x.size() / kComponents;
  for (std::size_t i = 0; i < t; ++i) {
    double& v = x[i * kComponents + channel];
    const double in = v;
    const double out = c[0] * in + z1;
    z1 = c[1] * in - c[3] * out + z2;
    z2 = c[2] * in - c[4] * out;
    v = out;
  }
}

void reverse_channel(std::span<double> x, std::size_t channel) {
  const std::size_t t = x.size() / kComponents;
  for (std::size_t i = 0; i < t / 2; ++i) std::swap(x[i * kComponents + channel], x[(t - 1 - i) * kComponents + channel]);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  os << text;
  if (!os) throw IoError(path.string(), "write failed");
}

std::string event_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.sgwf", index);
  return buf;
}

}  // namespace

void EventSpec::validate() const {
  if (!(magnitude_proxy >= 0.0)) throw ContractError("event amplitude factor must be non-negative");
  if (mechanism[0] == 0.0 && mechanism[1] == 0.0 && mechanism[2] == 0.0) {
    throw ContractError("event mechanism vector must be non-zero");
  }
}

void ReceiverSpec::validate() const {
  if (!(angular_distance_deg >= kMinTeleseismicDeg && angular_distance_deg <= kMaxTeleseismicDeg)) {
    throw ContractError("receiver distance " + std::to_string(angular_distance_deg) +
                        " deg outside the teleseismic window [21, 49]");
  }
}

TravelTimes travel_times(double distance_deg) {
  if (!(distance_deg >= kMinTeleseismicDeg && distance_deg <= kMaxTeleseismicDeg)) {
    throw ContractError("travel_times: distance " + std::to_string(distance_deg) + " deg outside [21, 49]");
  }
  std::size_t seg = 0;
  while (seg + 2 < kPCurve.size() && distance_deg > kPCurve[seg + 1][0]) ++seg;
  const auto& a = kPCurve[seg];
  const auto& b = kPCurve[seg + 1];
  const double tp = a[1] + (b[1] - a[1]) * (distance_deg - a[0]) / (b[0] - a[0]);
  return {tp, kSOverP * tp};
}

ArrayGeometry default_array_geometry() {
  ArrayGeometry g;
  const double side = 10.0;
  const double circumradius = side / std::sqrt(3.0);
  for (int v = 0; v < 3; ++v) {
    const double a = (90.0 + 120.0 * v) * kDeg;
    g.vertices[static_cast<std::size_t>(v)] = {circumradius * std::cos(a), circumradius * std::sin(a)};
  }
  const std::array<std::array<double, 2>, 4> cross{{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}};
  for (int v = 0; v < 3; ++v) {
    const auto& c = g.vertices[static_cast<std::size_t>(v)];
    for (const auto& o : cross) g.stations.push_back({"", c[0] + o[0], c[1] + o[1], v});
  }
  for (const auto& o : cross) g.stations.push_back({"", 0.5 * o[0], 0.5 * o[1], -1});
  std::sort(g.stations.begin(), g.stations.end(), [](const StationSite& a, const StationSite& b) {
    return a.x_km != b.x_km ? a.x_km < b.x_km : a.y_km < b.y_km;
  });
  for (std::size_t i = 0; i < g.stations.size(); ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "A%02zu", i + 1);
    g.stations[i].station_id = buf;
  }
  return g;
}

double plane_wave_delay_s(const StationSite& site, double azimuth_deg, double apparent_velocity_km_s) {
  if (!(apparent_velocity_km_s > 0.0)) throw ContractError("apparent velocity must be positive");
  const double ux = std::sin(azimuth_deg * kDeg);
  const double uy = std::cos(azimuth_deg * kDeg);
  return (site.x_km * ux + site.y_km * uy) / apparent_velocity_km_s;
}

void lowpass_zero_phase(std::span<double> samples, std::size_t channel, double corner_hz, double sampling_rate_hz) {
  if (!(corner_hz > 0.0 && corner_hz < 0.5 * sampling_rate_hz)) {
    throw ContractError("low-pass corner must lie in (0, Nyquist)");
  }
  const double k = std::tan(kPi * corner_hz / sampling_rate_hz);
  // Butterworth pole-pair quality factors for order 4.
  std::array<std::array<double, 5>, 2> sections{};
  const std::array<double, 2> qs{0.54119610014619701, 1.3065629648763764};
  for (std::size_t i = 0; i < 2; ++i) {
    const double q = qs[i];
    const double norm = 1.0 / (1.0 + k / q + k * k);
    const double b0 = k * k * norm;
    sections[i] = {b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm};
  }
  for (const auto& s : sections) apply_biquad(samples, channel, s);
  reverse_channel(samples, channel);
  for (const auto& s : sections) apply_biquad(samples, channel, s);
  reverse_channel(samples, channel);
}

void cosine_taper(std::span<double> samples, double fraction) {
  const std::size_t t = samples.size() / kComponents;
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(t)));
  if (m == 0) return;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(i) / static_cast<double>(m)));
    for (std::size_t c = 0; c < kComponents; ++c) {
      samples[i * kComponents + c] *= w;
      samples[(t - 1 - i) * kComponents + c] *= w;
    }
  }
}

Waveform synthesize_event(const EventSpec& ev, const ReceiverSpec& rx, const SynthOptions& opt) {
  return synthesize_event(ev, rx, opt, 0.0, "S0");
}

Waveform synthesize_event(const EventSpec& ev, const ReceiverSpec& rx, const SynthOptions& opt, double delay_s,
                          std::string station_id) {
  ev.validate();
  rx.validate();
  if (!(opt.sampling_rate_hz > 0.0) || opt.n_samples == 0) throw ContractError("invalid sampling options");
  const TravelTimes tt = travel_times(rx.angular_distance_deg);
  const double start = tt.p_s - opt.lead_s;
  const double usable_end = start + opt.duration_s() * (1.0 - opt.taper_fraction);
  if (tt.s_s + delay_s >= usable_end) {
    throw ContractError("trace of " + std::to_string(opt.duration_s()) + " s starting " + std::to_string(opt.lead_s) +
                        " s before P does not contain the S arrival at " + std::to_string(tt.s_s) + " s");
  }
  const EventShape shape = draw_shape(ev.rng_seed);
  const double amp = ev.magnitude_proxy * 30.0 / rx.angular_distance_deg;
  constexpr std::array<double, 3> p_pattern{1.0, 0.6, 0.6};
  constexpr std::array<double, 3> s_pattern{0.6, 1.0, 1.0};

  Waveform w;
  w.sampling_rate_hz = opt.sampling_rate_hz;
  w.station_id = std::move(station_id);
  w.start_time_s = start;
  w.samples.assign(opt.n_samples * kComponents, 0.0);
  const double tp = tt.p_s + delay_s;
  const double ts = tt.s_s + delay_s;
  for (std::size_t i = 0; i < opt.n_samples; ++i) {
    const double t = start + static_cast<double>(i) / opt.sampling_rate_hz;
    for (std::size_t c = 0; c < kComponents; ++c) {
      const double p = p_pattern[c] * phase_signal(shape.p, c, t - tp);
      const double s = shape.s_to_p_amplitude * s_pattern[c] * phase_signal(shape.s, c, t - ts);
      w.samples[i * kComponents + c] = amp * ev.mechanism[c] * (p + s);
    }
  }
  for (std::size_t c = 0; c < kComponents; ++c) lowpass_zero_phase(w.samples, c, opt.corner_hz, opt.sampling_rate_hz);
  cosine_taper(w.samples, opt.taper_fraction);
  return w;
}

std::vector<Waveform> synthesize_array_event(const EventSpec& ev, const ReceiverSpec& rx, const ArrayGeometry& geom,
                                             const SynthOptions& opt) {
  std::vector<Waveform> out;
  out.reserve(geom.stations.size());
  for (const auto& site : geom.stations) {
    const double delay = plane_wave_delay_s(site, rx.azimuth_deg, opt.apparent_velocity_km_s);
    out.push_back(synthesize_event(ev, rx, opt, delay, site.station_id));
  }
  return out;
}

std::string to_string(DatasetMode mode) { return mode == DatasetMode::Single ? "single" : "array"; }

EventRecord synthesize_dataset_event(std::size_t index, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  EventRecord rec;
  rec.index = index;
  rec.event.source_lat = range(-60.0, 60.0);
  rec.event.source_lon = range(-180.0, 180.0);
  rec.event.depth_km = range(10.0, 600.0);
  rec.event.magnitude_proxy = range(0.5, 2.0);
  for (auto& m : rec.event.mechanism) m = (u(rng) < 0.5 ? -1.0 : 1.0) * range(0.4, 1.0);
  rec.event.rng_seed = rng();
  rec.receiver.angular_distance_deg = range(kMinTeleseismicDeg, kMaxTeleseismicDeg);
  rec.receiver.azimuth_deg = range(0.0, 360.0);

  SynthOptions o = opt;
  o.lead_s = range(60.0, 250.0);
  const TravelTimes tt = travel_times(rec.receiver.angular_distance_deg);
  rec.start_time_s = tt.p_s - o.lead_s;

  if (mode == DatasetMode::Single) {
    char id[16];
    std::snprintf(id, sizeof id, "S%05zu", index);
    rec.stations.push_back(synthesize_event(rec.event, rec.receiver, o, 0.0, id));
    rec.arrivals.push_back({id, 0.0, 0.0, tt.p_s, tt.s_s});
  } else {
    const ArrayGeometry geom = default_array_geometry();
    rec.stations = synthesize_array_event(rec.event, rec.receiver, geom, o);
    for (const auto& site : geom.stations) {
      const double d = plane_wave_delay_s(site, rec.receiver.azimuth_deg, o.apparent_velocity_km_s);
      rec.arrivals.push_back({site.station_id, site.x_km, site.y_km, tt.p_s + d, tt.s_s + d});
    }
  }
  return rec;
}

Dataset synthesize_dataset(std::size_t n_events, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed) {
  if (n_events == 0) throw ContractError("dataset needs at least one event");
  Dataset ds;
  ds.mode = mode;
  ds.options = opt;
  ds.events.reserve(n_events);
  for (std::size_t i = 0; i < n_events; ++i) ds.events.push_back(synthesize_dataset_event(i, mode, opt, seed));
  return ds;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state) {
  for (unsigned char b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

// Great-circle destination from (lat, lon) along azimuth for an angular
// distance, all in degrees.
std::array<double, 2> destination(double lat, double lon, double azimuth, double distance) {
  const double p1 = lat * kDeg, l1 = lon * kDeg, th = azimuth * kDeg, d = distance * kDeg;
  const double p2 = std::asin(std::sin(p1) * std::cos(d) + std::cos(p1) * std::sin(d) * std::cos(th));
  const double l2 = l1 + std::atan2(std::sin(th) * std::sin(d) * std::cos(p1), std::cos(d) - std::sin(p1) * std::sin(p2));
  double lon2 = std::fmod(l2 / kDeg + 540.0, 360.0) - 180.0;
  return {p2 / kDeg, lon2};
}

}  // namespace

DatasetSummary write_dataset(const Dataset& ds, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(out_dir)) throw IoError(out_dir.string(), "output directory does not exist");
  const fs::path events_dir = out_dir / "events";
  std::error_code ec;
  fs::create_directories(events_dir, ec);
  if (ec) throw IoError(events_dir.string(), "cannot create directory");

  DatasetSummary summary;
  std::string manifest;
  for (const auto& rec : ds.events) {
    const std::string rel = "events/" + event_file_name(rec.index);
    std::ostringstream bytes(std::ios::binary);
    write_waveforms(bytes, rec.stations);
    const std::string blob = bytes.str();
    write_text(out_dir / rel, blob);

    const auto rx_pos = destination(rec.event.source_lat, rec.event.source_lon, rec.receiver.azimuth_deg,
                                    rec.receiver.angular_distance_deg);
    nlohmann::ordered_json j;
    j["event"] = rec.index;
    j["file"] = rel;
    j["mode"] = to_string(ds.mode);
    j["seed"] = rec.event.rng_seed;
    j["source"] = {{"lat", rec.event.source_lat},
                   {"lon", rec.event.source_lon},
                   {"depth_km", rec.event.depth_km},
                   {"magnitude_proxy", rec.event.magnitude_proxy},
                   {"mechanism", rec.event.mechanism}};
    j["receiver"] = {{"distance_deg", rec.receiver.angular_distance_deg},
                     {"azimuth_deg", rec.receiver.azimuth_deg},
                     {"lat", rx_pos[0]},
                     {"lon", rx_pos[1]}};
    j["sampling_rate_hz"] = ds.options.sampling_rate_hz;
    j["n_samples"] = rec.stations.front().length();
    j["start_time_s"] = rec.start_time_s;
    auto stations = nlohmann::ordered_json::array();
    for (const auto& a : rec.arrivals) {
      stations.push_back({{"id", a.station_id}, {"x_km", a.x_km}, {"y_km", a.y_km}, {"t_p", a.t_p}, {"t_s", a.t_s}});
    }
    j["stations"] = std::move(stations);
    j["data_fnv1a64"] = hex64(fnv1a64(std::span(reinterpret_cast<const unsigned char*>(blob.data()), blob.size())));
    manifest += j.dump();
    manifest += '\n';
    summary.n_traces += rec.stations.size();
  }
  summary.n_events = ds.events.size();
  summary.manifest_path = out_dir / "manifest.jsonl";
  write_text(summary.manifest_path, manifest);
  summary.manifest_checksum =
      fnv1a64(std::span(reinterpret_cast<const unsigned char*>(manifest.data()), manifest.size()));
  return summary;
}

DatasetSummary generate_dataset(std::size_t n_events, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed,
                                const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(out_dir)) throw IoError(out_dir.string(), "output directory does not exist");
  return write_dataset(synthesize_dataset(n_events, mode, opt, seed), out_dir);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.jsonl";
  std::ifstream is(manifest_path);
  if (!is) throw IoError(manifest_path.string(), "cannot open manifest");
  Dataset ds;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed manifest line in " + manifest_path.string() + ": " + e.what());
    }
    const DatasetMode mode = j.at("mode").get<std::string>() == "array" ? DatasetMode::Array : DatasetMode::Single;
    if (first) {
      ds.mode = mode;
      ds.options.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
      ds.options.n_samples = j.at("n_samples").get<std::size_t>();
      first = false;
    } else if (mode != ds.mode) {
      throw FormatError("manifest mixes single and array events: " + manifest_path.string());
    }
    EventRecord rec;
    rec.index = j.at("event").get<std::size_t>();
    rec.event.rng_seed = j.at("seed").get<std::uint64_t>();
    const auto& src = j.at("source");
    rec.event.source_lat = src.at("lat").get<double>();
    rec.event.source_lon = src.at("lon").get<double>();
    rec.event.depth_km = src.at("depth_km").get<double>();
    rec.event.magnitude_proxy = src.at("magnitude_proxy").get<double>();
    rec.event.mechanism = src.at("mechanism").get<std::array<double, 3>>();
    rec.receiver.angular_distance_deg = j.at("receiver").at("distance_deg").get<double>();
    rec.receiver.azimuth_deg = j.at("receiver").at("azimuth_deg").get<double>();
    rec.start_time_s = j.at("start_time_s").get<double>();
    for (const auto& s : j.at("stations")) {
      rec.arrivals.push_back({s.at("id").get<std::string>(), s.at("x_km").get<double>(), s.at("y_km").get<double>(),
                              s.at("t_p").get<double>(), s.at("t_s").get<double>()});
    }
    rec.stations = load_waveforms(dir / j.at("file").get<std::string>());
    for (auto& w : rec.stations) w.start_time_s = rec.start_time_s;
    ds.events.push_back(std::move(rec));
  }
  if (ds.events.empty()) throw FormatError("empty dataset manifest: " + manifest_path.string());
  return ds;
}

}  // namespace seismo
