#pragma once

// Parametric teleseismic stand-in: Gabor P and S packets with dispersive
// exponential codas, zero-phase Butterworth low-pass, cosine taper, and a
// plane-wave sweep across a local array.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/waveform.hpp"

namespace seismo {

inline constexpr double kMinTeleseismicDeg = 21.0;
inline constexpr double kMaxTeleseismicDeg = 49.0;
inline constexpr double kDefaultSamplingRateHz = 1.9;
inline constexpr std::size_t kArrayStations = 16;

struct EventSpec {
  double source_lat = 0.0;
  double source_lon = 0.0;
  double depth_km = 10.0;
  double magnitude_proxy = 1.0;  // overall amplitude factor
  std::array<double, 3> mechanism{1.0, 1.0, 1.0};  // Z, N, E weights
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct ReceiverSpec {
  double angular_distance_deg = 30.0;
  double azimuth_deg = 0.0;  // source -> receiver, clockwise from north

  void validate() const;
};

struct StationSite {
  std::string station_id;
  double x_km = 0.0;  // east
  double y_km = 0.0;  // north
  int vertex = -1;    // triangle vertex the station surrounds, -1 = central
};

struct ArrayGeometry {
  std::array<std::array<double, 2>, 3> vertices{};
  std::vector<StationSite> stations;
};

struct TravelTimes {
  double p_s = 0.0;
  double s_s = 0.0;
};

struct SynthOptions {
  double sampling_rate_hz = kDefaultSamplingRateHz;
  std::size_t n_samples = 1536;
  double lead_s = 120.0;  // trace starts this long before the reference P arrival
  double apparent_velocity_km_s = 10.0;
  double corner_hz = 0.45;
  double taper_fraction = 0.05;

  double duration_s() const { return static_cast<double>(n_samples) / sampling_rate_hz; }
};

// Piecewise-linear stand-in curve: t_p(21) = 280 s, t_p(49) = 530 s,
// t_s = 1.8 t_p. Throws ContractError outside [21, 49] degrees.
TravelTimes travel_times(double distance_deg);

// Equilateral triangle (10 km side) centred at the origin with a 1 km cross
// of four stations around each vertex and a 0.5 km cross of four at the
// centroid. Stations are in canonical order (x, then y) and named A01..A16.
ArrayGeometry default_array_geometry();

// Arrival delay of a plane wave travelling along `azimuth_deg` at a station
// offset (x, y) km from the array reference point.
double plane_wave_delay_s(const StationSite& site, double azimuth_deg, double apparent_velocity_km_s);

Waveform synthesize_event(const EventSpec& ev, const ReceiverSpec& rx, const SynthOptions& opt);
// Station-specific variant: arrivals shifted by `delay_s`.
Waveform synthesize_event(const EventSpec& ev, const ReceiverSpec& rx, const SynthOptions& opt, double delay_s,
                          std::string station_id);

std::vector<Waveform> synthesize_array_event(const EventSpec& ev, const ReceiverSpec& rx, const ArrayGeometry& geom,
                                             const SynthOptions& opt);

// Zero-phase (forward-backward) 4th-order Butterworth low-pass applied to one
// channel of a time-major (T x 3) buffer.
void lowpass_zero_phase(std::span<double> samples, std::size_t channel, double corner_hz, double sampling_rate_hz);
void cosine_taper(std::span<double> samples, double fraction);

enum class DatasetMode { Single, Array };
std::string to_string(DatasetMode mode);

struct StationArrival {
  std::string station_id;
  double x_km = 0.0;
  double y_km = 0.0;
  double t_p = 0.0;  // seconds after origin
  double t_s = 0.0;
};

struct EventRecord {
  std::size_t index = 0;
  EventSpec event;
  ReceiverSpec receiver;
  double start_time_s = 0.0;  // trace start after origin
  std::vector<StationArrival> arrivals;
  std::vector<Waveform> stations;
};

struct Dataset {
  DatasetMode mode = DatasetMode::Single;
  SynthOptions options;
  std::vector<EventRecord> events;
};

// Draws event i from a stream seeded by (seed, i). Independent of every
// other event, so generation order and parallelism do not matter.
EventRecord synthesize_dataset_event(std::size_t index, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed);
Dataset synthesize_dataset(std::size_t n_events, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed);

struct DatasetSummary {
  std::size_t n_events = 0;
  std::size_t n_traces = 0;
  std::uint64_t manifest_checksum = 0;
  std::filesystem::path manifest_path;
};

// Writes events/NNNNN.sgwf and manifest.jsonl under `out_dir` (which must
// exist). Throws IoError naming the failing path.
DatasetSummary write_dataset(const Dataset& ds, const std::filesystem::path& out_dir);
DatasetSummary generate_dataset(std::size_t n_events, DatasetMode mode, const SynthOptions& opt, std::uint64_t seed,
                                const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace seismo
