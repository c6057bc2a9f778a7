#include "seismogpt/waveform_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "seismogpt/errors.hpp"

namespace seismo {

void write_waveforms(std::ostream& os, std::span<const Waveform> stations) {
  if (stations.empty()) throw ContractError("cannot write an empty station list");
  const double sr = stations.front().sampling_rate_hz;
  const std::size_t t = stations.front().length();
  for (const auto& w : stations) {
    w.validate();
    if (w.sampling_rate_hz != sr || w.length() != t) {
      throw ContractError("all stations in one waveform file must share sampling rate and length");
    }
  }
  binary::put_magic(os, "SGWF");
  binary::put<std::uint32_t>(os, kWaveformFormatVersion);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(stations.size()));
  binary::put<double>(os, sr);
  binary::put<std::uint64_t>(os, t);
  for (const auto& w : stations) {
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(w.station_id.size()));
    os.write(w.station_id.data(), static_cast<std::streamsize>(w.station_id.size()));
    for (double v : w.samples) binary::put<double>(os, v);
  }
}

std::vector<Waveform> read_waveforms(std::istream& is) {
  binary::expect_magic(is, "SGWF");
  const auto version = binary::get<std::uint32_t>(is);
  if (version != kWaveformFormatVersion) {
    throw FormatError("unsupported SGWF version " + std::to_string(version));
  }
  const auto count = binary::get<std::uint32_t>(is);
  const auto sr = binary::get<double>(is);
  const auto t = binary::get<std::uint64_t>(is);
  if (count == 0 || t == 0 || !(sr > 0.0)) throw FormatError("SGWF header describes an empty or invalid trace");
  std::vector<Waveform> out(count);
  for (auto& w : out) {
    const auto len = binary::get<std::uint32_t>(is);
    w.station_id = binary::get_bytes(is, len);
    w.sampling_rate_hz = sr;
    w.samples.resize(t * kComponents);
    for (double& v : w.samples) v = binary::get<double>(is);
  }
  return out;
}

void save_waveforms(const std::filesystem::path& path, std::span<const Waveform> stations) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string(), "cannot open for writing");
  write_waveforms(os, stations);
  if (!os) throw IoError(path.string(), "write failed");
}

std::vector<Waveform> load_waveforms(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string(), "cannot open for reading");
  return read_waveforms(is);
}

Waveform load_waveform_csv(const std::filesystem::path& path, std::string station_id) {
  std::ifstream is(path);
  if (!is) throw IoError(path.string(), "cannot open for reading");
  Waveform w;
  w.station_id = std::move(station_id);
  std::vector<double> times;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    }
    std::istringstream row(line);
    double t, z, n, e;
    if (!(row >> t >> z >> n >> e)) {
      if (times.empty() && w.samples.empty()) continue;  // header
      throw FormatError("malformed CSV row in " + path.string() + ": " + line);
    }
    times.push_back(t);
    w.samples.insert(w.samples.end(), {z, n, e});
  }
  if (times.size() < 2) throw FormatError("CSV waveform needs at least two rows: " + path.string());
  const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  if (!(dt > 0.0)) throw FormatError("CSV time column must increase: " + path.string());
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs((times[i] - times[i - 1]) - dt) > 1e-6 * dt + 1e-9) {
      throw FormatError("CSV time column is not uniformly sampled: " + path.string());
    }
  }
  w.sampling_rate_hz = 1.0 / dt;
  w.start_time_s = times.front();
  return w;
}

std::vector<Waveform> load_any_waveforms(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return {load_waveform_csv(path, path.stem().string())};
  return load_waveforms(path);
}

}  // namespace seismo
