#pragma once

// SGWF waveform container (little-endian):
//   "SGWF" | version u32 | station count u32 | sampling_rate_hz f64 | T u64
//   per station: id length u32 | UTF-8 id | T x 3 f64, time-major
// All stations in one file share the sampling rate and length.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seismogpt/waveform.hpp"

namespace seismo {

inline constexpr std::uint32_t kWaveformFormatVersion = 1;

void write_waveforms(std::ostream& os, std::span<const Waveform> stations);
std::vector<Waveform> read_waveforms(std::istream& is);

void save_waveforms(const std::filesystem::path& path, std::span<const Waveform> stations);
std::vector<Waveform> load_waveforms(const std::filesystem::path& path);

// Plain-text import: header optional, columns time, Z, N, E. The sampling
// rate comes from the (uniform) time step.
Waveform load_waveform_csv(const std::filesystem::path& path, std::string station_id = "csv");

// Either format, chosen by extension (.csv, otherwise SGWF).
std::vector<Waveform> load_any_waveforms(const std::filesystem::path& path);

}  // namespace seismo
