#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "doawave/geometry.hpp"
#include "doawave/signals.hpp"

namespace doawave {

// Shoebox room. A reverberation time of zero denotes an anechoic room.
struct RoomSpec {
  Eigen::Vector3d dims_m{5.0, 5.0, 2.6};
  double t60_s = 0.0;
};

// Source placement relative to the array: azimuth in the array frame,
// horizontal distance from the array center, absolute height.
struct SourcePlacement {
  double azimuth_rad = 0.0;
  double range_m = 2.0;
  double height_m = 1.5;
};

struct Scenario {
  RoomSpec room;
  Eigen::Vector3d array_center{2.5, 2.5, 1.5};
  double array_rotation_rad = 0.0;
  UcaGeometry geometry = UcaGeometry::uniform(6);
  std::vector<SourcePlacement> sources;
  std::uint64_t seed = 0;

  std::size_t num_sources() const { return sources.size(); }
  Eigen::Vector3d source_position(std::size_t n) const;
  Eigen::Vector3d mic_position(std::size_t m) const;
  // Ground-truth azimuths in [0, 2*pi), derived from the positions.
  std::vector<double> truth_doas() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ScenarioRanges {
  Eigen::Vector3d room_min{5.0, 5.0, 2.6};
  Eigen::Vector3d room_max{11.0, 11.0, 3.4};
  Interval t60_s{0.15, 0.5};
  Interval source_range_m{1.5, 3.0};
  Interval source_height_m{1.0, 2.0};
  Interval array_height_m{1.0, 2.0};
  std::size_t num_sources = 2;
  double min_separation_deg = 10.0;
  // Minimum clearance between any source/mic and a wall.
  double wall_margin_m = 0.3;
  std::size_t num_mics = 6;
  double array_radius_m = 0.05;
  double speed_of_sound = kSpeedOfSound;
  bool random_array_rotation = true;

  void validate() const;
  // The ranges used by the reference data protocol (rooms 5x5x2.6 m to
  // 11x11x3.4 m, T60 0.15-0.5 s, sources 1.5-3 m from the array).
  static ScenarioRanges reference_protocol();
  bool within_reference_protocol() const;
};

// Deterministic in (seed, ranges). Throws Error if no valid placement is found
// after a bounded number of retries.
Scenario sample_scenario(std::uint64_t seed, const ScenarioRanges& ranges);

struct Rir {
  std::vector<double> taps;
  int sample_rate = kDefaultSampleRate;
};

// Uniform wall reflection coefficient from Eyring's formula; 0 when t60 <= 0.
double eyring_reflection(const RoomSpec& room);

// Smallest order at which image amplitudes are 60 dB below the direct path
// (wall losses only), capped at `cap`.
std::size_t default_max_order(const RoomSpec& room, std::size_t cap = 17);

inline constexpr std::size_t kSincTaps = 81;

// Adds amp * (Hann-windowed sinc centered at delay_samples) to taps; taps
// falling outside the buffer are dropped.
void add_fractional_impulse(std::vector<double>& taps, double delay_samples, double amp);

// Allen-Berkley image method. Each image with at most max_order reflections
// contributes beta^k / (4 pi d) at delay d / c.
Rir image_method_rir(const RoomSpec& room, const Eigen::Vector3d& src,
                     const Eigen::Vector3d& mic, std::size_t max_order,
                     int sample_rate = kDefaultSampleRate,
                     double speed_of_sound = kSpeedOfSound);

struct MixOptions {
  std::size_t max_order_cap = 17;
  // Level of every source after the first, relative to the first (RMS of the
  // dry signals).
  double relative_level_db = 0.0;
  bool center_references = true;
};

struct MixtureRecord {
  MultichannelWaveform mixture;
  // Reverberant image of each source at every mic.
  std::vector<MultichannelWaveform> references;
  // Reverberant image of each source at a virtual mic in the array center.
  std::vector<Waveform> center_references;
  // Dry source signals after level adjustment.
  std::vector<Waveform> dry;
  std::vector<double> truth_doas;
  Scenario scenario;
};

MixtureRecord synthesize_mixture(const Scenario& scenario, const std::vector<Waveform>& dry,
                                 const MixOptions& options = {});

// Speech-like stand-in for real utterances: syllable bursts of voiced
// (formant-filtered pulse train) and unvoiced (filtered noise) material
// separated by silent pauses. Peak normalized to 1.
Waveform make_dry_signal(std::uint64_t seed, double duration_s,
                         int sample_rate = kDefaultSampleRate);

}  // namespace doawave
