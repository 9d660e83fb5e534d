#include "doawave/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "doawave/error.hpp"
#include "doawave/random.hpp"
#include "fft.hpp"

namespace doawave {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

double cyclic_distance(double a, double b) {
  const double d = std::fabs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

bool inside(const Eigen::Vector3d& p, const Eigen::Vector3d& dims, double margin) {
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] > margin && p[i] < dims[i] - margin)) return false;
  }
  return true;
}

}  // namespace

Eigen::Vector3d Scenario::source_position(std::size_t n) const {
  const auto& s = sources.at(n);
  const double a = s.azimuth_rad + array_rotation_rad;
  return {array_center.x() + s.range_m * std::cos(a),
          array_center.y() + s.range_m * std::sin(a), s.height_m};
}

Eigen::Vector3d Scenario::mic_position(std::size_t m) const {
  const double a = geometry.mic_angles_rad.at(m) + array_rotation_rad;
  return {array_center.x() + geometry.radius_m * std::cos(a),
          array_center.y() + geometry.radius_m * std::sin(a), array_center.z()};
}

std::vector<double> Scenario::truth_doas() const {
  std::vector<double> out;
  out.reserve(sources.size());
  for (std::size_t n = 0; n < sources.size(); ++n) {
    const Eigen::Vector3d p = source_position(n);
    out.push_back(wrap_angle(std::atan2(p.y() - array_center.y(), p.x() - array_center.x()) -
                             array_rotation_rad));
  }
  return out;
}

void ScenarioRanges::validate() const {
  auto check = [](const Interval& i, const char* name) {
    if (!(i.lo <= i.hi) || i.lo < 0.0) {
      throw InvalidArgument(std::string("scenario ranges: invalid interval for ") + name);
    }
  };
  check(t60_s, "t60");
  check(source_range_m, "source range");
  check(source_height_m, "source height");
  check(array_height_m, "array height");
  for (int i = 0; i < 3; ++i) {
    if (!(room_min[i] > 0.0 && room_min[i] <= room_max[i])) {
      throw InvalidArgument("scenario ranges: invalid room dimensions");
    }
  }
  if (num_sources == 0) throw InvalidArgument("scenario ranges: need at least one source");
  if (num_mics < 2) throw InvalidArgument("scenario ranges: need at least two mics");
  if (!(array_radius_m > 0.0)) throw InvalidArgument("scenario ranges: array radius must be positive");
  if (min_separation_deg < 0.0 || min_separation_deg * static_cast<double>(num_sources) >= 360.0) {
    throw InvalidArgument("scenario ranges: minimum separation cannot be met");
  }
}

ScenarioRanges ScenarioRanges::reference_protocol() { return ScenarioRanges{}; }

bool ScenarioRanges::within_reference_protocol() const {
  const ScenarioRanges p = reference_protocol();
  for (int i = 0; i < 3; ++i) {
    if (room_min[i] < p.room_min[i] || room_max[i] > p.room_max[i]) return false;
  }
  return t60_s.lo >= p.t60_s.lo && t60_s.hi <= p.t60_s.hi &&
         source_range_m.lo >= p.source_range_m.lo && source_range_m.hi <= p.source_range_m.hi &&
         std::fabs(array_radius_m - p.array_radius_m) < 1e-12;
}

Scenario sample_scenario(std::uint64_t seed, const ScenarioRanges& ranges) {
  ranges.validate();
  Rng rng(seed);
  Scenario sc;
  sc.seed = seed;
  sc.geometry = UcaGeometry::uniform(ranges.num_mics, ranges.array_radius_m, ranges.speed_of_sound);
  for (int i = 0; i < 3; ++i) sc.room.dims_m[i] = rng.uniform(ranges.room_min[i], ranges.room_max[i]);
  sc.room.t60_s = rng.uniform(ranges.t60_s.lo, ranges.t60_s.hi);

  const double margin = ranges.wall_margin_m;
  const double min_sep = ranges.min_separation_deg * std::numbers::pi / 180.0;
  constexpr int kArrayTries = 200;
  constexpr int kSourceTries = 200;

  for (int a = 0; a < kArrayTries; ++a) {
    const double edge = margin + ranges.array_radius_m;
    for (int i = 0; i < 2; ++i) sc.array_center[i] = rng.uniform(edge, sc.room.dims_m[i] - edge);
    sc.array_center[2] = rng.uniform(ranges.array_height_m.lo, ranges.array_height_m.hi);
    sc.array_rotation_rad = ranges.random_array_rotation ? rng.uniform(0.0, kTwoPi) : 0.0;
    if (!inside(sc.array_center, sc.room.dims_m, margin)) continue;

    sc.sources.clear();
    bool ok = true;
    for (std::size_t n = 0; n < ranges.num_sources && ok; ++n) {
      ok = false;
      for (int s = 0; s < kSourceTries; ++s) {
        SourcePlacement p;
        p.azimuth_rad = rng.uniform(0.0, kTwoPi);
        p.range_m = rng.uniform(ranges.source_range_m.lo, ranges.source_range_m.hi);
        p.height_m = rng.uniform(ranges.source_height_m.lo, ranges.source_height_m.hi);
        bool separated = true;
        for (const auto& q : sc.sources) {
          if (cyclic_distance(p.azimuth_rad, q.azimuth_rad) < min_sep) separated = false;
        }
        if (!separated) continue;
        sc.sources.push_back(p);
        if (inside(sc.source_position(n), sc.room.dims_m, margin)) {
          ok = true;
          break;
        }
        sc.sources.pop_back();
      }
    }
    if (ok) return sc;
  }
  throw Error("sample_scenario: no valid placement found for seed " + std::to_string(seed));
}

double eyring_reflection(const RoomSpec& room) {
  if (!(room.t60_s > 0.0)) return 0.0;
  const auto& d = room.dims_m;
  const double volume = d.x() * d.y() * d.z();
  const double surface = 2.0 * (d.x() * d.y() + d.x() * d.z() + d.y() * d.z());
  const double absorption = 1.0 - std::exp(-0.161 * volume / (surface * room.t60_s));
  return std::sqrt(1.0 - absorption);
}

std::size_t default_max_order(const RoomSpec& room, std::size_t cap) {
  const double beta = eyring_reflection(room);
  if (beta <= 0.0) return 0;
  if (beta >= 1.0) return cap;
  const double order = std::ceil(std::log(1e-3) / std::log(beta));
  return std::min(cap, static_cast<std::size_t>(std::max(order, 0.0)));
}

void add_fractional_impulse(std::vector<double>& taps, double delay_samples, double amp) {
  constexpr long half = static_cast<long>(kSincTaps / 2);
  const long center = std::lround(delay_samples);
  for (long k = center - half; k <= center + half; ++k) {
    if (k < 0 || k >= static_cast<long>(taps.size())) continue;
    const double x = static_cast<double>(k) - delay_samples;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * x / (half + 1)));
    taps[static_cast<std::size_t>(k)] += amp * sinc * window;
  }
}

Rir image_method_rir(const RoomSpec& room, const Eigen::Vector3d& src,
                     const Eigen::Vector3d& mic, std::size_t max_order, int sample_rate,
                     double speed_of_sound) {
  const double beta = eyring_reflection(room);
  const auto& dims = room.dims_m;
  const long order = static_cast<long>(max_order);

  struct Image {
    double delay;
    double amp;
  };
  std::vector<Image> images;
  const double fs_over_c = sample_rate / speed_of_sound;

  for (int u = 0; u <= 1; ++u) {
    for (int v = 0; v <= 1; ++v) {
      for (int w = 0; w <= 1; ++w) {
        for (long nx = -order; nx <= order; ++nx) {
          const long rx = std::labs(nx - u) + std::labs(nx);
          if (rx > order) continue;
          const double x = (1 - 2 * u) * src.x() + 2.0 * nx * dims.x() - mic.x();
          for (long ny = -order; ny <= order; ++ny) {
            const long ry = std::labs(ny - v) + std::labs(ny);
            if (rx + ry > order) continue;
            const double y = (1 - 2 * v) * src.y() + 2.0 * ny * dims.y() - mic.y();
            for (long nz = -order; nz <= order; ++nz) {
              const long rz = std::labs(nz - w) + std::labs(nz);
              const long refl = rx + ry + rz;
              if (refl > order) continue;
              const double z = (1 - 2 * w) * src.z() + 2.0 * nz * dims.z() - mic.z();
              const double dist = std::sqrt(x * x + y * y + z * z);
              const double gain = refl == 0 ? 1.0 : std::pow(beta, static_cast<double>(refl));
              if (gain == 0.0) continue;
              images.push_back({dist * fs_over_c, gain / (4.0 * std::numbers::pi * dist)});
            }
          }
        }
      }
    }
  }

  double max_delay = 0.0;
  for (const auto& im : images) max_delay = std::max(max_delay, im.delay);
  Rir rir;
  rir.sample_rate = sample_rate;
  rir.taps.assign(static_cast<std::size_t>(std::ceil(max_delay)) + kSincTaps / 2 + 2, 0.0);
  for (const auto& im : images) add_fractional_impulse(rir.taps, im.delay, im.amp);
  return rir;
}

MixtureRecord synthesize_mixture(const Scenario& scenario, const std::vector<Waveform>& dry,
                                 const MixOptions& options) {
  const std::size_t n_src = scenario.num_sources();
  if (dry.size() != n_src) {
    throw InvalidArgument("synthesize_mixture: expected " + std::to_string(n_src) +
                          " dry signals, got " + std::to_string(dry.size()));
  }
  if (n_src == 0) throw InvalidArgument("synthesize_mixture: no sources");
  const int fs = dry.front().sample_rate;
  std::size_t len = 0;
  for (const auto& d : dry) {
    d.validate();
    if (d.sample_rate != fs) throw InvalidArgument("synthesize_mixture: sample-rate mismatch");
    len = std::max(len, d.size());
  }

  MixtureRecord rec;
  rec.scenario = scenario;
  rec.truth_doas = scenario.truth_doas();

  auto rms = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(std::max<std::size_t>(x.size(), 1)));
  };
  const double rms0 = rms(dry.front().samples);
  for (std::size_t n = 0; n < n_src; ++n) {
    Waveform w{dry[n].samples, fs};
    w.samples.resize(len, 0.0);
    if (n > 0) {
      const double r = rms(dry[n].samples);
      if (r > 0.0 && rms0 > 0.0) {
        const double g = rms0 / r * std::pow(10.0, options.relative_level_db / 20.0);
        for (double& v : w.samples) v *= g;
      }
    }
    rec.dry.push_back(std::move(w));
  }

  const std::size_t order = default_max_order(scenario.room, options.max_order_cap);
  const std::size_t n_mics = scenario.geometry.num_mics();
  const double c = scenario.geometry.speed_of_sound;

  auto image = [&](std::size_t n, const Eigen::Vector3d& at) {
    const Rir rir = image_method_rir(scenario.room, scenario.source_position(n), at, order, fs, c);
    auto y = detail::convolve(rec.dry[n].samples, rir.taps);
    y.resize(len);
    return y;
  };

  rec.mixture.sample_rate = fs;
  rec.mixture.channels.assign(n_mics, std::vector<double>(len, 0.0));
  for (std::size_t n = 0; n < n_src; ++n) {
    MultichannelWaveform ref;
    ref.sample_rate = fs;
    for (std::size_t m = 0; m < n_mics; ++m) ref.channels.push_back(image(n, scenario.mic_position(m)));
    for (std::size_t m = 0; m < n_mics; ++m) {
      for (std::size_t i = 0; i < len; ++i) rec.mixture.channels[m][i] += ref.channels[m][i];
    }
    rec.references.push_back(std::move(ref));
    if (options.center_references) {
      rec.center_references.push_back({image(n, scenario.array_center), fs});
    }
  }
  return rec;
}

namespace {

// RBJ band-pass (0 dB peak gain).
class Resonator {
 public:
  Resonator(double freq, double q, int fs) {
    const double w0 = 2.0 * std::numbers::pi * freq / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

void render_syllable(std::vector<double>& out, std::size_t start, std::size_t length, Rng& rng,
                     int fs) {
  const bool voiced = rng.uniform() < 0.75;
  const double level = rng.uniform(0.4, 1.0);
  std::vector<double> seg(length, 0.0);
  if (voiced) {
    const double f0_start = rng.uniform(90.0, 220.0);
    const double f0_end = f0_start * rng.uniform(0.85, 1.15);
    Resonator f1(rng.uniform(300.0, 850.0), 6.0, fs);
    Resonator f2(rng.uniform(850.0, 2400.0), 8.0, fs);
    Resonator f3(rng.uniform(2400.0, 3600.0), 10.0, fs);
    double phase = rng.uniform();
    for (std::size_t i = 0; i < length; ++i) {
      const double frac = static_cast<double>(i) / static_cast<double>(length);
      phase += (f0_start + (f0_end - f0_start) * frac) / fs;
      double excitation = 0.05 * rng.normal();
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation += 1.0;
      }
      seg[i] = f1(excitation) + 0.6 * f2(excitation) + 0.3 * f3(excitation);
    }
  } else {
    Resonator band(rng.uniform(2500.0, 6000.0), 2.0, fs);
    for (std::size_t i = 0; i < length; ++i) seg[i] = 0.5 * band(rng.normal());
  }
  for (std::size_t i = 0; i < length && start + i < out.size(); ++i) {
    const double env = std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                static_cast<double>(length));
    out[start + i] += level * env * env * seg[i];
  }
}

}  // namespace

Waveform make_dry_signal(std::uint64_t seed, double duration_s, int sample_rate) {
  if (!(duration_s > 0.0)) throw InvalidArgument("make_dry_signal: duration must be positive");
  if (sample_rate <= 0) throw InvalidArgument("make_dry_signal: sample rate must be positive");
  Rng rng(seed);
  const auto total = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Waveform w{std::vector<double>(total, 0.0), sample_rate};
  auto samples = [&](double sec) { return static_cast<std::size_t>(sec * sample_rate); };

  std::size_t cursor = samples(rng.uniform(0.05, 0.2));
  while (cursor < total) {
    const std::size_t word_end = std::min(total, cursor + samples(rng.uniform(0.3, 0.9)));
    while (cursor < word_end) {
      const std::size_t len = std::min(word_end - cursor, samples(rng.uniform(0.08, 0.25)));
      if (len < 16) break;
      render_syllable(w.samples, cursor, len, rng, sample_rate);
      cursor += len;
    }
    cursor = word_end + samples(rng.uniform(0.12, 0.4));
  }

  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (double& v : w.samples) v /= peak;
  }
  return w;
}

}  // namespace doawave
