#include "doawave/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "doawave/error.hpp"
#include "fft.hpp"

namespace doawave {

void Waveform::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("waveform: sample_rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw InvalidArgument("waveform: non-finite sample");
  }
}

void MultichannelWaveform::validate() const {
  if (channels.empty()) throw InvalidArgument("waveform: no channels");
  if (sample_rate <= 0) throw InvalidArgument("waveform: sample_rate must be positive");
  const std::size_t n = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != n) throw InvalidArgument("waveform: channels differ in length");
    for (double s : ch) {
      if (!std::isfinite(s)) throw InvalidArgument("waveform: non-finite sample");
    }
  }
}

MultichannelWaveform MultichannelWaveform::from_mono(const Waveform& w) {
  return {{w.samples}, w.sample_rate};
}

std::vector<double> StftConfig::window_samples() const {
  std::vector<double> w(fft_size, 1.0);
  if (window == WindowType::kHann) {
    // Periodic Hann.
    const double n = static_cast<double>(fft_size);
    for (std::size_t i = 0; i < fft_size; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
    }
  }
  return w;
}

namespace {

std::vector<double> overlap_sums(const StftConfig& cfg) {
  const auto w = cfg.window_samples();
  std::vector<double> sums(cfg.hop, 0.0);
  for (std::size_t n = 0; n < cfg.hop; ++n) {
    for (std::size_t i = n; i < cfg.fft_size; i += cfg.hop) sums[n] += w[i];
  }
  return sums;
}

}  // namespace

bool StftConfig::satisfies_cola() const {
  if (hop == 0 || hop > fft_size) return false;
  const auto sums = overlap_sums(*this);
  const auto [lo, hi] = std::minmax_element(sums.begin(), sums.end());
  return *lo > 0.0 && (*hi - *lo) <= 1e-10 * *hi;
}

double StftConfig::cola_gain() const {
  const auto sums = overlap_sums(*this);
  return sums.front();
}

void StftConfig::validate() const {
  if (fft_size < 2 || fft_size % 2 != 0) {
    throw InvalidArgument("stft: fft_size must be even and >= 2, got " +
                          std::to_string(fft_size));
  }
  if (hop == 0 || hop > fft_size) {
    throw InvalidArgument("stft: hop must satisfy 0 < hop <= fft_size");
  }
  if (!satisfies_cola()) {
    throw InvalidArgument("stft: window does not overlap-add to a constant at hop " +
                          std::to_string(hop));
  }
}

MultichannelSpectrogram::MultichannelSpectrogram(std::size_t frames,
                                                 std::size_t channels,
                                                 const StftConfig& cfg,
                                                 int sample_rate,
                                                 std::size_t signal_length)
    : frames_(frames),
      channels_(channels),
      bins_(cfg.num_bins()),
      cfg_(cfg),
      sample_rate_(sample_rate),
      signal_length_(signal_length),
      data_(frames * channels * cfg.num_bins()) {}

Eigen::MatrixXcd MultichannelSpectrogram::bin_observations(std::size_t f) const {
  Eigen::MatrixXcd y(channels_, frames_);
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t m = 0; m < channels_; ++m) y(m, t) = (*this)(t, m, f);
  }
  return y;
}

Eigen::VectorXcd MultichannelSpectrogram::observation(std::size_t t, std::size_t f) const {
  Eigen::VectorXcd y(channels_);
  for (std::size_t m = 0; m < channels_; ++m) y(m) = (*this)(t, m, f);
  return y;
}

double MultichannelSpectrogram::frequency(std::size_t f) const {
  return static_cast<double>(f) * sample_rate_ / static_cast<double>(cfg_.fft_size);
}

MultichannelSpectrogram MultichannelSpectrogram::select_channel(std::size_t m) const {
  MultichannelSpectrogram out(frames_, 1, cfg_, sample_rate_, signal_length_);
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t f = 0; f < bins_; ++f) out(t, 0, f) = (*this)(t, m, f);
  }
  return out;
}

std::size_t frame_count(std::size_t length, const StftConfig& cfg) {
  if (length < cfg.fft_size) return 0;
  return 1 + (length - cfg.fft_size + cfg.hop - 1) / cfg.hop;
}

MultichannelSpectrogram stft(const MultichannelWaveform& wave, const StftConfig& cfg) {
  cfg.validate();
  wave.validate();
  const std::size_t len = wave.num_samples();
  if (len < cfg.fft_size) {
    throw InputTooShort("stft: input too short (" + std::to_string(len) +
                        " samples, need at least " + std::to_string(cfg.fft_size) + ")");
  }
  const std::size_t frames = frame_count(len, cfg);
  const auto win = cfg.window_samples();
  MultichannelSpectrogram spec(frames, wave.num_channels(), cfg, wave.sample_rate, len);

  std::vector<double> frame(cfg.fft_size);
  for (std::size_t m = 0; m < wave.num_channels(); ++m) {
    const auto& x = wave.channels[m];
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t start = t * cfg.hop;
      for (std::size_t i = 0; i < cfg.fft_size; ++i) {
        const std::size_t n = start + i;
        frame[i] = n < len ? x[n] * win[i] : 0.0;
      }
      const auto bins = detail::rfft(frame);
      for (std::size_t f = 0; f < bins.size(); ++f) spec(t, m, f) = bins[f];
    }
  }
  return spec;
}

MultichannelWaveform istft(const MultichannelSpectrogram& spec) {
  const StftConfig& cfg = spec.config();
  cfg.validate();
  const std::size_t n_fft = cfg.fft_size;
  const std::size_t frames = spec.num_frames();
  const std::size_t ola_len = frames == 0 ? 0 : (frames - 1) * cfg.hop + n_fft;
  const double gain = cfg.cola_gain();
  const std::size_t out_len = spec.signal_length() > 0 ? spec.signal_length() : ola_len;

  MultichannelWaveform out;
  out.sample_rate = spec.sample_rate();
  out.channels.assign(spec.num_channels(), std::vector<double>(out_len, 0.0));

  std::vector<cplx> bins(spec.num_bins());
  for (std::size_t m = 0; m < spec.num_channels(); ++m) {
    std::vector<double> acc(std::max(ola_len, out_len), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < bins.size(); ++f) bins[f] = spec(t, m, f);
      const auto frame = detail::irfft(bins, n_fft);
      const std::size_t start = t * cfg.hop;
      for (std::size_t i = 0; i < n_fft; ++i) acc[start + i] += frame[i];
    }
    for (std::size_t n = 0; n < out_len; ++n) out.channels[m][n] = acc[n] / gain;
  }
  return out;
}

double wrapped_arg(cplx z) {
  if (z == cplx(0.0, 0.0)) return 0.0;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::atan2(z.imag(), z.real());
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a = 0.0;
  return a;
}

PhaseSpectrum phase(const MultichannelSpectrogram& spec) {
  PhaseSpectrum p;
  p.frames = spec.num_frames();
  p.channels = spec.num_channels();
  p.bins = spec.num_bins();
  p.data.reserve(spec.data().size());
  for (const cplx& z : spec.data()) p.data.push_back(wrapped_arg(z));
  return p;
}

}  // namespace doawave
