#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace doawave {

using cplx = std::complex<double>;

inline constexpr int kDefaultSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  void validate() const;
};

struct MultichannelWaveform {
  std::vector<std::vector<double>> channels;
  int sample_rate = kDefaultSampleRate;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const {
    return channels.empty() ? 0 : channels.front().size();
  }
  Waveform channel(std::size_t m) const { return {channels.at(m), sample_rate}; }
  void validate() const;

  static MultichannelWaveform from_mono(const Waveform& w);
};

enum class WindowType { kHann, kRectangular };

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 128;
  WindowType window = WindowType::kHann;

  std::size_t num_bins() const { return fft_size / 2 + 1; }
  // Throws InvalidArgument unless 0 < hop <= fft_size, fft_size is even and
  // the window overlap-adds to a constant at this hop.
  void validate() const;
  bool satisfies_cola() const;
  std::vector<double> window_samples() const;
  // Constant value of sum_k w[n + k*hop] for a COLA configuration.
  double cola_gain() const;
};

// Complex T x M x F tensor, frames outermost and bins contiguous.
class MultichannelSpectrogram {
 public:
  MultichannelSpectrogram() = default;
  MultichannelSpectrogram(std::size_t frames, std::size_t channels,
                          const StftConfig& cfg, int sample_rate,
                          std::size_t signal_length);

  std::size_t num_frames() const { return frames_; }
  std::size_t num_channels() const { return channels_; }
  std::size_t num_bins() const { return bins_; }
  const StftConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }
  // Length of the time-domain signal the spectrogram was computed from;
  // istft trims its output to this many samples.
  std::size_t signal_length() const { return signal_length_; }

  cplx& operator()(std::size_t t, std::size_t m, std::size_t f) {
    return data_[(t * channels_ + m) * bins_ + f];
  }
  const cplx& operator()(std::size_t t, std::size_t m, std::size_t f) const {
    return data_[(t * channels_ + m) * bins_ + f];
  }

  // y(t, f) for all t as the columns of an M x T matrix.
  Eigen::MatrixXcd bin_observations(std::size_t f) const;
  Eigen::VectorXcd observation(std::size_t t, std::size_t f) const;
  double frequency(std::size_t f) const;

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

  // Single-channel spectrogram holding channel m.
  MultichannelSpectrogram select_channel(std::size_t m) const;

 private:
  std::size_t frames_ = 0;
  std::size_t channels_ = 0;
  std::size_t bins_ = 0;
  StftConfig cfg_{};
  int sample_rate_ = kDefaultSampleRate;
  std::size_t signal_length_ = 0;
  std::vector<cplx> data_;
};

// Phase values in [0, 2*pi), laid out like the spectrogram.
struct PhaseSpectrum {
  std::size_t frames = 0;
  std::size_t channels = 0;
  std::size_t bins = 0;
  std::vector<double> data;

  double operator()(std::size_t t, std::size_t m, std::size_t f) const {
    return data[(t * channels + m) * bins + f];
  }
};

// Number of frames for a signal of `length` samples: frames start every hop
// samples and the final partial frame is zero padded.
std::size_t frame_count(std::size_t length, const StftConfig& cfg);

MultichannelSpectrogram stft(const MultichannelWaveform& wave,
                             const StftConfig& cfg = {});
MultichannelWaveform istft(const MultichannelSpectrogram& spec);
PhaseSpectrum phase(const MultichannelSpectrogram& spec);

// Argument of z mapped to [0, 2*pi); arg(0) is 0.
double wrapped_arg(cplx z);

}  // namespace doawave
