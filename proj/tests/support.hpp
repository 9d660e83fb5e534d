#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "doawave/signals.hpp"

namespace support {

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

inline double deg(double d) { return d * kPi / 180.0; }

// Hand-rolled generators on a fixed-seed engine, independent of the library's
// own Rng so that the code under test never supplies its own inputs.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  cplx complex_normal() { return {normal(), normal()}; }

  Eigen::VectorXcd complex_vector(Eigen::Index n) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = complex_normal();
    return v;
  }
  Eigen::MatrixXcd complex_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXcd a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = complex_normal();
    }
    return a;
  }
  // A A^H with A of size m x rank.
  Eigen::MatrixXcd psd(Eigen::Index m, Eigen::Index rank) {
    const Eigen::MatrixXcd a = complex_matrix(m, rank);
    Eigen::MatrixXcd p = a * a.adjoint();
    return 0.5 * (p + p.adjoint());
  }
  Eigen::MatrixXcd psd(Eigen::Index m) { return psd(m, m + 2); }

  std::vector<double> signal(std::size_t n) {
    std::vector<double> x(n);
    for (double& v : x) v = normal();
    return x;
  }
  doawave::MultichannelWaveform multichannel(std::size_t channels, std::size_t n) {
    doawave::MultichannelWaveform w;
    for (std::size_t m = 0; m < channels; ++m) w.channels.push_back(signal(n));
    return w;
  }
  // Spectrogram with independent complex Gaussian entries. The imaginary
  // parts of the DC and Nyquist bins are zeroed as for a real signal.
  doawave::MultichannelSpectrogram spectrogram(std::size_t frames, std::size_t channels,
                                               std::size_t fft_size = 16) {
    doawave::StftConfig cfg;
    cfg.fft_size = fft_size;
    cfg.hop = fft_size / 4;
    doawave::MultichannelSpectrogram s(frames, channels, cfg, doawave::kDefaultSampleRate, 0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t m = 0; m < channels; ++m) {
        for (std::size_t f = 0; f < s.num_bins(); ++f) {
          cplx z = complex_normal();
          if (f == 0 || f + 1 == s.num_bins()) z = {z.real(), 0.0};
          s(t, m, f) = z;
        }
      }
    }
    return s;
  }

 private:
  std::mt19937_64 engine_;
};

// Direct O(N^2) DFT of a real frame, bins 0..N/2.
inline std::vector<cplx> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = -2.0 * kPi * static_cast<double>(k * i % n) / static_cast<double>(n);
      acc += x[i] * cplx(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b,
                          std::size_t lo, std::size_t hi) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

inline double hermitian_residual(const Eigen::MatrixXcd& m) {
  const double n = m.norm();
  return n == 0.0 ? 0.0 : (m - m.adjoint()).norm() / n;
}

}  // namespace support
