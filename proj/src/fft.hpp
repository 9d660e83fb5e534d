#pragma once

// Thin wrappers over Eigen's FFT module. An FFT object is created per call so
// every function here is safe to use from several threads at once.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace doawave::detail {

// One-sided spectrum (n/2 + 1 bins) of a real frame of length n.
inline std::vector<std::complex<double>> rfft(std::span<const double> x) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  return out;
}

// Inverse of rfft; `n` is the frame length.
inline std::vector<double> irfft(std::span<const std::complex<double>> spec,
                                 std::size_t n) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> in(spec.begin(), spec.end());
  std::vector<double> out;
  fft.inv(out, in, static_cast<int>(n));
  return out;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Full linear convolution, length a.size() + b.size() - 1.
inline std::vector<double> convolve(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  auto fa = rfft(pa);
  const auto fb = rfft(pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto out = irfft(fa, n);
  out.resize(out_len);
  return out;
}

}  // namespace doawave::detail
