#include "doawave/doa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "doawave/error.hpp"

namespace doawave {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kDeg = kPi / 180.0;

std::vector<std::size_t> band_bins(const MultichannelSpectrogram& spec, const FrequencyBand& band) {
  std::vector<std::size_t> bins;
  for (std::size_t f = 0; f < spec.num_bins(); ++f) {
    const double hz = spec.frequency(f);
    if (hz >= band.lo_hz && hz <= band.hi_hz) bins.push_back(f);
  }
  return bins;
}

void check_inputs(const MultichannelSpectrogram& spec, const UcaGeometry& geom) {
  if (spec.num_frames() == 0 || spec.num_bins() == 0) {
    throw InvalidArgument("doa: empty spectrogram");
  }
  if (spec.num_channels() < 2) throw InvalidArgument("doa: need at least two channels");
  if (spec.num_channels() != geom.num_mics()) {
    throw InvalidArgument("doa: spectrogram channels do not match the array");
  }
}

Eigen::MatrixXcd loaded_scm(const Eigen::MatrixXcd& y, double loading) {
  const auto m = y.rows();
  Eigen::MatrixXcd phi = (y * y.adjoint()) / static_cast<double>(y.cols());
  const double tr = phi.trace().real();
  phi.diagonal().array() += loading * tr / static_cast<double>(m);
  return phi;
}

}  // namespace

double wrap_to_2pi(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

double cyclic_distance_rad(double a, double b) {
  const double d = std::fabs(wrap_to_2pi(a) - wrap_to_2pi(b));
  return std::min(d, kTwoPi - d);
}

std::string to_string(DoaMethod m) {
  switch (m) {
    case DoaMethod::kSrp: return "srp";
    case DoaMethod::kMusic: return "music";
    case DoaMethod::kTops: return "tops";
    case DoaMethod::kOracle: return "oracle";
    case DoaMethod::kPosterior: return "posterior";
  }
  return "unknown";
}

DoaMethod parse_doa_method(const std::string& s) {
  if (s == "srp") return DoaMethod::kSrp;
  if (s == "music") return DoaMethod::kMusic;
  if (s == "tops") return DoaMethod::kTops;
  if (s == "oracle") return DoaMethod::kOracle;
  if (s == "posterior") return DoaMethod::kPosterior;
  throw InvalidArgument("unknown DOA method '" + s + "'");
}

AngularGrid angular_grid(double gamma_deg) {
  if (!(gamma_deg > 0.0)) throw InvalidArgument("angular_grid: gamma must be positive");
  const auto count = static_cast<std::size_t>(std::floor(360.0 / gamma_deg));
  if (count == 0) throw InvalidArgument("angular_grid: gamma leaves no classes");
  AngularGrid grid;
  grid.gamma_deg = gamma_deg;
  grid.classes.resize(count);
  for (std::size_t i = 1; i <= count; ++i) {
    grid.classes[i - 1] =
        ((gamma_deg * static_cast<double>(i)) - ((gamma_deg - 1.0) / 2.0)) * (kPi / 180.0);
  }
  return grid;
}

DoaEstimate expected_doa(const DoaPosterior& posterior, const AngularGrid& grid,
                         ExpectationMode mode) {
  DoaEstimate est;
  est.method = DoaMethod::kPosterior;
  for (const auto& p : posterior.probs) {
    if (p.size() != grid.size()) throw InvalidArgument("expected_doa: posterior/grid size mismatch");
    if (mode == ExpectationMode::kPlain) {
      double theta = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) theta += p[i] * grid.classes[i];
      est.thetas.push_back(theta);
    } else {
      double s = 0.0, c = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        s += p[i] * std::sin(grid.classes[i]);
        c += p[i] * std::cos(grid.classes[i]);
      }
      est.thetas.push_back(wrap_to_2pi(std::atan2(s, c)));
    }
  }
  return est;
}

SpatialSpectrum srp_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                             const AngularGrid& grid, const SrpOptions& options) {
  check_inputs(spec, geom);
  SpatialSpectrum out{grid, std::vector<double>(grid.size(), 0.0)};
  const auto bins = band_bins(spec, options.band);
  for (std::size_t f : bins) {
    Eigen::MatrixXcd y = spec.bin_observations(f);
    for (Eigen::Index t = 0; t < y.cols(); ++t) y.col(t) /= (y.col(t).norm() + options.epsilon);
    const Eigen::MatrixXcd r = y * y.adjoint();
    const double freq = spec.frequency(f);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Eigen::VectorXcd d = steering_vector(geom, grid.classes[i], freq);
      out.scores[i] += std::max(0.0, d.dot(r * d).real());
    }
  }
  return out;
}

SpatialSpectrum music_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                               const AngularGrid& grid, std::size_t n_sources,
                               const SubspaceOptions& options) {
  check_inputs(spec, geom);
  const std::size_t m = geom.num_mics();
  if (n_sources == 0 || n_sources >= m) {
    throw InvalidArgument("music: need 0 < n_sources < number of mics");
  }
  SpatialSpectrum out{grid, std::vector<double>(grid.size(), 0.0)};
  const auto bins = band_bins(spec, options.band);
  std::size_t used = 0;
  for (std::size_t f : bins) {
    const Eigen::MatrixXcd y = spec.bin_observations(f);
    const Eigen::MatrixXcd phi = loaded_scm(y, options.loading);
    if (!(phi.trace().real() > 0.0)) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(phi);
    const Eigen::MatrixXcd noise = eig.eigenvectors().leftCols(static_cast<Eigen::Index>(m - n_sources));
    const double freq = spec.frequency(f);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Eigen::VectorXcd d = steering_vector(geom, grid.classes[i], freq);
      const double denom = (noise.adjoint() * d).squaredNorm();
      out.scores[i] += 1.0 / std::max(denom, 1e-300);
    }
    ++used;
  }
  if (used > 0) {
    for (double& s : out.scores) s /= static_cast<double>(used);
  }
  return out;
}

SpatialSpectrum tops_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                              const AngularGrid& grid, std::size_t n_sources,
                              const SubspaceOptions& options) {
  check_inputs(spec, geom);
  const std::size_t m = geom.num_mics();
  if (n_sources == 0 || n_sources >= m) {
    throw InvalidArgument("tops: need 0 < n_sources < number of mics");
  }
  if (spec.num_frames() < m) {
    throw InvalidArgument("tops: insufficient frames for a subspace estimate (" +
                          std::to_string(spec.num_frames()) + " < " + std::to_string(m) + ")");
  }
  const auto bins = band_bins(spec, options.band);
  if (bins.size() < 2) throw InvalidArgument("tops: need at least two frequency bins in band");

  const double center_hz = 0.5 * (std::max(options.band.lo_hz, spec.frequency(bins.front())) +
                                  std::min(options.band.hi_hz, spec.frequency(bins.back())));
  std::size_t ref = bins.front();
  for (std::size_t f : bins) {
    if (std::fabs(spec.frequency(f) - center_hz) < std::fabs(spec.frequency(ref) - center_hz)) ref = f;
  }

  const auto ns = static_cast<Eigen::Index>(n_sources);
  const auto nm = static_cast<Eigen::Index>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ref_eig(
      loaded_scm(spec.bin_observations(ref), options.loading));
  const Eigen::MatrixXcd signal = ref_eig.eigenvectors().rightCols(ns);
  const double ref_hz = spec.frequency(ref);

  struct BinSubspace {
    double freq;
    Eigen::MatrixXcd noise_projector;
  };
  std::vector<BinSubspace> others;
  for (std::size_t f : bins) {
    if (f == ref) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(
        loaded_scm(spec.bin_observations(f), options.loading));
    const Eigen::MatrixXcd noise = eig.eigenvectors().leftCols(nm - ns);
    others.push_back({spec.frequency(f), noise * noise.adjoint()});
  }

  SpatialSpectrum out{grid, std::vector<double>(grid.size(), 0.0)};
  const Eigen::MatrixXcd identity = Eigen::MatrixXcd::Identity(nm, nm);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXcd d0 = steering_vector(geom, grid.classes[i], ref_hz);
    Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(ns, ns);
    for (const auto& bin : others) {
      const Eigen::VectorXcd di = steering_vector(geom, grid.classes[i], bin.freq);
      const Eigen::VectorXcd shift = di.cwiseProduct(d0.conjugate());
      const Eigen::MatrixXcd moved = shift.asDiagonal() * signal;
      const Eigen::MatrixXcd proj = identity - di * di.adjoint() / di.squaredNorm();
      const Eigen::MatrixXcd u = proj * moved;
      gram += u.adjoint() * bin.noise_projector * u;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
    const double sigma_min_sq = std::max(eig.eigenvalues()(0), 1e-300);
    out.scores[i] = 1.0 / std::sqrt(sigma_min_sq);
  }
  return out;
}

DoaEstimate pick_peaks(const SpatialSpectrum& spectrum, std::size_t n_sources,
                       double min_separation_deg) {
  if (n_sources == 0) throw InvalidArgument("pick_peaks: need at least one source");
  const auto& s = spectrum.scores;
  const std::size_t k = s.size();
  if (k == 0) throw InvalidArgument("pick_peaks: empty spectrum");
  const auto& classes = spectrum.grid.classes;
  const double min_sep = min_separation_deg * kDeg;

  auto ranked = [&](std::vector<std::size_t> idx) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return idx;
  };

  std::vector<std::size_t> maxima;
  for (std::size_t i = 0; i < k; ++i) {
    const double prev = s[(i + k - 1) % k];
    const double next = s[(i + 1) % k];
    if (k == 1 || (s[i] >= prev && s[i] >= next)) maxima.push_back(i);
  }
  std::vector<std::size_t> all(k);
  std::iota(all.begin(), all.end(), std::size_t{0});

  DoaEstimate est;
  std::vector<std::size_t> chosen;
  auto clear_of_chosen = [&](std::size_t i) {
    for (std::size_t c : chosen) {
      if (cyclic_distance_rad(classes[i], classes[c]) <= min_sep + 1e-12) return false;
    }
    return true;
  };
  for (std::size_t i : ranked(maxima)) {
    if (chosen.size() == n_sources) break;
    if (clear_of_chosen(i)) chosen.push_back(i);
  }
  if (chosen.size() < n_sources) {
    est.filled_from_ranking = true;
    for (std::size_t i : ranked(all)) {
      if (chosen.size() == n_sources) break;
      if (clear_of_chosen(i)) chosen.push_back(i);
    }
    for (std::size_t i : ranked(all)) {
      if (chosen.size() == n_sources) break;
      if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
    }
  }
  for (std::size_t i : chosen) est.thetas.push_back(classes[i]);
  return est;
}

DoaPosterior posterior_from_spectrum(const SpatialSpectrum& spectrum, const DoaEstimate& peaks,
                                     double window_deg, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("posterior_from_spectrum: temperature must be positive");
  const auto& s = spectrum.scores;
  const auto& classes = spectrum.grid.classes;
  const double peak_score = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
  const double scale = peak_score > 0.0 ? 1.0 / peak_score : 1.0;
  const double window = window_deg * kDeg + 1e-12;

  DoaPosterior post;
  for (double center : peaks.thetas) {
    std::vector<double> logits(s.size(), -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (cyclic_distance_rad(classes[i], center) <= window) {
        logits[i] = s[i] * scale / temperature;
        top = std::max(top, logits[i]);
      }
    }
    std::vector<double> p(s.size(), 0.0);
    if (!std::isfinite(top)) {
      // Window holds no class; fall back to the nearest class.
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.size(); ++i) {
        if (cyclic_distance_rad(classes[i], center) < cyclic_distance_rad(classes[best], center)) best = i;
      }
      p[best] = 1.0;
    } else {
      double z = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isfinite(logits[i])) {
          p[i] = std::exp(logits[i] - top);
          z += p[i];
        }
      }
      for (double& v : p) v /= z;
    }
    post.probs.push_back(std::move(p));
  }
  return post;
}

DoaPosterior srp_posterior(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                           const AngularGrid& grid, std::size_t n_sources,
                           const PosteriorOptions& options) {
  const auto fine = srp_spectrum(spec, geom, angular_grid(options.seed_gamma_deg), options.srp);
  const auto seeds = pick_peaks(fine, n_sources, options.min_separation_deg);
  const auto coarse = srp_spectrum(spec, geom, grid, options.srp);
  return posterior_from_spectrum(coarse, seeds, options.window_deg, options.temperature);
}

}  // namespace doawave
