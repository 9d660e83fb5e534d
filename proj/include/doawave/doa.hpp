#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "doawave/geometry.hpp"
#include "doawave/signals.hpp"

namespace doawave {

// Discretized azimuth classes: alpha_i = (gamma*i - (gamma-1)/2) * pi/180 for
// i = 1..floor(360/gamma). Stored zero-based.
struct AngularGrid {
  double gamma_deg = 1.0;
  std::vector<double> classes;

  std::size_t size() const { return classes.size(); }
};

AngularGrid angular_grid(double gamma_deg);

struct DoaPosterior {
  // probs[n][i]: probability that source n sits in class i.
  std::vector<std::vector<double>> probs;
};

enum class DoaMethod { kSrp, kMusic, kTops, kOracle, kPosterior };

std::string to_string(DoaMethod m);
DoaMethod parse_doa_method(const std::string& s);

struct DoaEstimate {
  std::vector<double> thetas;
  DoaMethod method = DoaMethod::kSrp;
  // Set when pick_peaks had to fill from the global ranking because there
  // were fewer local maxima than sources.
  bool filled_from_ranking = false;
};

enum class ExpectationMode {
  kPlain,     // sum_i p_i alpha_i, exactly as printed
  kCircular,  // arg(sum_i p_i exp(j alpha_i))
};

DoaEstimate expected_doa(const DoaPosterior& posterior, const AngularGrid& grid,
                         ExpectationMode mode = ExpectationMode::kPlain);

struct SpatialSpectrum {
  AngularGrid grid;
  std::vector<double> scores;
};

struct FrequencyBand {
  double lo_hz = 0.0;
  double hi_hz = 1e12;
};

struct SrpOptions {
  double epsilon = 1e-8;
  FrequencyBand band{};
};

// score(alpha) = sum_{t,f} |d(alpha,f)^H yhat(t,f)|^2, yhat = y / (||y|| + eps).
SpatialSpectrum srp_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                             const AngularGrid& grid, const SrpOptions& options = {});

struct SubspaceOptions {
  FrequencyBand band{300.0, 4000.0};
  double loading = 1e-6;
};

// Incoherent average over the band of 1 / ||E_n^H d(alpha,f)||^2.
SpatialSpectrum music_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                               const AngularGrid& grid, std::size_t n_sources,
                               const SubspaceOptions& options = {});

// Test of orthogonality of projected subspaces. The signal subspace at the
// band-center reference bin is carried to every other bin by the per-angle
// frequency transform, projected off the candidate steering vector and
// tested against that bin's noise subspace. Score is 1 / sigma_min.
SpatialSpectrum tops_spectrum(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                              const AngularGrid& grid, std::size_t n_sources,
                              const SubspaceOptions& options = {});

DoaEstimate pick_peaks(const SpatialSpectrum& spectrum, std::size_t n_sources,
                       double min_separation_deg = 10.0);

// Per source: logits are the max-normalized spectrum scores within
// +-window_deg of the source's peak (-inf elsewhere), posterior is
// softmax(logits / temperature).
DoaPosterior posterior_from_spectrum(const SpatialSpectrum& spectrum, const DoaEstimate& peaks,
                                     double window_deg, double temperature);

struct PosteriorOptions {
  double window_deg = 10.0;
  double temperature = 0.05;
  // Peaks are located on a finer scan than the class grid, so that sources a
  // few classes apart are not merged into a single coarse lobe.
  double seed_gamma_deg = 1.0;
  double min_separation_deg = 10.0;
  SrpOptions srp{};
};

// SRP front-end feeding the posterior: peaks from a fine scan, logits from
// the SRP spectrum on the class grid.
DoaPosterior srp_posterior(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                           const AngularGrid& grid, std::size_t n_sources,
                           const PosteriorOptions& options = {});

// Cyclic angular distance in radians, in [0, pi].
double cyclic_distance_rad(double a, double b);
double wrap_to_2pi(double a);

}  // namespace doawave
