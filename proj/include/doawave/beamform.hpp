#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doawave/geometry.hpp"
#include "doawave/signals.hpp"

namespace doawave {

// Real T x F tensor (frames outermost).
class TfMap {
 public:
  TfMap() = default;
  TfMap(std::size_t frames, std::size_t bins, double fill = 0.0)
      : frames_(frames), bins_(bins), values_(frames * bins, fill) {}

  std::size_t num_frames() const { return frames_; }
  std::size_t num_bins() const { return bins_; }
  double& operator()(std::size_t t, std::size_t f) { return values_[t * bins_ + f]; }
  double operator()(std::size_t t, std::size_t f) const { return values_[t * bins_ + f]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<double> values_;
};

// One T x F mask per source.
struct LocalizationMask {
  std::vector<TfMap> values;
  std::size_t num_sources() const { return values.size(); }
};

// One M x M Hermitian matrix per frequency bin.
struct SpatialCovariance {
  std::vector<Eigen::MatrixXcd> matrices;
  std::size_t num_bins() const { return matrices.size(); }
};

enum class BeamformerKind { kLcmp, kMvdr, kMvdrRef };

std::string to_string(BeamformerKind k);
BeamformerKind parse_beamformer(const std::string& s);

struct BeamformerWeights {
  BeamformerKind kind = BeamformerKind::kMvdrRef;
  // weights[n][f]: M-vector for source n at bin f.
  std::vector<std::vector<Eigen::VectorXcd>> weights;
  // Bins where the formula was replaced by its degenerate-case fallback.
  std::size_t fallback_bins = 0;
};

// Relative diagonal loading applied before every inversion.
inline constexpr double kDiagonalLoading = 1e-6;
inline constexpr double kDefaultKappa = 0.5;
// The source softmax acts on raw directional power and so depends on the input
// scale. Masks are computed with waveforms in 16-bit integer units.
inline constexpr double kMaskAmplitudeScale = 32768.0;

// a_n(t,f) = |d(theta_n, f)^H y(t,f)|^2.
std::vector<TfMap> directional_power(const MultichannelSpectrogram& spec,
                                     const UcaGeometry& geom, std::span<const double> thetas);

// Softmax across sources at every (t, f).
std::vector<TfMap> source_softmax(const std::vector<TfMap>& power);

// l = ReLU(nu - kappa) / (1 - kappa).
LocalizationMask sparsify_mask(const std::vector<TfMap>& nu, double kappa = kDefaultKappa);

// Phi_y(f) = (1/T) sum_t y y^H.
SpatialCovariance input_scm(const MultichannelSpectrogram& spec);

// Mask-weighted SCM per source. Where a source's mask sums to zero at a bin the
// unweighted input SCM is used instead and `fallbacks` (if given) is bumped.
std::vector<SpatialCovariance> masked_scm(const MultichannelSpectrogram& spec,
                                          const LocalizationMask& mask,
                                          std::size_t* fallbacks = nullptr);

// Sum of the SCMs of every source except n.
SpatialCovariance interference_scm(const std::vector<SpatialCovariance>& source_scms,
                                   std::size_t n);

// Phi + delta * (tr(Phi)/M) I. An all-zero matrix is loaded with the identity.
Eigen::MatrixXcd diagonal_load(const Eigen::MatrixXcd& phi, double delta = kDiagonalLoading);

// Single-bin beamformers. Throw SingularMatrix on degenerate input.
Eigen::VectorXcd lcmp_weights(const Eigen::MatrixXcd& phi_y, const Eigen::MatrixXcd& constraints,
                              std::size_t n, double delta = kDiagonalLoading);
Eigen::VectorXcd mvdr_weights(const Eigen::MatrixXcd& phi_intf, const Eigen::VectorXcd& steering,
                              double delta = kDiagonalLoading);
Eigen::VectorXcd mvdr_ref_weights(const Eigen::MatrixXcd& phi_intf, const Eigen::MatrixXcd& phi_n,
                                  std::size_t ref_index, double delta = kDiagonalLoading);

// Full-band beamformers. At bins where the constraint set degenerates (the DC
// bin, where every steering vector is all ones) LCMP falls back to an MVDR
// toward the target on the input SCM. Throws SingularMatrix when two angles
// coincide.
BeamformerWeights lcmp_beamformer(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                                  std::span<const double> thetas,
                                  double delta = kDiagonalLoading);
BeamformerWeights mvdr_beamformer(const std::vector<SpatialCovariance>& source_scms,
                                  const UcaGeometry& geom, std::span<const double> thetas,
                                  const MultichannelSpectrogram& spec,
                                  double delta = kDiagonalLoading);
// ref_index is zero-based; the default selects the second channel.
BeamformerWeights mvdr_ref_beamformer(const std::vector<SpatialCovariance>& source_scms,
                                      std::size_t ref_index = 1,
                                      double delta = kDiagonalLoading);

// x_n(t,f) = b_n(f)^H y(t,f); one single-channel spectrogram per source.
std::vector<MultichannelSpectrogram> apply_beamformer(const MultichannelSpectrogram& spec,
                                                      const BeamformerWeights& weights);

// sparsify_mask(source_softmax(scale^2 * directional_power)).
LocalizationMask localization_mask(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                                   std::span<const double> thetas, double kappa = kDefaultKappa,
                                   double amplitude_scale = kMaskAmplitudeScale);

// Localization mask computed with the true DOAs.
LocalizationMask ilm(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                     std::span<const double> truth_doas, double kappa = kDefaultKappa,
                     double amplitude_scale = kMaskAmplitudeScale);

// mask_n(t,f) = 1 where source n has the largest reference magnitude at the
// reference channel (ties to the lowest index).
LocalizationMask ibm(const std::vector<MultichannelSpectrogram>& reference_specs,
                     std::size_t ref_channel);

}  // namespace doawave
