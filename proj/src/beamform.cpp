#include "doawave/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "doawave/error.hpp"

namespace doawave {
namespace {

void check_same_shape(const std::vector<TfMap>& maps) {
  if (maps.empty()) throw InvalidArgument("mask: no sources");
  for (const auto& m : maps) {
    if (m.num_frames() != maps.front().num_frames() || m.num_bins() != maps.front().num_bins()) {
      throw InvalidArgument("mask: per-source maps differ in shape");
    }
  }
}

Eigen::MatrixXcd hermitian_part(const Eigen::MatrixXcd& a) { return 0.5 * (a + a.adjoint()); }

}  // namespace

std::string to_string(BeamformerKind k) {
  switch (k) {
    case BeamformerKind::kLcmp: return "lcmp";
    case BeamformerKind::kMvdr: return "mvdr";
    case BeamformerKind::kMvdrRef: return "mvdr-ref";
  }
  return "unknown";
}

BeamformerKind parse_beamformer(const std::string& s) {
  if (s == "lcmp") return BeamformerKind::kLcmp;
  if (s == "mvdr") return BeamformerKind::kMvdr;
  if (s == "mvdr-ref" || s == "mvdr_ref") return BeamformerKind::kMvdrRef;
  throw InvalidArgument("unknown beamformer '" + s + "'");
}

std::vector<TfMap> directional_power(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                                     std::span<const double> thetas) {
  if (thetas.empty()) throw InvalidArgument("directional_power: need at least one angle");
  if (spec.num_channels() != geom.num_mics()) {
    throw InvalidArgument("directional_power: spectrogram channels do not match the array");
  }
  const std::size_t frames = spec.num_frames(), bins = spec.num_bins(), m = spec.num_channels();
  std::vector<TfMap> out(thetas.size(), TfMap(frames, bins));
  for (std::size_t n = 0; n < thetas.size(); ++n) {
    for (std::size_t f = 0; f < bins; ++f) {
      const Eigen::VectorXcd d = steering_vector(geom, thetas[n], spec.frequency(f));
      for (std::size_t t = 0; t < frames; ++t) {
        cplx z = 0.0;
        for (std::size_t c = 0; c < m; ++c) z += std::conj(d(c)) * spec(t, c, f);
        out[n](t, f) = std::norm(z);
      }
    }
  }
  return out;
}

std::vector<TfMap> source_softmax(const std::vector<TfMap>& power) {
  check_same_shape(power);
  if (power.size() < 2) throw InvalidArgument("source_softmax: need at least two sources");
  std::vector<TfMap> nu(power.size(), TfMap(power[0].num_frames(), power[0].num_bins()));
  const std::size_t cells = power[0].values().size();
  for (std::size_t i = 0; i < cells; ++i) {
    double top = power[0].values()[i];
    for (const auto& p : power) top = std::max(top, p.values()[i]);
    double z = 0.0;
    for (std::size_t n = 0; n < power.size(); ++n) {
      nu[n].values()[i] = std::exp(power[n].values()[i] - top);
      z += nu[n].values()[i];
    }
    for (auto& v : nu) v.values()[i] /= z;
  }
  return nu;
}

LocalizationMask sparsify_mask(const std::vector<TfMap>& nu, double kappa) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw InvalidArgument("sparsify_mask: kappa must lie in [0, 1)");
  check_same_shape(nu);
  LocalizationMask mask;
  for (const auto& v : nu) {
    TfMap l(v.num_frames(), v.num_bins());
    for (std::size_t i = 0; i < v.values().size(); ++i) {
      l.values()[i] = std::max(v.values()[i] - kappa, 0.0) / (1.0 - kappa);
    }
    mask.values.push_back(std::move(l));
  }
  return mask;
}

SpatialCovariance input_scm(const MultichannelSpectrogram& spec) {
  SpatialCovariance out;
  const auto frames = static_cast<double>(std::max<std::size_t>(spec.num_frames(), 1));
  for (std::size_t f = 0; f < spec.num_bins(); ++f) {
    const Eigen::MatrixXcd y = spec.bin_observations(f);
    out.matrices.push_back(hermitian_part(y * y.adjoint()) / frames);
  }
  return out;
}

std::vector<SpatialCovariance> masked_scm(const MultichannelSpectrogram& spec,
                                          const LocalizationMask& mask, std::size_t* fallbacks) {
  check_same_shape(mask.values);
  if (mask.values[0].num_frames() != spec.num_frames() ||
      mask.values[0].num_bins() != spec.num_bins()) {
    throw InvalidArgument("masked_scm: mask and spectrogram dimensions differ");
  }
  const std::size_t frames = spec.num_frames();
  std::vector<SpatialCovariance> out(mask.num_sources());
  for (std::size_t f = 0; f < spec.num_bins(); ++f) {
    const Eigen::MatrixXcd y = spec.bin_observations(f);
    Eigen::MatrixXcd unweighted;
    for (std::size_t n = 0; n < mask.num_sources(); ++n) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(frames));
      for (std::size_t t = 0; t < frames; ++t) w(static_cast<Eigen::Index>(t)) = mask.values[n](t, f);
      const double total = w.sum();
      if (total > 0.0) {
        const Eigen::MatrixXcd weighted = y * w.asDiagonal();
        out[n].matrices.push_back(hermitian_part(weighted * y.adjoint()) / total);
      } else {
        if (unweighted.size() == 0) {
          unweighted = hermitian_part(y * y.adjoint()) / static_cast<double>(std::max<std::size_t>(frames, 1));
        }
        out[n].matrices.push_back(unweighted);
        if (fallbacks) ++*fallbacks;
      }
    }
  }
  return out;
}

SpatialCovariance interference_scm(const std::vector<SpatialCovariance>& source_scms, std::size_t n) {
  if (source_scms.size() < 2) throw InvalidArgument("interference_scm: need at least two sources");
  if (n >= source_scms.size()) throw InvalidArgument("interference_scm: source index out of range");
  SpatialCovariance out;
  const std::size_t bins = source_scms[0].num_bins();
  for (std::size_t f = 0; f < bins; ++f) {
    Eigen::MatrixXcd acc;
    for (std::size_t i = 0; i < source_scms.size(); ++i) {
      if (i == n) continue;
      if (acc.size() == 0) {
        acc = source_scms[i].matrices.at(f);
      } else {
        acc += source_scms[i].matrices.at(f);
      }
    }
    out.matrices.push_back(std::move(acc));
  }
  return out;
}

Eigen::MatrixXcd diagonal_load(const Eigen::MatrixXcd& phi, double delta) {
  const auto m = phi.rows();
  const double tr = phi.trace().real();
  Eigen::MatrixXcd out = phi;
  if (tr > 0.0) {
    out.diagonal().array() += delta * tr / static_cast<double>(m);
  } else {
    out.diagonal().array() += 1.0;
  }
  return out;
}

Eigen::VectorXcd lcmp_weights(const Eigen::MatrixXcd& phi_y, const Eigen::MatrixXcd& constraints,
                              std::size_t n, double delta) {
  const auto cols = static_cast<std::size_t>(constraints.cols());
  if (n >= cols) throw InvalidArgument("lcmp_weights: source index out of range");
  const Eigen::MatrixXcd loaded = diagonal_load(phi_y, delta);
  const Eigen::LDLT<Eigen::MatrixXcd> solver(loaded);
  if (solver.info() != Eigen::Success) throw SingularMatrix("lcmp: input SCM not invertible");
  const Eigen::MatrixXcd inv_g = solver.solve(constraints);
  const Eigen::MatrixXcd gram = hermitian_part(constraints.adjoint() * inv_g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 1e-12 * ev(ev.size() - 1))) {
    throw SingularMatrix("lcmp: constraint Gram matrix is singular (coincident steering vectors)");
  }
  Eigen::VectorXcd mu = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(cols));
  mu(static_cast<Eigen::Index>(n)) = 1.0;
  return inv_g * gram.ldlt().solve(mu);
}

Eigen::VectorXcd mvdr_weights(const Eigen::MatrixXcd& phi_intf, const Eigen::VectorXcd& steering,
                              double delta) {
  const Eigen::LDLT<Eigen::MatrixXcd> solver(diagonal_load(phi_intf, delta));
  if (solver.info() != Eigen::Success) throw SingularMatrix("mvdr: interference SCM not invertible");
  const Eigen::VectorXcd w = solver.solve(steering);
  const cplx denom = steering.dot(w);
  if (!(std::isfinite(denom.real()) && denom.real() > 0.0)) {
    throw SingularMatrix("mvdr: numerically singular interference SCM");
  }
  return w / denom;
}

Eigen::VectorXcd mvdr_ref_weights(const Eigen::MatrixXcd& phi_intf, const Eigen::MatrixXcd& phi_n,
                                  std::size_t ref_index, double delta) {
  if (ref_index >= static_cast<std::size_t>(phi_n.cols())) {
    throw InvalidArgument("mvdr_ref: reference channel out of range");
  }
  const Eigen::LDLT<Eigen::MatrixXcd> solver(diagonal_load(phi_intf, delta));
  if (solver.info() != Eigen::Success) throw SingularMatrix("mvdr_ref: interference SCM not invertible");
  const Eigen::MatrixXcd c = solver.solve(phi_n);
  const cplx tr = c.trace();
  const double scale = c.norm();
  if (!(scale > 0.0) || !(std::abs(tr) > 1e-12 * scale)) {
    throw SingularMatrix("mvdr_ref: near-zero trace, degenerate SCMs");
  }
  return c.col(static_cast<Eigen::Index>(ref_index)) / tr;
}

BeamformerWeights lcmp_beamformer(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                                  std::span<const double> thetas, double delta) {
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (std::size_t j = i + 1; j < thetas.size(); ++j) {
      const double d = std::remainder(thetas[i] - thetas[j], 2.0 * std::numbers::pi);
      if (std::fabs(d) < 1e-9) {
        std::ostringstream msg;
        msg << "lcmp: angles " << i << " and " << j << " coincide at "
            << thetas[i] * 180.0 / std::numbers::pi << " deg";
        throw SingularMatrix(msg.str());
      }
    }
  }
  const SpatialCovariance phi = input_scm(spec);
  BeamformerWeights out;
  out.kind = BeamformerKind::kLcmp;
  out.weights.assign(thetas.size(), {});
  for (std::size_t f = 0; f < spec.num_bins(); ++f) {
    const Eigen::MatrixXcd g = steering_matrix(geom, thetas, spec.frequency(f));
    bool degenerate = false;
    for (std::size_t n = 0; n < thetas.size(); ++n) {
      Eigen::VectorXcd b;
      if (!degenerate) {
        try {
          b = lcmp_weights(phi.matrices[f], g, n, delta);
        } catch (const SingularMatrix&) {
          degenerate = true;
          ++out.fallback_bins;
        }
      }
      if (degenerate) b = mvdr_weights(phi.matrices[f], g.col(static_cast<Eigen::Index>(n)), delta);
      out.weights[n].push_back(std::move(b));
    }
  }
  return out;
}

BeamformerWeights mvdr_beamformer(const std::vector<SpatialCovariance>& source_scms,
                                  const UcaGeometry& geom, std::span<const double> thetas,
                                  const MultichannelSpectrogram& spec, double delta) {
  if (source_scms.size() != thetas.size()) {
    throw InvalidArgument("mvdr: number of SCMs and angles differ");
  }
  BeamformerWeights out;
  out.kind = BeamformerKind::kMvdr;
  out.weights.assign(thetas.size(), {});
  for (std::size_t n = 0; n < thetas.size(); ++n) {
    const SpatialCovariance intf = interference_scm(source_scms, n);
    for (std::size_t f = 0; f < intf.num_bins(); ++f) {
      const Eigen::VectorXcd d = steering_vector(geom, thetas[n], spec.frequency(f));
      out.weights[n].push_back(mvdr_weights(intf.matrices[f], d, delta));
    }
  }
  return out;
}

BeamformerWeights mvdr_ref_beamformer(const std::vector<SpatialCovariance>& source_scms,
                                      std::size_t ref_index, double delta) {
  BeamformerWeights out;
  out.kind = BeamformerKind::kMvdrRef;
  out.weights.assign(source_scms.size(), {});
  for (std::size_t n = 0; n < source_scms.size(); ++n) {
    const SpatialCovariance intf = interference_scm(source_scms, n);
    for (std::size_t f = 0; f < intf.num_bins(); ++f) {
      const auto& phi_n = source_scms[n].matrices[f];
      Eigen::VectorXcd b;
      try {
        b = mvdr_ref_weights(intf.matrices[f], phi_n, ref_index, delta);
      } catch (const SingularMatrix&) {
        // Silent bin: pass the reference channel through.
        b = Eigen::VectorXcd::Zero(phi_n.rows());
        b(static_cast<Eigen::Index>(ref_index)) = 1.0;
        ++out.fallback_bins;
      }
      out.weights[n].push_back(std::move(b));
    }
  }
  return out;
}

std::vector<MultichannelSpectrogram> apply_beamformer(const MultichannelSpectrogram& spec,
                                                      const BeamformerWeights& weights) {
  std::vector<MultichannelSpectrogram> out;
  const std::size_t m = spec.num_channels();
  for (const auto& per_bin : weights.weights) {
    if (per_bin.size() != spec.num_bins()) {
      throw InvalidArgument("apply_beamformer: weight bins do not match the spectrogram");
    }
    MultichannelSpectrogram x(spec.num_frames(), 1, spec.config(), spec.sample_rate(),
                              spec.signal_length());
    for (std::size_t f = 0; f < spec.num_bins(); ++f) {
      const Eigen::VectorXcd& b = per_bin[f];
      if (static_cast<std::size_t>(b.size()) != m) {
        throw InvalidArgument("apply_beamformer: weight length does not match channel count");
      }
      for (std::size_t t = 0; t < spec.num_frames(); ++t) {
        cplx acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) acc += std::conj(b(static_cast<Eigen::Index>(c))) * spec(t, c, f);
        x(t, 0, f) = acc;
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

LocalizationMask localization_mask(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                                   std::span<const double> thetas, double kappa,
                                   double amplitude_scale) {
  if (!(amplitude_scale > 0.0)) throw InvalidArgument("localization_mask: scale must be positive");
  auto power = directional_power(spec, geom, thetas);
  const double gain = amplitude_scale * amplitude_scale;
  for (auto& p : power) {
    for (double& v : p.values()) v *= gain;
  }
  return sparsify_mask(source_softmax(power), kappa);
}

LocalizationMask ilm(const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                     std::span<const double> truth_doas, double kappa, double amplitude_scale) {
  return localization_mask(spec, geom, truth_doas, kappa, amplitude_scale);
}

LocalizationMask ibm(const std::vector<MultichannelSpectrogram>& reference_specs,
                     std::size_t ref_channel) {
  if (reference_specs.empty()) throw InvalidArgument("ibm: no references");
  const auto& first = reference_specs.front();
  for (const auto& r : reference_specs) {
    if (r.num_frames() != first.num_frames() || r.num_bins() != first.num_bins()) {
      throw InvalidArgument("ibm: reference spectrograms differ in shape");
    }
    if (ref_channel >= r.num_channels()) throw InvalidArgument("ibm: reference channel out of range");
  }
  LocalizationMask mask;
  mask.values.assign(reference_specs.size(), TfMap(first.num_frames(), first.num_bins()));
  for (std::size_t t = 0; t < first.num_frames(); ++t) {
    for (std::size_t f = 0; f < first.num_bins(); ++f) {
      std::size_t best = 0;
      double best_mag = std::abs(reference_specs[0](t, ref_channel, f));
      for (std::size_t n = 1; n < reference_specs.size(); ++n) {
        const double mag = std::abs(reference_specs[n](t, ref_channel, f));
        if (mag > best_mag) {
          best = n;
          best_mag = mag;
        }
      }
      mask.values[best](t, f) = 1.0;
    }
  }
  return mask;
}

}  // namespace doawave
