#include <numeric>

#include "doctest.h"
#include "doawave/beamform.hpp"
#include "doawave/error.hpp"
#include "doawave/metrics.hpp"
#include "scenes.hpp"
#include "support.hpp"

using namespace doawave;
using support::cplx;
using support::deg;
using support::Gen;
using support::kPi;

namespace {

const UcaGeometry kGeom = UcaGeometry::uniform(6);

TfMap filled(std::size_t frames, std::size_t bins, double v) { return TfMap(frames, bins, v); }

// Spectrogram whose every cell holds the given per-channel vector function.
template <typename Fn>
MultichannelSpectrogram synthetic_spec(std::size_t frames, std::size_t fft_size, Fn fn) {
  StftConfig cfg;
  cfg.fft_size = fft_size;
  cfg.hop = fft_size / 4;
  MultichannelSpectrogram s(frames, kGeom.num_mics(), cfg, 16000, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < s.num_bins(); ++f) {
      const Eigen::VectorXcd y = fn(t, f, s.frequency(f));
      for (std::size_t m = 0; m < kGeom.num_mics(); ++m) s(t, m, f) = y(static_cast<Eigen::Index>(m));
    }
  }
  return s;
}

Eigen::MatrixXcd naive_scm(const MultichannelSpectrogram& s, std::size_t f, const TfMap* w) {
  const auto m = static_cast<Eigen::Index>(s.num_channels());
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(m, m);
  double total = 0.0;
  for (std::size_t t = 0; t < s.num_frames(); ++t) {
    const double wt = w ? (*w)(t, f) : 1.0;
    total += wt;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        acc(i, j) += wt * s(t, static_cast<std::size_t>(i), f) * std::conj(s(t, static_cast<std::size_t>(j), f));
      }
    }
  }
  return acc / total;
}

// Minimizes b^H phi b subject to G^H b = mu by gradient steps projected onto
// the null space of G^H, starting from the minimum-norm feasible point.
Eigen::VectorXcd projected_gradient_lcmp(const Eigen::MatrixXcd& phi, const Eigen::MatrixXcd& g,
                                         std::size_t n) {
  const auto m = g.rows();
  Eigen::VectorXcd mu = Eigen::VectorXcd::Zero(g.cols());
  mu(static_cast<Eigen::Index>(n)) = 1.0;
  const Eigen::MatrixXcd gram_inv = (g.adjoint() * g).inverse();
  const Eigen::MatrixXcd proj = Eigen::MatrixXcd::Identity(m, m) - g * gram_inv * g.adjoint();
  Eigen::VectorXcd b = g * gram_inv * mu;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(proj * phi * proj);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  for (int it = 0; it < 20000; ++it) b -= step * (proj * (phi * b));
  return b;
}

double power(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& b) { return b.dot(phi * b).real(); }

}  // namespace

TEST_CASE("directional power examples") {
  const double theta = deg(70);
  const auto spec = synthetic_spec(3, 32, [&](std::size_t, std::size_t, double hz) {
    return Eigen::VectorXcd(steering_vector(kGeom, theta, hz));
  });
  const std::vector<double> th{theta};
  const auto a = directional_power(spec, kGeom, th);
  for (double v : a[0].values()) CHECK(v == doctest::Approx(36.0).epsilon(1e-12));

  Gen gen(1);
  const auto rnd = gen.spectrogram(4, 6, 32);
  const auto orth = synthetic_spec(4, 32, [&](std::size_t t, std::size_t f, double hz) {
    const Eigen::VectorXcd d = steering_vector(kGeom, theta, hz);
    const Eigen::VectorXcd y = rnd.observation(t, f);
    return Eigen::VectorXcd(y - d * (d.dot(y) / 6.0));
  });
  const auto orth_power = directional_power(orth, kGeom, th);
  for (double v : orth_power[0].values()) CHECK(std::abs(v) < 1e-20 + 1e-12 * 36);

  auto scaled = rnd;
  const cplx c(1.5, -2.0);
  for (auto& z : scaled.data()) z *= c;
  const auto p1 = directional_power(rnd, kGeom, th), p2 = directional_power(scaled, kGeom, th);
  for (std::size_t i = 0; i < p1[0].values().size(); ++i) {
    CHECK(p2[0].values()[i] == doctest::Approx(std::norm(c) * p1[0].values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("source softmax examples") {
  const auto a = filled(2, 3, 7.0);
  auto nu = source_softmax({a, a});
  for (const auto& v : nu) {
    for (double x : v.values()) CHECK(x == 0.5);
  }
  auto b = filled(2, 3, 7.0 - std::log(4.0));
  nu = source_softmax({a, b});
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(nu[0].values()[i] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(nu[1].values()[i] == doctest::Approx(0.2).epsilon(1e-14));
  }
  // Huge powers do not overflow and shifts leave the result unchanged.
  auto big_a = filled(1, 1, 1e6), big_b = filled(1, 1, 1e6 - std::log(4.0));
  CHECK(source_softmax({big_a, big_b})[0](0, 0) == doctest::Approx(0.8).epsilon(1e-9));
  CHECK_THROWS_AS(source_softmax({a}), InvalidArgument);
  CHECK_THROWS_AS(source_softmax({a, filled(3, 3, 0.0)}), InvalidArgument);
}

TEST_CASE("sparsify examples") {
  auto m = sparsify_mask({filled(1, 1, 0.8), filled(1, 1, 0.2)}, 0.5);
  CHECK(m.values[0](0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.values[1](0, 0) == 0.0);
  m = sparsify_mask({filled(1, 1, 0.5), filled(1, 1, 0.5)}, 0.5);
  CHECK(m.values[0](0, 0) == 0.0);
  CHECK(m.values[1](0, 0) == 0.0);
  m = sparsify_mask({filled(1, 1, 0.3), filled(1, 1, 0.7)}, 0.0);
  CHECK(m.values[0](0, 0) == 0.3);
  CHECK(m.values[1](0, 0) == 0.7);
  CHECK_THROWS_AS(sparsify_mask({filled(1, 1, 0.3), filled(1, 1, 0.7)}, 1.0), InvalidArgument);
}

TEST_CASE("mask algebra properties on random powers") {
  Gen gen(2);
  for (std::size_t n_src : {2u, 3u}) {
    std::vector<TfMap> a(n_src, TfMap(20, 9));
    for (auto& m : a) {
      for (double& v : m.values()) v = gen.uniform(-20, 20);
    }
    const auto nu = source_softmax(a);
    for (std::size_t i = 0; i < 180; ++i) {
      double sum = 0.0;
      for (const auto& v : nu) sum += v.values()[i];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    for (double kappa : {0.0, 0.3, 0.5, 0.7}) {
      const auto l = sparsify_mask(nu, kappa);
      for (std::size_t i = 0; i < 180; ++i) {
        std::size_t active = 0;
        for (const auto& v : l.values) {
          CHECK(v.values()[i] >= 0.0);
          CHECK(v.values()[i] < 1.0);
          if (v.values()[i] > 0.0) ++active;
        }
        if (n_src == 2 && kappa >= 0.5) CHECK(active <= 1);
      }
    }
  }
}

TEST_CASE("input SCM examples") {
  Gen gen(3);
  const auto one = gen.spectrogram(1, 6, 16);
  const auto phi = input_scm(one);
  for (std::size_t f = 0; f < one.num_bins(); ++f) {
    const Eigen::VectorXcd y = one.observation(0, f);
    CHECK((phi.matrices[f] - y * y.adjoint()).norm() <= 1e-14 * y.squaredNorm());
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(phi.matrices[f]);
    CHECK(svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0));
  }
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.hop = 4;
  const MultichannelSpectrogram zero(5, 6, cfg, 16000, 0);
  for (const auto& m : input_scm(zero).matrices) CHECK(m.norm() == 0.0);

  const auto many = gen.spectrogram(200, 6, 16);
  const auto phis = input_scm(many);
  for (std::size_t f = 0; f < many.num_bins(); ++f) {
    const auto oracle = naive_scm(many, f, nullptr);
    CHECK((phis.matrices[f] - oracle).norm() <= 1e-12 * oracle.norm());
    CHECK(support::hermitian_residual(phis.matrices[f]) <= 1e-12);
  }
}

TEST_CASE("masked SCM examples") {
  Gen gen(4);
  const auto spec = gen.spectrogram(50, 6, 16);
  const auto ones = masked_scm(spec, {{filled(50, 9, 1.0), filled(50, 9, 1.0)}});
  const auto plain = input_scm(spec);
  for (std::size_t f = 0; f < 9; ++f) {
    CHECK((ones[0].matrices[f] - plain.matrices[f]).norm() <= 1e-13 * plain.matrices[f].norm());
  }

  TfMap hot(50, 9, 0.0);
  for (std::size_t f = 0; f < 9; ++f) hot(17, f) = 0.3;
  const auto single = masked_scm(spec, {{hot, filled(50, 9, 1.0)}});
  for (std::size_t f = 0; f < 9; ++f) {
    const Eigen::VectorXcd y = spec.observation(17, f);
    CHECK((single[0].matrices[f] - y * y.adjoint()).norm() <= 1e-13 * y.squaredNorm());
  }

  TfMap w0(50, 9), w1(50, 9);
  for (double& v : w0.values()) v = gen.uniform();
  for (double& v : w1.values()) v = gen.uniform() < 0.5 ? 0.0 : gen.uniform();
  const auto scms = masked_scm(spec, {{w0, w1}});
  for (std::size_t f = 0; f < 9; ++f) {
    const auto o0 = naive_scm(spec, f, &w0), o1 = naive_scm(spec, f, &w1);
    CHECK((scms[0].matrices[f] - o0).norm() <= 1e-12 * o0.norm());
    CHECK((scms[1].matrices[f] - o1).norm() <= 1e-12 * o1.norm());
    CHECK(support::hermitian_residual(scms[0].matrices[f]) <= 1e-12);
    CHECK(support::hermitian_residual(scms[1].matrices[f]) <= 1e-12);
  }
}

TEST_CASE("masked SCM falls back to the input SCM for empty masks") {
  Gen gen(5);
  const auto spec = gen.spectrogram(10, 6, 16);
  TfMap empty(10, 9, 0.0);
  for (std::size_t t = 0; t < 10; ++t) empty(t, 3) = 1.0;
  std::size_t fallbacks = 0;
  const auto scms = masked_scm(spec, {{empty, filled(10, 9, 1.0)}}, &fallbacks);
  CHECK(fallbacks == 8);
  const auto plain = input_scm(spec);
  CHECK((scms[0].matrices[0] - plain.matrices[0]).norm() == 0.0);
  CHECK_THROWS_AS(masked_scm(spec, {{filled(9, 9, 1.0), filled(9, 9, 1.0)}}), InvalidArgument);
}

TEST_CASE("interference SCM examples") {
  Gen gen(6);
  const SpatialCovariance a{{gen.psd(6)}}, b{{gen.psd(6)}};
  CHECK((interference_scm({a, b}, 0).matrices[0] - b.matrices[0]).norm() == 0.0);
  CHECK((interference_scm({a, b}, 1).matrices[0] - a.matrices[0]).norm() == 0.0);
  const SpatialCovariance eye{{Eigen::MatrixXcd::Identity(6, 6)}};
  const auto three = interference_scm({a, eye, eye}, 0);
  CHECK((three.matrices[0] - 2.0 * Eigen::MatrixXcd::Identity(6, 6)).norm() == 0.0);
  const auto sum = interference_scm({a, b, a}, 1);
  CHECK(support::hermitian_residual(sum.matrices[0]) <= 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(sum.matrices[0]);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * eig.eigenvalues().maxCoeff());
  CHECK_THROWS_AS(interference_scm({a}, 0), InvalidArgument);
}

TEST_CASE("diagonal loading") {
  Gen gen(7);
  const auto phi = gen.psd(6);
  const auto loaded = diagonal_load(phi, 0.1);
  const double tr = phi.trace().real();
  CHECK((loaded - phi - 0.1 * tr / 6.0 * Eigen::MatrixXcd::Identity(6, 6)).norm() <= 1e-13 * tr);
  CHECK((diagonal_load(Eigen::MatrixXcd::Zero(3, 3)) - Eigen::MatrixXcd::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("LCMP with identity covariance is the minimum-norm solution") {
  const std::vector<double> th{deg(20), deg(130)};
  const auto g = steering_matrix(kGeom, th, 2000.0);
  const Eigen::MatrixXcd phi = Eigen::MatrixXcd::Identity(6, 6);
  for (std::size_t n = 0; n < 2; ++n) {
    Eigen::VectorXcd mu = Eigen::VectorXcd::Zero(2);
    mu(static_cast<Eigen::Index>(n)) = 1.0;
    const Eigen::VectorXcd expected = g * (g.adjoint() * g).inverse() * mu;
    CHECK((lcmp_weights(phi, g, n) - expected).norm() <= 1e-12 * expected.norm());
  }
}

TEST_CASE("LCMP satisfies its constraints and minimizes output power") {
  Gen gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = gen.uniform(0, 2 * kPi);
    const std::vector<double> th{a, a + deg(gen.uniform(30, 180))};
    const auto g = steering_matrix(kGeom, th, gen.uniform(500, 7000));
    const auto phi = gen.psd(6);
    for (std::size_t n = 0; n < 2; ++n) {
      const auto b = lcmp_weights(phi, g, n, 0.0);
      const Eigen::VectorXcd c = g.adjoint() * b;
      CHECK(std::abs(c(static_cast<Eigen::Index>(n)) - 1.0) <= 1e-8);
      CHECK(std::abs(c(static_cast<Eigen::Index>(1 - n))) <= 1e-8);
      if (trial < 10) {
        const auto pg = projected_gradient_lcmp(phi, g, n);
        CHECK(power(phi, b) <= power(phi, pg) * (1 + 1e-9));
        CHECK(power(phi, b) == doctest::Approx(power(phi, pg)).epsilon(1e-6));
      }
      // Any other feasible weight has at least as much output power.
      const Eigen::MatrixXcd proj =
          Eigen::MatrixXcd::Identity(6, 6) - g * (g.adjoint() * g).inverse() * g.adjoint();
      const Eigen::VectorXcd other = b + proj * gen.complex_vector(6);
      CHECK(power(phi, b) <= power(phi, other) * (1 + 1e-12));
    }
  }
}

TEST_CASE("LCMP rejects coincident constraints") {
  const std::vector<double> th{deg(50), deg(50)};
  const auto g = steering_matrix(kGeom, th, 1000.0);
  CHECK_THROWS_AS(lcmp_weights(Eigen::MatrixXcd::Identity(6, 6), g, 0), SingularMatrix);
  CHECK_THROWS_AS(lcmp_weights(Eigen::MatrixXcd::Identity(6, 6), g, 2), InvalidArgument);
}

TEST_CASE("MVDR examples") {
  Gen gen(9);
  const auto d = steering_vector(kGeom, deg(75), 3000.0);
  CHECK((mvdr_weights(Eigen::MatrixXcd::Identity(6, 6), d) - d / 6.0).norm() <= 1e-14);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dn = steering_vector(kGeom, gen.uniform(0, 2 * kPi), gen.uniform(100, 8000));
    const auto b = mvdr_weights(gen.psd(6, gen.index(6) + 1), dn);
    CHECK(std::abs(dn.dot(b) - 1.0) <= 1e-8);
  }
}

TEST_CASE("MVDR steers a null toward a rank-one interferer") {
  const auto dn = steering_vector(kGeom, deg(10), 3000.0);
  const auto di = steering_vector(kGeom, deg(100), 3000.0);
  double previous = 1.0;
  for (double eps : {1e-1, 1e-2, 1e-4, 1e-6}) {
    const Eigen::MatrixXcd phi = di * di.adjoint() + eps * Eigen::MatrixXcd::Identity(6, 6);
    const auto b = mvdr_weights(phi, dn, 0.0);
    // Sherman-Morrison: phi^-1 = (I - di di^H / (eps + M)) / eps.
    const Eigen::VectorXcd w = (dn - di * (di.dot(dn) / (eps + 6.0))) / eps;
    const Eigen::VectorXcd closed = w / dn.dot(w);
    CHECK((b - closed).norm() <= 1e-8 * closed.norm());
    const double ratio = std::norm(di.dot(b)) / std::norm(dn.dot(b));
    CHECK(ratio < previous);
    previous = ratio;
  }
  CHECK(previous < 1e-12);
}

TEST_CASE("MVDR-REF examples") {
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(6, 6);
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(6);
  u(1) = 1.0;
  CHECK((mvdr_ref_weights(eye, eye, 1) - u / 6.0).norm() <= 1e-14);
  const auto d = steering_vector(kGeom, deg(33), 2500.0);
  const Eigen::VectorXcd expected = d * std::conj(d(1)) / 6.0;
  CHECK((mvdr_ref_weights(eye, d * d.adjoint(), 1) - expected).norm() <= 1e-14);
  CHECK_THROWS_AS(mvdr_ref_weights(eye, eye, 6), InvalidArgument);
  CHECK_THROWS_AS(mvdr_ref_weights(eye, Eigen::MatrixXcd::Zero(6, 6), 1), SingularMatrix);
}

TEST_CASE("MVDR-REF matches an explicit matrix evaluation") {
  Gen gen(10);
  for (int trial = 0; trial < 200; ++trial) {
    // Full-rank interference for the first half, rank deficient (conditioned
    // only by the loading) for the second; the bound scales with conditioning.
    const bool full = trial < 100;
    const auto intf = full ? gen.psd(6) : gen.psd(6, gen.index(5) + 1);
    const auto target = gen.psd(6, gen.index(6) + 1);
    const std::size_t ref = gen.index(6);
    const double delta = 1e-6;
    const Eigen::MatrixXcd loaded =
        intf + delta * intf.trace().real() / 6.0 * Eigen::MatrixXcd::Identity(6, 6);
    const Eigen::MatrixXcd c = loaded.inverse() * target;
    const Eigen::VectorXcd expected = c.col(static_cast<Eigen::Index>(ref)) / c.trace();
    const auto b = mvdr_ref_weights(intf, target, ref, delta);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(loaded).eigenvalues();
    const double cond = ev(5) / ev(0);
    const double tol = full ? 1e-10 : 1e-14 * cond;
    CHECK((b - expected).norm() <= tol * expected.norm());
  }
}

TEST_CASE("apply_beamformer selects, is linear and LCMP passes its target") {
  Gen gen(11);
  const auto spec = gen.spectrogram(12, 6, 32);
  BeamformerWeights sel;
  sel.weights.assign(1, std::vector<Eigen::VectorXcd>(spec.num_bins(), Eigen::VectorXcd::Zero(6)));
  for (auto& b : sel.weights[0]) b(4) = 1.0;
  const auto out = apply_beamformer(spec, sel);
  for (std::size_t t = 0; t < 12; ++t) {
    for (std::size_t f = 0; f < spec.num_bins(); ++f) CHECK(out[0](t, 0, f) == spec(t, 4, f));
  }

  BeamformerWeights rnd;
  rnd.weights.assign(2, {});
  for (auto& per : rnd.weights) {
    for (std::size_t f = 0; f < spec.num_bins(); ++f) per.push_back(gen.complex_vector(6));
  }
  const auto other = gen.spectrogram(12, 6, 32);
  auto combo = spec;
  const cplx a(0.3, 1.1), b(-2.0, 0.4);
  for (std::size_t i = 0; i < combo.data().size(); ++i) combo.data()[i] = a * spec.data()[i] + b * other.data()[i];
  const auto ox = apply_beamformer(spec, rnd), oy = apply_beamformer(other, rnd), oz = apply_beamformer(combo, rnd);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < oz[n].data().size(); ++i) {
      CHECK(std::abs(oz[n].data()[i] - (a * ox[n].data()[i] + b * oy[n].data()[i])) <= 1e-12 * (1 + std::abs(oz[n].data()[i])));
    }
  }

  const std::vector<double> th{deg(60), deg(250)};
  std::vector<cplx> s0(40), s1(40);
  for (auto& z : s0) z = gen.complex_normal();
  for (auto& z : s1) z = gen.complex_normal();
  const auto mix = synthetic_spec(40, 64, [&](std::size_t t, std::size_t, double hz) {
    return Eigen::VectorXcd(s0[t] * steering_vector(kGeom, th[0], hz) + s1[t] * steering_vector(kGeom, th[1], hz));
  });
  const auto w = lcmp_beamformer(mix, kGeom, th);
  CHECK(w.fallback_bins == 1);
  const auto sep = apply_beamformer(mix, w);
  for (std::size_t t = 0; t < 40; ++t) {
    for (std::size_t f = 1; f < mix.num_bins(); ++f) {
      CHECK(std::abs(sep[0](t, 0, f) - s0[t]) <= 1e-8);
      CHECK(std::abs(sep[1](t, 0, f) - s1[t]) <= 1e-8);
    }
  }
  const std::vector<double> same{deg(60), deg(60) + 2 * kPi};
  CHECK_THROWS_AS(lcmp_beamformer(mix, kGeom, same), SingularMatrix);
}

TEST_CASE("MVDR with oracle DOAs improves on the mixture in an anechoic room") {
  const std::vector<double> truth{deg(40), deg(160)};
  const auto rec = support::coplanar_mixture(truth, 3, 2.0);
  const auto spec = stft(rec.mixture);
  const auto mask = ilm(spec, kGeom, rec.truth_doas);
  const auto scms = masked_scm(spec, mask);
  const auto out = apply_beamformer(spec, mvdr_beamformer(scms, kGeom, rec.truth_doas, spec));
  std::vector<Waveform> est;
  for (const auto& o : out) est.push_back(istft(o).channel(0));
  // The steering-vector constraint is distortionless at the array center.
  SeparationReportOptions opt;
  opt.reference = ReferenceKind::kCenter;
  const auto report = separation_report(est, rec, opt);
  for (std::size_t n = 0; n < 2; ++n) {
    MESSAGE("source " << n << ": " << report.per_source_db[n] << " dB vs mixture " << report.mixture_db[n] << " dB");
    CHECK(report.per_source_db[n] > report.mixture_db[n]);
  }
}

TEST_CASE("ILM equals the estimated-mask path at the true angles") {
  Gen gen(12);
  const auto spec = gen.spectrogram(30, 6, 32);
  const std::vector<double> truth{deg(15), deg(200)};
  const auto a = ilm(spec, kGeom, truth);
  const auto b = localization_mask(spec, kGeom, truth);
  for (std::size_t n = 0; n < 2; ++n) CHECK(a.values[n].values() == b.values[n].values());

  // Reference construction through the individual stages.
  auto power = directional_power(spec, kGeom, truth);
  for (auto& p : power) {
    for (double& v : p.values()) v *= kMaskAmplitudeScale * kMaskAmplitudeScale;
  }
  const auto c = sparsify_mask(source_softmax(power), kDefaultKappa);
  for (std::size_t n = 0; n < 2; ++n) CHECK(a.values[n].values() == c.values[n].values());

  for (std::size_t i = 0; i < a.values[0].values().size(); ++i) {
    CHECK((a.values[0].values()[i] == 0.0 || a.values[1].values()[i] == 0.0));
  }
}

TEST_CASE("IBM examples") {
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.hop = 4;
  MultichannelSpectrogram r0(6, 2, cfg, 16000, 0), r1(6, 2, cfg, 16000, 0);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t f = 0; f < 9; ++f) ((t + f) % 2 == 0 ? r0 : r1)(t, 1, f) = {1.0, 1.0};
  }
  const auto m = ibm({r0, r1}, 1);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t f = 0; f < 9; ++f) {
      CHECK(m.values[0](t, f) == ((t + f) % 2 == 0 ? 1.0 : 0.0));
      CHECK(m.values[1](t, f) == ((t + f) % 2 == 0 ? 0.0 : 1.0));
    }
  }

  Gen gen(13);
  const auto a = gen.spectrogram(20, 3, 32), b = gen.spectrogram(20, 3, 32), c = gen.spectrogram(20, 3, 32);
  const auto abc = ibm({a, b, c}, 2), bac = ibm({b, a, c}, 2);
  for (std::size_t i = 0; i < abc.values[0].values().size(); ++i) {
    CHECK(abc.values[0].values()[i] + abc.values[1].values()[i] + abc.values[2].values()[i] == 1.0);
    CHECK(abc.values[0].values()[i] == bac.values[1].values()[i]);
    CHECK(abc.values[1].values()[i] == bac.values[0].values()[i]);
  }
  // Ties go to the lowest index.
  const auto tie = ibm({a, a}, 0);
  for (double v : tie.values[0].values()) CHECK(v == 1.0);
  CHECK_THROWS_AS(ibm({a, b}, 3), InvalidArgument);
}

TEST_CASE("beamformer names round trip") {
  for (auto k : {BeamformerKind::kLcmp, BeamformerKind::kMvdr, BeamformerKind::kMvdrRef}) {
    CHECK(parse_beamformer(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_beamformer("gsc"), InvalidArgument);
}
