#include "doawave/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "doawave/error.hpp"

namespace doawave {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Steering vector and its derivative with respect to theta (zero unless
// `seeded`).
void steering_dual(const UcaGeometry& geom, double theta, bool seeded, double freq,
                   Eigen::VectorXcd& value, Eigen::VectorXcd& deriv) {
  const auto m = static_cast<Eigen::Index>(geom.num_mics());
  value.resize(m);
  deriv.resize(m);
  const DualReal th{theta, seeded ? 1.0 : 0.0};
  const double scale = geom.radius_m / geom.speed_of_sound;
  for (Eigen::Index i = 0; i < m; ++i) {
    const DualReal tau = DualReal{scale} * cos(th - DualReal{geom.mic_angles_rad[static_cast<std::size_t>(i)]});
    const DualComplex z = expj(DualReal{kTwoPi * freq} * tau);
    value(i) = z.value();
    deriv(i) = z.deriv();
  }
}

Eigen::MatrixXcd hermitian(const Eigen::MatrixXcd& a) { return 0.5 * (a + a.adjoint()); }

Eigen::MatrixXcd loaded(const Eigen::MatrixXcd& phi, double delta) { return diagonal_load(phi, delta); }

Eigen::MatrixXcd loaded_tangent(const Eigen::MatrixXcd& phi, const Eigen::MatrixXcd& dphi, double delta) {
  Eigen::MatrixXcd out = dphi;
  if (phi.trace().real() > 0.0) {
    out.diagonal().array() += delta * dphi.trace().real() / static_cast<double>(phi.rows());
  }
  return out;
}

// b = w / (d^H w) with w = P d, and its tangent given dw.
void distortionless(const Eigen::VectorXcd& d, const Eigen::VectorXcd& dd, const Eigen::VectorXcd& w,
                    const Eigen::VectorXcd& dw, Eigen::VectorXcd& b, Eigen::VectorXcd& db) {
  const cplx den = d.dot(w);
  const cplx dden = dd.dot(w) + d.dot(dw);
  b = w / den;
  db = dw / den - w * (dden / (den * den));
}

struct Pass {
  double loss = 0.0;
  double dloss = 0.0;
  bool near_kink = false;
};

// One forward pass; the derivative is taken with respect to theta[seed]
// (no derivative when seed is out of range).
Pass forward(std::span<const double> theta, const ChainProblem& problem,
             std::span<const std::size_t> assignment, std::size_t seed) {
  const std::size_t n_src = theta.size();
  if (n_src != problem.num_sources() || assignment.size() != n_src) {
    throw InvalidArgument("chain: angle, reference and assignment counts differ");
  }
  const auto& opt = problem.options();
  const auto& spec = problem.mixture();
  const auto m = static_cast<Eigen::Index>(spec.num_channels());
  const std::size_t frames = spec.num_frames();
  const bool mask_based = opt.kind != BeamformerKind::kLcmp;
  if (mask_based && n_src < 2) throw InvalidArgument("chain: mask-based beamformers need two sources");

  Pass pass;
  std::vector<Eigen::VectorXcd> d(n_src), dd(n_src), b(n_src), db(n_src);
  for (std::size_t f = 0; f < spec.num_bins(); ++f) {
    const double freq = spec.frequency(f);
    const Eigen::MatrixXcd& y = problem.observations(f);
    for (std::size_t n = 0; n < n_src; ++n) steering_dual(problem.geometry(), theta[n], n == seed, freq, d[n], dd[n]);

    if (!mask_based) {
      const Eigen::MatrixXcd& a = problem.loaded_input_inverse(f);
      Eigen::MatrixXcd g(m, static_cast<Eigen::Index>(n_src)), dg(m, static_cast<Eigen::Index>(n_src));
      for (std::size_t n = 0; n < n_src; ++n) {
        g.col(static_cast<Eigen::Index>(n)) = d[n];
        dg.col(static_cast<Eigen::Index>(n)) = dd[n];
      }
      const Eigen::MatrixXcd ag = a * g;
      const Eigen::MatrixXcd dag = a * dg;
      const Eigen::MatrixXcd h = hermitian(g.adjoint() * ag);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h, Eigen::EigenvaluesOnly);
      const auto& ev = eig.eigenvalues();
      if (ev(0) > 1e-12 * ev(ev.size() - 1)) {
        const Eigen::MatrixXcd h_inv = h.inverse();
        const Eigen::MatrixXcd dh = dg.adjoint() * ag + g.adjoint() * dag;
        const Eigen::MatrixXcd dh_inv = -h_inv * dh * h_inv;
        for (std::size_t n = 0; n < n_src; ++n) {
          const auto col = static_cast<Eigen::Index>(n);
          b[n] = ag * h_inv.col(col);
          db[n] = dag * h_inv.col(col) + ag * dh_inv.col(col);
        }
      } else {
        // Degenerate constraint set (the DC bin): MVDR toward the target.
        for (std::size_t n = 0; n < n_src; ++n) distortionless(d[n], dd[n], a * d[n], a * dd[n], b[n], db[n]);
      }
    } else {
      // Localization masks at this bin.
      std::vector<std::vector<DualReal>> mask(n_src, std::vector<DualReal>(frames));
      std::vector<DualReal> power(n_src);
      const double gain = opt.amplitude_scale * opt.amplitude_scale;
      for (std::size_t t = 0; t < frames; ++t) {
        const auto col = static_cast<Eigen::Index>(t);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < n_src; ++n) {
          const cplx z = d[n].dot(y.col(col));
          const cplx dz = dd[n].dot(y.col(col));
          power[n] = {gain * std::norm(z), gain * 2.0 * (std::conj(z) * dz).real()};
          top = std::max(top, power[n].value);
        }
        DualReal z{0.0};
        std::vector<DualReal> e(n_src);
        for (std::size_t n = 0; n < n_src; ++n) {
          e[n] = exp(power[n] - DualReal{top});
          z = z + e[n];
        }
        // Silent frames sit exactly at nu = 1/N but carry no weight; at DC all
        // steering vectors coincide and nu = 1/N for every angle.
        const bool constant = freq == 0.0 || y.col(col).squaredNorm() == 0.0;
        for (std::size_t n = 0; n < n_src; ++n) {
          const DualReal nu = e[n] / z;
          if (!constant && std::fabs(nu.value - opt.kappa) < opt.kink_tol) pass.near_kink = true;
          mask[n][t] = relu(nu - DualReal{opt.kappa}) / DualReal{1.0 - opt.kappa};
        }
      }
      std::vector<Eigen::MatrixXcd> phi(n_src), dphi(n_src);
      for (std::size_t n = 0; n < n_src; ++n) {
        Eigen::VectorXd w(static_cast<Eigen::Index>(frames)), dw(static_cast<Eigen::Index>(frames));
        for (std::size_t t = 0; t < frames; ++t) {
          w(static_cast<Eigen::Index>(t)) = mask[n][t].value;
          dw(static_cast<Eigen::Index>(t)) = mask[n][t].deriv;
        }
        const double s = w.sum();
        if (s > 0.0) {
          const double ds = dw.sum();
          phi[n] = hermitian((y * w.asDiagonal()) * y.adjoint()) / s;
          dphi[n] = (hermitian((y * dw.asDiagonal()) * y.adjoint()) - phi[n] * ds) / s;
        } else {
          phi[n] = problem.input_scm(f);
          dphi[n] = Eigen::MatrixXcd::Zero(m, m);
        }
      }
      for (std::size_t n = 0; n < n_src; ++n) {
        Eigen::MatrixXcd intf = Eigen::MatrixXcd::Zero(m, m), dintf = Eigen::MatrixXcd::Zero(m, m);
        for (std::size_t i = 0; i < n_src; ++i) {
          if (i == n) continue;
          intf += phi[i];
          dintf += dphi[i];
        }
        const Eigen::MatrixXcd lo = loaded(intf, opt.loading);
        const Eigen::MatrixXcd dlo = loaded_tangent(intf, dintf, opt.loading);
        const Eigen::MatrixXcd inv = lo.inverse();
        const Eigen::MatrixXcd dinv = -inv * dlo * inv;
        if (opt.kind == BeamformerKind::kMvdr) {
          distortionless(d[n], dd[n], inv * d[n], dinv * d[n] + inv * dd[n], b[n], db[n]);
        } else {
          const Eigen::MatrixXcd c = inv * phi[n];
          const Eigen::MatrixXcd dc = dinv * phi[n] + inv * dphi[n];
          const cplx tr = c.trace();
          const auto ref = static_cast<Eigen::Index>(opt.ref_channel);
          if (!(c.norm() > 0.0) || !(std::abs(tr) > 1e-12 * c.norm())) {
            b[n] = Eigen::VectorXcd::Zero(m);
            b[n](ref) = 1.0;
            db[n] = Eigen::VectorXcd::Zero(m);
          } else {
            const cplx dtr = dc.trace();
            b[n] = c.col(ref) / tr;
            db[n] = dc.col(ref) / tr - c.col(ref) * (dtr / (tr * tr));
          }
        }
      }
    }

    for (std::size_t n = 0; n < n_src; ++n) {
      const Eigen::RowVectorXcd x = b[n].adjoint() * y;
      const Eigen::RowVectorXcd dx = db[n].adjoint() * y;
      const auto& ref = problem.references()[assignment[n]];
      for (std::size_t t = 0; t < frames; ++t) {
        const cplx e = x(static_cast<Eigen::Index>(t)) - ref(t, 0, f);
        pass.loss += std::norm(e);
        pass.dloss += 2.0 * (std::conj(e) * dx(static_cast<Eigen::Index>(t))).real();
      }
    }
  }
  return pass;
}

constexpr std::size_t kNoSeed = std::numeric_limits<std::size_t>::max();

}  // namespace

ChainProblem::ChainProblem(MultichannelSpectrogram mixture,
                           std::vector<MultichannelSpectrogram> references, UcaGeometry geometry,
                           Options options)
    : mixture_(std::move(mixture)),
      references_(std::move(references)),
      geometry_(std::move(geometry)),
      options_(options) {
  if (references_.empty()) throw InvalidArgument("chain: need at least one reference");
  if (mixture_.num_channels() != geometry_.num_mics()) {
    throw InvalidArgument("chain: mixture channels do not match the array");
  }
  if (options_.ref_channel >= mixture_.num_channels()) {
    throw InvalidArgument("chain: reference channel out of range");
  }
  for (const auto& r : references_) {
    if (r.num_frames() != mixture_.num_frames() || r.num_bins() != mixture_.num_bins()) {
      throw InvalidArgument("chain: reference spectrogram shape differs from the mixture");
    }
  }
  const double frames = static_cast<double>(std::max<std::size_t>(mixture_.num_frames(), 1));
  for (std::size_t f = 0; f < mixture_.num_bins(); ++f) {
    observations_.push_back(mixture_.bin_observations(f));
    input_scm_.push_back(hermitian(observations_.back() * observations_.back().adjoint()) / frames);
    input_inverse_.push_back(loaded(input_scm_.back(), options_.loading).inverse());
  }
}

ChainLoss chain_loss(std::span<const double> theta, const ChainProblem& problem,
                     std::span<const std::size_t> assignment) {
  const Pass p = forward(theta, problem, assignment, kNoSeed);
  return {std::vector<std::size_t>(assignment.begin(), assignment.end()), p.loss};
}

ChainLoss chain_loss(std::span<const double> theta, const ChainProblem& problem) {
  std::vector<std::size_t> perm(theta.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  ChainLoss best;
  best.value = std::numeric_limits<double>::infinity();
  do {
    const ChainLoss l = chain_loss(theta, problem, perm);
    if (l.value < best.value) best = l;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ChainGradient grad_analytic(std::span<const double> theta, const ChainProblem& problem,
                            std::span<const std::size_t> assignment) {
  ChainGradient g;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const Pass p = forward(theta, problem, assignment, k);
    g.values.push_back(p.dloss);
    g.loss = p.loss;
    g.near_kink = g.near_kink || p.near_kink;
  }
  return g;
}

std::vector<double> grad_fd(const std::function<double(std::span<const double>)>& loss,
                            std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw InvalidArgument("grad_fd: step must be positive");
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double up = loss(x);
    x[k] = x0 - h;
    const double down = loss(x);
    x[k] = x0;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

std::vector<double> grad_fd(std::span<const double> theta, const ChainProblem& problem,
                            std::span<const std::size_t> assignment, double h) {
  return grad_fd([&](std::span<const double> x) { return chain_loss(x, problem, assignment).value; },
                 theta, h);
}

DualReal directional_power_dual(const Eigen::VectorXcd& y, const UcaGeometry& geom, DualReal theta,
                                double freq) {
  const double scale = geom.radius_m / geom.speed_of_sound;
  DualComplex acc;
  for (std::size_t m = 0; m < geom.num_mics(); ++m) {
    const DualReal tau = DualReal{scale} * cos(theta - DualReal{geom.mic_angles_rad[m]});
    const DualComplex d = expj(DualReal{kTwoPi * freq} * tau);
    acc = acc + conj(d) * DualComplex(y(static_cast<Eigen::Index>(m)));
  }
  return norm(acc);
}

DescentResult descend_doa(std::span<const double> theta_init, const ChainProblem& problem,
                          const DescentOptions& options) {
  DescentResult res;
  res.assignment = chain_loss(theta_init, problem).assignment;
  std::vector<double> theta(theta_init.begin(), theta_init.end());

  ChainGradient g = grad_analytic(theta, problem, res.assignment);
  double loss = g.loss;
  res.loss_history.push_back(loss);
  for (std::size_t step = 0; step < options.steps; ++step) {
    double gnorm = 0.0;
    for (double v : g.values) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;

    double s = options.lr;
    bool accepted = false;
    std::vector<double> trial(theta.size());
    for (std::size_t h = 0; h <= options.max_halvings; ++h, s *= 0.5) {
      for (std::size_t k = 0; k < theta.size(); ++k) trial[k] = theta[k] - s * g.values[k] / gnorm;
      const double l = chain_loss(trial, problem, res.assignment).value;
      if (l <= loss - options.armijo * s * gnorm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    theta = trial;
    g = grad_analytic(theta, problem, res.assignment);
    loss = g.loss;
    res.loss_history.push_back(loss);
    ++res.iterations;
  }
  res.estimate.method = DoaMethod::kPosterior;
  for (double t : theta) res.estimate.thetas.push_back(wrap_to_2pi(t));
  return res;
}

}  // namespace doawave
