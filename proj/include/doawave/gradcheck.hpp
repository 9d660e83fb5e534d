#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "doawave/beamform.hpp"
#include "doawave/doa.hpp"
#include "doawave/dual.hpp"
#include "doawave/geometry.hpp"
#include "doawave/signals.hpp"

namespace doawave {

// Everything the angle -> steering -> mask -> SCM -> beamformer -> output
// chain needs besides the angles themselves. Per-bin observations and the
// loaded input SCM inverse are cached at construction.
class ChainProblem {
 public:
  struct Options {
    BeamformerKind kind = BeamformerKind::kLcmp;
    double kappa = kDefaultKappa;
    double amplitude_scale = kMaskAmplitudeScale;
    std::size_t ref_channel = 1;
    // Heavier than kDiagonalLoading: with a noise-free input SCM and the
    // slight mismatch between plane-wave steering vectors and the simulated
    // array response, LCMP at 1e-6 cancels the target it is constrained to
    // pass and the loss stops depending on the angles.
    double loading = 1e-2;
    double kink_tol = 1e-6;
  };

  // references[i]: target spectrogram for reference i (channel 0 is used).
  ChainProblem(MultichannelSpectrogram mixture, std::vector<MultichannelSpectrogram> references,
               UcaGeometry geometry, Options options);

  const MultichannelSpectrogram& mixture() const { return mixture_; }
  const std::vector<MultichannelSpectrogram>& references() const { return references_; }
  const UcaGeometry& geometry() const { return geometry_; }
  const Options& options() const { return options_; }
  std::size_t num_sources() const { return references_.size(); }

  const Eigen::MatrixXcd& observations(std::size_t f) const { return observations_[f]; }
  const Eigen::MatrixXcd& input_scm(std::size_t f) const { return input_scm_[f]; }
  const Eigen::MatrixXcd& loaded_input_inverse(std::size_t f) const { return input_inverse_[f]; }

 private:
  MultichannelSpectrogram mixture_;
  std::vector<MultichannelSpectrogram> references_;
  UcaGeometry geometry_;
  Options options_;
  std::vector<Eigen::MatrixXcd> observations_;
  std::vector<Eigen::MatrixXcd> input_scm_;
  std::vector<Eigen::MatrixXcd> input_inverse_;
};

struct ChainLoss {
  // assignment[n] = reference matched to beamformer output n.
  std::vector<std::size_t> assignment;
  double value = 0.0;
};

// sum_n sum_{t,f} |x_n(t,f; theta) - ref_{assignment[n]}(t,f)|^2.
ChainLoss chain_loss(std::span<const double> theta, const ChainProblem& problem,
                     std::span<const std::size_t> assignment);
// Resolves the assignment as the loss-minimizing permutation at theta.
ChainLoss chain_loss(std::span<const double> theta, const ChainProblem& problem);

struct ChainGradient {
  std::vector<double> values;
  double loss = 0.0;
  // Some softmax output sits within kink_tol of kappa, where the ReLU in the
  // mask is not differentiable.
  bool near_kink = false;
};

// Forward-mode derivative, one pass per angle.
ChainGradient grad_analytic(std::span<const double> theta, const ChainProblem& problem,
                            std::span<const std::size_t> assignment);

// Central differences (L(theta + h e_k) - L(theta - h e_k)) / 2h.
std::vector<double> grad_fd(const std::function<double(std::span<const double>)>& loss,
                            std::span<const double> theta, double h = 1e-5);
std::vector<double> grad_fd(std::span<const double> theta, const ChainProblem& problem,
                            std::span<const std::size_t> assignment, double h = 1e-5);

// a(theta) = |d(theta, f)^H y|^2 with its derivative in theta.
DualReal directional_power_dual(const Eigen::VectorXcd& y, const UcaGeometry& geom,
                                DualReal theta, double freq);

struct DescentOptions {
  std::size_t steps = 200;
  // Initial trial step (radians) along the normalized negative gradient.
  double lr = 1e-2;
  double armijo = 1e-4;
  std::size_t max_halvings = 30;
};

struct DescentResult {
  DoaEstimate estimate;
  std::vector<double> loss_history;
  std::vector<std::size_t> assignment;
  std::size_t iterations = 0;
};

// Gradient descent on chain_loss with a backtracking line search. The
// assignment is resolved at theta_init and then frozen.
DescentResult descend_doa(std::span<const double> theta_init, const ChainProblem& problem,
                          const DescentOptions& options = {});

}  // namespace doawave
