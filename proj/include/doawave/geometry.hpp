#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace doawave {

inline constexpr double kSpeedOfSound = 343.0;

// Uniform circular array. Mic m sits at angle mic_angles_rad[m] on a circle of
// radius radius_m around the array center; azimuths are measured in the
// array's own frame.
struct UcaGeometry {
  double radius_m = 0.05;
  std::vector<double> mic_angles_rad;
  double speed_of_sound = kSpeedOfSound;

  std::size_t num_mics() const { return mic_angles_rad.size(); }
  void validate() const;

  // psi_m = 2*pi*(m-1)/M.
  static UcaGeometry uniform(std::size_t num_mics, double radius_m = 0.05,
                             double speed_of_sound = kSpeedOfSound);
};

// Signed delay (seconds) between each mic and the array center for a plane
// wave arriving from azimuth theta: tau_m = (r/c) cos(theta - psi_m).
std::vector<double> delays(const UcaGeometry& geom, double theta);

// d(theta, f) with entries exp(j 2 pi f tau_m).
Eigen::VectorXcd steering_vector(const UcaGeometry& geom, double theta, double freq);

// M x N matrix whose n-th column is steering_vector(geom, thetas[n], freq).
Eigen::MatrixXcd steering_matrix(const UcaGeometry& geom, std::span<const double> thetas,
                                 double freq);

double bin_frequency(std::size_t bin, int sample_rate, std::size_t fft_size);

}  // namespace doawave
