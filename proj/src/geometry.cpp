#include "doawave/geometry.hpp"

#include <cmath>
#include <numbers>

#include "doawave/error.hpp"

namespace doawave {

void UcaGeometry::validate() const {
  if (!(radius_m > 0.0)) throw InvalidArgument("geometry: radius must be positive");
  if (!(speed_of_sound > 0.0)) throw InvalidArgument("geometry: speed of sound must be positive");
  if (mic_angles_rad.size() < 2) throw InvalidArgument("geometry: need at least two mics");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t m = 0; m < mic_angles_rad.size(); ++m) {
    const double a = mic_angles_rad[m];
    if (!(a >= 0.0 && a < two_pi)) {
      throw InvalidArgument("geometry: mic angles must lie in [0, 2pi)");
    }
    if (m > 0 && !(a > mic_angles_rad[m - 1])) {
      throw InvalidArgument("geometry: mic angles must be strictly increasing");
    }
  }
}

UcaGeometry UcaGeometry::uniform(std::size_t num_mics, double radius_m, double speed_of_sound) {
  UcaGeometry g;
  g.radius_m = radius_m;
  g.speed_of_sound = speed_of_sound;
  g.mic_angles_rad.resize(num_mics);
  for (std::size_t m = 0; m < num_mics; ++m) {
    g.mic_angles_rad[m] = 2.0 * std::numbers::pi * static_cast<double>(m) /
                          static_cast<double>(num_mics);
  }
  return g;
}

std::vector<double> delays(const UcaGeometry& geom, double theta) {
  const double scale = geom.radius_m / geom.speed_of_sound;
  std::vector<double> tau(geom.num_mics());
  for (std::size_t m = 0; m < tau.size(); ++m) {
    tau[m] = scale * std::cos(theta - geom.mic_angles_rad[m]);
  }
  return tau;
}

Eigen::VectorXcd steering_vector(const UcaGeometry& geom, double theta, double freq) {
  const auto tau = delays(geom, theta);
  Eigen::VectorXcd d(tau.size());
  const double w = 2.0 * std::numbers::pi * freq;
  for (std::size_t m = 0; m < tau.size(); ++m) d(m) = std::polar(1.0, w * tau[m]);
  return d;
}

Eigen::MatrixXcd steering_matrix(const UcaGeometry& geom, std::span<const double> thetas,
                                 double freq) {
  if (thetas.empty()) throw InvalidArgument("steering_matrix: need at least one angle");
  Eigen::MatrixXcd g(geom.num_mics(), thetas.size());
  for (std::size_t n = 0; n < thetas.size(); ++n) {
    g.col(n) = steering_vector(geom, thetas[n], freq);
  }
  return g;
}

double bin_frequency(std::size_t bin, int sample_rate, std::size_t fft_size) {
  return static_cast<double>(bin) * sample_rate / static_cast<double>(fft_size);
}

}  // namespace doawave
