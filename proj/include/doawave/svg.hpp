#pragma once

#include <string>
#include <vector>

#include "doawave/beamform.hpp"
#include "doawave/doa.hpp"

namespace doawave {

// Polar plot of a spatial spectrum (radius = score / max score) with radial
// ticks at the given truth and estimate angles (radians).
std::string polar_spectrum_svg(const SpatialSpectrum& spectrum, const std::vector<double>& truth,
                               const std::vector<double>& estimate, const std::string& title);

// Grayscale time-frequency heatmap of a mask in [0, 1]; frequency increases
// upwards.
std::string mask_heatmap_svg(const TfMap& mask, const std::string& title);

}  // namespace doawave
