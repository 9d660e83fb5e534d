#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "doawave/signals.hpp"

namespace doawave {

struct MixtureRecord;

inline constexpr double kSiSdrCapDb = 60.0;

// Absolute cyclic difference in degrees, in [0, 180]. Inputs in radians.
double cyclic_error_deg(double pred, double truth);

struct DoaErrorEntry {
  // assignment[n] = index of the prediction matched to truth n.
  std::vector<std::size_t> assignment;
  std::vector<double> per_source_deg;
  double mean_deg = 0.0;
};

// Exhaustive minimum over assignments of the mean cyclic error.
DoaErrorEntry permutation_min_doa_error(std::span<const double> preds,
                                        std::span<const double> truths);

// Scale-invariant SDR in dB, capped at kSiSdrCapDb. Lengths are trimmed to the
// shorter signal. Throws InvalidArgument for a silent reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
double si_sdr(const Waveform& estimate, const Waveform& reference);

// Lag (in samples) by which `signal` trails `reference`, searched over
// [-max_lag, max_lag] by cross-correlation.
long best_lag(std::span<const double> signal, std::span<const double> reference, long max_lag);

// kImage: reverberant image at the reference channel. kCenter: image at a
// virtual mic in the array center, the distortionless point of the
// steering-vector beamformers. kDry: dry source, aligned by cross-correlation.
// The mixture baseline uses the image at the reference channel for kImage and
// kCenter, the dry source for kDry.
enum class ReferenceKind { kImage, kCenter, kDry };

struct SdrReport {
  // assignment[n] = estimate matched to reference n.
  std::vector<std::size_t> assignment;
  std::vector<double> per_source_db;
  std::vector<double> mixture_db;
  double mean_db = 0.0;
  double mixture_mean_db = 0.0;
  double improvement_db() const { return mean_db - mixture_mean_db; }
};

struct SeparationReportOptions {
  ReferenceKind reference = ReferenceKind::kImage;
  // Zero-based channel for image references and the mixture baseline.
  std::size_t ref_channel = 1;
  long max_lag = 4096;
};

SdrReport separation_report(const std::vector<Waveform>& estimates, const MixtureRecord& record,
                            const SeparationReportOptions& options = {});

}  // namespace doawave
