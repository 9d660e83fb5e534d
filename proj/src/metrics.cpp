#include "doawave/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "doawave/error.hpp"
#include "doawave/simulate.hpp"
#include "fft.hpp"

namespace doawave {

double cyclic_error_deg(double pred, double truth) {
  double d = std::fmod(std::fabs(pred - truth) * 180.0 / std::numbers::pi, 360.0);
  return std::min(d, 360.0 - d);
}

DoaErrorEntry permutation_min_doa_error(std::span<const double> preds,
                                        std::span<const double> truths) {
  if (preds.size() != truths.size()) {
    throw InvalidArgument("permutation_min_doa_error: length mismatch");
  }
  if (preds.size() > 8) throw InvalidArgument("permutation_min_doa_error: too many sources");
  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  DoaErrorEntry best;
  best.mean_deg = std::numeric_limits<double>::infinity();
  do {
    std::vector<double> errs;
    double total = 0.0;
    for (std::size_t n = 0; n < truths.size(); ++n) {
      errs.push_back(cyclic_error_deg(preds[perm[n]], truths[n]));
      total += errs.back();
    }
    const double mean = truths.empty() ? 0.0 : total / static_cast<double>(truths.size());
    if (mean < best.mean_deg) best = {perm, errs, mean};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  const std::size_t n = std::min(estimate.size(), reference.size());
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw InvalidArgument("si_sdr: silent reference");
  const double alpha = dot / ref_energy;
  double target = 0.0, distortion = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = alpha * reference[i];
    const double e = s - estimate[i];
    target += s * s;
    distortion += e * e;
  }
  if (!(distortion > 0.0)) return kSiSdrCapDb;
  if (!(target > 0.0)) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / distortion), -kSiSdrCapDb, kSiSdrCapDb);
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(std::span<const double>(estimate.samples), std::span<const double>(reference.samples));
}

long best_lag(std::span<const double> signal, std::span<const double> reference, long max_lag) {
  if (signal.empty() || reference.empty()) return 0;
  // corr[k] = sum_i signal[i + k] * reference[i] via FFT convolution with the
  // time-reversed reference.
  std::vector<double> reversed(reference.rbegin(), reference.rend());
  const auto full = detail::convolve(signal, reversed);
  const long zero = static_cast<long>(reference.size()) - 1;
  long best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (long k = -max_lag; k <= max_lag; ++k) {
    const long idx = zero + k;
    if (idx < 0 || idx >= static_cast<long>(full.size())) continue;
    const double v = full[static_cast<std::size_t>(idx)];
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  return best;
}

namespace {

std::vector<double> shift_left(std::span<const double> x, long lag, std::size_t len) {
  std::vector<double> out(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const long j = static_cast<long>(i) + lag;
    if (j >= 0 && j < static_cast<long>(x.size())) out[i] = x[static_cast<std::size_t>(j)];
  }
  return out;
}

double aligned_si_sdr(std::span<const double> estimate, std::span<const double> reference,
                      const SeparationReportOptions& options) {
  if (options.reference != ReferenceKind::kDry) return si_sdr(estimate, reference);
  const long lag = best_lag(estimate, reference, options.max_lag);
  const auto aligned = shift_left(estimate, lag, reference.size());
  return si_sdr(aligned, reference);
}

}  // namespace

SdrReport separation_report(const std::vector<Waveform>& estimates, const MixtureRecord& record,
                            const SeparationReportOptions& options) {
  const std::size_t n_src = record.truth_doas.size();
  if (estimates.size() != n_src) throw InvalidArgument("separation_report: estimate count mismatch");
  if (options.ref_channel >= record.mixture.num_channels()) {
    throw InvalidArgument("separation_report: reference channel out of range");
  }
  std::vector<std::vector<double>> refs, baseline_refs;
  for (std::size_t n = 0; n < n_src; ++n) {
    switch (options.reference) {
      case ReferenceKind::kImage: refs.push_back(record.references.at(n).channels.at(options.ref_channel)); break;
      case ReferenceKind::kCenter: refs.push_back(record.center_references.at(n).samples); break;
      case ReferenceKind::kDry: refs.push_back(record.dry.at(n).samples); break;
    }
    baseline_refs.push_back(options.reference == ReferenceKind::kDry
                                ? refs.back()
                                : record.references.at(n).channels.at(options.ref_channel));
  }
  for (const auto& e : estimates) {
    const long slack = options.reference == ReferenceKind::kDry ? options.max_lag : 0;
    if (e.size() + static_cast<std::size_t>(slack) < refs.front().size()) {
      throw InvalidArgument("separation_report: estimate shorter than reference");
    }
  }

  // score[e][r]
  std::vector<std::vector<double>> score(n_src, std::vector<double>(n_src));
  for (std::size_t e = 0; e < n_src; ++e) {
    for (std::size_t r = 0; r < n_src; ++r) score[e][r] = aligned_si_sdr(estimates[e].samples, refs[r], options);
  }

  SdrReport rep;
  std::vector<std::size_t> perm(n_src);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n_src; ++r) total += score[perm[r]][r];
    if (total > best_total) {
      best_total = total;
      rep.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (std::size_t r = 0; r < n_src; ++r) rep.per_source_db.push_back(score[rep.assignment[r]][r]);

  const auto& mix = record.mixture.channels.at(options.ref_channel);
  for (std::size_t r = 0; r < n_src; ++r) rep.mixture_db.push_back(aligned_si_sdr(mix, baseline_refs[r], options));

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  rep.mean_db = mean(rep.per_source_db);
  rep.mixture_mean_db = mean(rep.mixture_db);
  return rep;
}

}  // namespace doawave
