#include <algorithm>

#include "doctest.h"
#include "doawave/doa.hpp"
#include "doawave/error.hpp"
#include "doawave/metrics.hpp"
#include "doawave/simulate.hpp"
#include "scenes.hpp"
#include "support.hpp"

using namespace doawave;
using support::deg;
using support::Gen;
using support::kPi;

TEST_CASE("cyclic error examples") {
  CHECK(cyclic_error_deg(deg(359), deg(1)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(cyclic_error_deg(deg(42), deg(42)) == 0.0);
  CHECK(cyclic_error_deg(deg(200), deg(20)) == doctest::Approx(180.0).epsilon(1e-12));
  CHECK(cyclic_error_deg(deg(10) + 4 * kPi, deg(10)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("cyclic error is symmetric and bounded") {
  Gen gen(1);
  for (int i = 0; i < 10000; ++i) {
    const double a = gen.uniform(-20, 20), b = gen.uniform(-20, 20);
    const double e = cyclic_error_deg(a, b);
    CHECK(e == cyclic_error_deg(b, a));
    CHECK(e >= 0.0);
    CHECK(e <= 180.0);
  }
}

TEST_CASE("permutation-min DOA error examples") {
  const std::vector<double> p{deg(10), deg(148)}, t{deg(148), deg(10)};
  const auto e = permutation_min_doa_error(p, t);
  CHECK(e.mean_deg == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(e.assignment == std::vector<std::size_t>{1, 0});
  const std::vector<double> same{deg(50), deg(148)};
  CHECK(permutation_min_doa_error(same, same).mean_deg == 0.0);
  CHECK_THROWS_AS(permutation_min_doa_error(same, std::vector<double>{0.0}), InvalidArgument);
}

TEST_CASE("permutation-min error never exceeds the identity assignment") {
  Gen gen(2);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 1 + gen.index(4);
    std::vector<double> p(n), t(n);
    double identity = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = gen.uniform(0, 2 * kPi);
      t[k] = gen.uniform(0, 2 * kPi);
      identity += cyclic_error_deg(p[k], t[k]) / static_cast<double>(n);
    }
    const auto e = permutation_min_doa_error(p, t);
    CHECK(e.mean_deg <= identity + 1e-12);
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(e.per_source_deg[k] == cyclic_error_deg(p[e.assignment[k]], t[k]));
      mean += e.per_source_deg[k] / static_cast<double>(n);
    }
    CHECK(e.mean_deg == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("TOPS on a reverberant 50 and 148 degree scene") {
  const std::vector<double> truth{deg(50), deg(148)};
  const auto rec = support::coplanar_mixture(truth, 77, 2.0, 0.4);
  const auto est = pick_peaks(tops_spectrum(stft(rec.mixture), UcaGeometry::uniform(6), angular_grid(1), 2), 2);
  const auto e = permutation_min_doa_error(est.thetas, rec.truth_doas);
  MESSAGE("TOPS errors: " << e.per_source_deg[0] << " deg at 50, " << e.per_source_deg[1] << " deg at 148");
  CHECK(e.mean_deg == doctest::Approx(0.5 * (e.per_source_deg[0] + e.per_source_deg[1])));
}

TEST_CASE("SI-SDR examples") {
  Gen gen(3);
  const auto ref = gen.signal(4000);
  CHECK(si_sdr(ref, ref) == kSiSdrCapDb);
  std::vector<double> twice(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) twice[i] = 2.0 * ref[i];
  CHECK(si_sdr(twice, ref) == si_sdr(ref, ref));

  // Noise orthogonal to the reference with the same energy.
  auto noise = gen.signal(4000);
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += noise[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  for (std::size_t i = 0; i < ref.size(); ++i) noise[i] -= dot / rr * ref[i];
  double nn = 0.0;
  for (double v : noise) nn += v * v;
  std::vector<double> est(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + noise[i] * std::sqrt(rr / nn);
  CHECK(si_sdr(est, ref) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));

  CHECK_THROWS_AS(si_sdr(ref, std::vector<double>(4000, 0.0)), InvalidArgument);
  // Lengths are trimmed to the shorter signal.
  const std::vector<double> longer = [&] {
    auto v = ref;
    v.push_back(5.0);
    return v;
  }();
  CHECK(si_sdr(longer, ref) == kSiSdrCapDb);
}

TEST_CASE("SI-SDR is invariant to positive scaling") {
  Gen gen(4);
  for (int i = 0; i < 100; ++i) {
    const auto ref = gen.signal(500), x = gen.signal(500);
    const double c = gen.uniform(0.01, 100.0);
    std::vector<double> cx(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) cx[k] = c * x[k];
    CHECK(si_sdr(cx, ref) == doctest::Approx(si_sdr(x, ref)).epsilon(1e-12));
  }
}

TEST_CASE("cross-correlation lag") {
  Gen gen(5);
  const auto ref = gen.signal(3000);
  std::vector<double> delayed(3000, 0.0);
  for (std::size_t i = 37; i < 3000; ++i) delayed[i] = 0.5 * ref[i - 37];
  CHECK(best_lag(delayed, ref, 4096) == 37);
  CHECK(best_lag(ref, delayed, 4096) == -37);
  CHECK(best_lag(delayed, ref, 10) != 37);
}

TEST_CASE("separation report baselines") {
  const auto rec = synthesize_mixture(sample_scenario(3, ScenarioRanges::reference_protocol()),
                                      support::dry_signals(2, 3, 1.0), MixOptions{3, 0.0, true});
  std::vector<Waveform> perfect{rec.references[1].channel(1), rec.references[0].channel(1)};
  const auto best = separation_report(perfect, rec);
  CHECK(best.assignment == std::vector<std::size_t>{1, 0});
  CHECK(best.mean_db == kSiSdrCapDb);
  CHECK(best.improvement_db() == doctest::Approx(kSiSdrCapDb - best.mixture_mean_db));

  std::vector<Waveform> mixture{rec.mixture.channel(1), rec.mixture.channel(1)};
  const auto base = separation_report(mixture, rec);
  CHECK(std::abs(base.improvement_db()) < 1e-9);
  CHECK(base.mixture_db == base.per_source_db);

  SeparationReportOptions opt;
  opt.ref_channel = 7;
  CHECK_THROWS_AS(separation_report(perfect, rec, opt), InvalidArgument);
  CHECK_THROWS_AS(separation_report({perfect[0]}, rec), InvalidArgument);
}

TEST_CASE("dry references are aligned before scoring") {
  const auto rec = synthesize_mixture(support::coplanar_scene({deg(20), deg(200)}),
                                      support::dry_signals(2, 4, 1.0));
  // A delayed, scaled copy of each dry signal scores at the cap once aligned.
  std::vector<Waveform> est;
  for (const auto& d : rec.dry) {
    Waveform w{std::vector<double>(d.size(), 0.0), d.sample_rate};
    for (std::size_t i = 93; i < d.size(); ++i) w.samples[i] = 0.3 * d.samples[i - 93];
    est.push_back(w);
  }
  SeparationReportOptions opt;
  opt.reference = ReferenceKind::kDry;
  const auto rep = separation_report(est, rec, opt);
  for (double v : rep.per_source_db) CHECK(v > 25.0);
  SeparationReportOptions no_align = opt;
  no_align.max_lag = 0;
  for (double v : separation_report(est, rec, no_align).per_source_db) CHECK(v < 10.0);
}
