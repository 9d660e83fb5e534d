#include <algorithm>
#include <array>

#include "doctest.h"
#include "doawave/error.hpp"
#include "doawave/simulate.hpp"
#include "support.hpp"

using namespace doawave;
using support::kPi;

namespace {

constexpr int kFs = 16000;
// Distance covered by sound in one sample.
constexpr double kSampleMetres = kSpeedOfSound / kFs;

std::size_t argmax_abs(const std::vector<double>& x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  }
  return best;
}

// Peak position refined by a parabola through the three samples around it.
double refined_peak(const std::vector<double>& x) {
  const std::size_t k = argmax_abs(x);
  if (k == 0 || k + 1 >= x.size()) return static_cast<double>(k);
  const double a = x[k - 1], b = x[k], c = x[k + 1];
  return static_cast<double>(k) + 0.5 * (a - c) / (a - 2.0 * b + c);
}

Scenario anechoic_scene(std::vector<SourcePlacement> sources) {
  Scenario sc;
  sc.room.dims_m = {8.0, 8.0, 3.0};
  sc.room.t60_s = 0.0;
  sc.array_center = {4.0, 4.0, 1.5};
  sc.sources = std::move(sources);
  return sc;
}

}  // namespace

TEST_CASE("sample_scenario is deterministic in the seed") {
  const auto ranges = ScenarioRanges::reference_protocol();
  const auto a = sample_scenario(42, ranges), b = sample_scenario(42, ranges);
  CHECK(a.room.dims_m == b.room.dims_m);
  CHECK(a.room.t60_s == b.room.t60_s);
  CHECK(a.array_center == b.array_center);
  CHECK(a.array_rotation_rad == b.array_rotation_rad);
  REQUIRE(a.sources.size() == b.sources.size());
  for (std::size_t n = 0; n < a.sources.size(); ++n) {
    CHECK(a.sources[n].azimuth_rad == b.sources[n].azimuth_rad);
    CHECK(a.sources[n].range_m == b.sources[n].range_m);
    CHECK(a.sources[n].height_m == b.sources[n].height_m);
  }
  const auto c = sample_scenario(43, ranges);
  CHECK(c.room.dims_m != a.room.dims_m);
}

TEST_CASE("sampled scenarios stay within the protocol ranges") {
  const auto ranges = ScenarioRanges::reference_protocol();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto sc = sample_scenario(seed, ranges);
    for (int i = 0; i < 3; ++i) {
      CHECK(sc.room.dims_m[i] >= ranges.room_min[i]);
      CHECK(sc.room.dims_m[i] <= ranges.room_max[i]);
    }
    CHECK(sc.room.t60_s >= 0.15);
    CHECK(sc.room.t60_s <= 0.5);
    REQUIRE(sc.num_sources() == 2);
    for (std::size_t n = 0; n < 2; ++n) {
      CHECK(sc.sources[n].range_m >= 1.5);
      CHECK(sc.sources[n].range_m <= 3.0);
      const auto p = sc.source_position(n);
      for (int i = 0; i < 3; ++i) {
        CHECK(p[i] > ranges.wall_margin_m);
        CHECK(p[i] < sc.room.dims_m[i] - ranges.wall_margin_m);
      }
    }
    const auto doas = sc.truth_doas();
    double sep = std::abs(doas[0] - doas[1]);
    sep = std::min(sep, 2 * kPi - sep);
    CHECK(sep >= support::deg(ranges.min_separation_deg) - 1e-9);
  }
}

TEST_CASE("protocol range check") {
  auto ranges = ScenarioRanges::reference_protocol();
  CHECK(ranges.within_reference_protocol());
  ranges.t60_s = {0.0, 0.0};
  CHECK_FALSE(ranges.within_reference_protocol());
  ranges = ScenarioRanges::reference_protocol();
  ranges.room_max = {12.0, 11.0, 3.4};
  CHECK_FALSE(ranges.within_reference_protocol());
  ranges = ScenarioRanges::reference_protocol();
  ranges.min_separation_deg = 200.0;
  CHECK_THROWS_AS(sample_scenario(1, ranges), InvalidArgument);
}

TEST_CASE("order-zero rir is the direct path") {
  RoomSpec room{{8.0, 8.0, 3.0}, 0.4};
  const Eigen::Vector3d mic{4.0, 4.0, 1.5};
  const double d = 100 * kSampleMetres;
  const Eigen::Vector3d src = mic + Eigen::Vector3d{d, 0.0, 0.0};
  const auto rir = image_method_rir(room, src, mic, 0);
  const double amp = 1.0 / (4.0 * kPi * d);
  for (std::size_t i = 0; i < rir.taps.size(); ++i) {
    if (i == 100) {
      CHECK(rir.taps[i] == doctest::Approx(amp).epsilon(1e-12));
    } else {
      CHECK(std::abs(rir.taps[i]) < 1e-12 * amp);
    }
  }

  const Eigen::Vector3d far = mic + Eigen::Vector3d{2.0 * d, 0.0, 0.0};
  const auto rir2 = image_method_rir({{12.0, 8.0, 3.0}, 0.0}, far, mic, 0);
  CHECK(rir2.taps[200] == doctest::Approx(0.5 * rir.taps[100]).epsilon(1e-12));
}

TEST_CASE("fractional direct-path delay lands within half a sample") {
  support::Gen gen(3);
  const RoomSpec room{{8.0, 8.0, 3.0}, 0.0};
  const Eigen::Vector3d mic{4.0, 4.0, 1.5};
  for (int trial = 0; trial < 50; ++trial) {
    const double d = gen.uniform(1.0, 3.0), a = gen.uniform(0, 2 * kPi);
    const Eigen::Vector3d src = mic + Eigen::Vector3d{d * std::cos(a), d * std::sin(a), 0.0};
    const auto rir = image_method_rir(room, src, mic, 0);
    CHECK(std::abs(refined_peak(rir.taps) - d / kSampleMetres) <= 0.5);
  }
}

TEST_CASE("windowed sinc impulse") {
  std::vector<double> taps(200, 0.0);
  add_fractional_impulse(taps, 50.0, 2.0);
  CHECK(taps[50] == 2.0);
  CHECK(std::abs(taps[49]) < 1e-15);
  CHECK(std::abs(taps[51]) < 1e-15);

  std::vector<double> frac(200, 0.0);
  add_fractional_impulse(frac, 100.3, 1.0);
  double sum = 0.0;
  std::size_t nonzero = 0;
  for (double v : frac) {
    sum += v;
    if (v != 0.0) ++nonzero;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(nonzero <= kSincTaps);
  CHECK(argmax_abs(frac) == 100);

  std::vector<double> edge(10, 0.0);
  CHECK_NOTHROW(add_fractional_impulse(edge, 2.5, 1.0));
}

TEST_CASE("first-order rir matches brute-force image enumeration") {
  const RoomSpec room{{4.0, 5.0, 3.0}, 0.3};
  const Eigen::Vector3d src{1.0, 2.0, 1.2}, mic{2.5, 3.0, 1.7};
  const double beta = eyring_reflection(room);
  // Direct path plus the mirror image of the source in each of the six walls.
  std::vector<Eigen::Vector3d> images{src};
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::Vector3d low = src, high = src;
    low[axis] = -src[axis];
    high[axis] = 2.0 * room.dims_m[axis] - src[axis];
    images.push_back(low);
    images.push_back(high);
  }
  const auto rir = image_method_rir(room, src, mic, 1);
  std::vector<double> oracle(rir.taps.size(), 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double dist = (images[i] - mic).norm();
    const double gain = i == 0 ? 1.0 : beta;
    add_fractional_impulse(oracle, dist / kSampleMetres, gain / (4.0 * kPi * dist));
  }
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    err = std::max(err, std::abs(rir.taps[i] - oracle[i]));
    ref = std::max(ref, std::abs(oracle[i]));
  }
  CHECK(err <= 1e-12 * ref);
}

TEST_CASE("Eyring reflection and default order") {
  CHECK(eyring_reflection({{5, 5, 2.6}, 0.0}) == 0.0);
  CHECK(default_max_order({{5, 5, 2.6}, 0.0}) == 0);
  const RoomSpec room{{6.0, 7.0, 3.0}, 0.4};
  const double beta = eyring_reflection(room);
  const double v = 6.0 * 7.0 * 3.0, s = 2.0 * (42.0 + 18.0 + 21.0);
  CHECK(beta == doctest::Approx(std::exp(-0.5 * 0.161 * v / (s * 0.4))).epsilon(1e-12));
  CHECK(beta > 0.0);
  CHECK(beta < 1.0);
  const std::size_t order = default_max_order(room, 1000);
  CHECK(std::pow(beta, static_cast<double>(order)) <= 1e-3);
  CHECK(std::pow(beta, static_cast<double>(order - 1)) > 1e-3);
  CHECK(default_max_order(room, 3) == 3);
}

TEST_CASE("single anechoic source at the array centre is a delayed scaled copy") {
  const double range = 100 * kSampleMetres;
  auto sc = anechoic_scene({{0.7, range, 1.5}});
  const auto dry = make_dry_signal(5, 0.5);
  const auto rec = synthesize_mixture(sc, {dry});
  REQUIRE(rec.center_references.size() == 1);
  const auto& c = rec.center_references[0].samples;
  const double amp = 1.0 / (4.0 * kPi * range);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double expected = i >= 100 ? amp * dry.samples[i - 100] : 0.0;
    CHECK(std::abs(c[i] - expected) < 1e-12);
  }
}

TEST_CASE("mixture equals the sum of the reference images") {
  const auto sc = sample_scenario(9, ScenarioRanges::reference_protocol());
  const auto rec = synthesize_mixture(sc, {make_dry_signal(1, 0.5), make_dry_signal(2, 0.5)},
                                      MixOptions{4, 0.0, true});
  REQUIRE(rec.references.size() == 2);
  for (std::size_t m = 0; m < rec.mixture.num_channels(); ++m) {
    for (std::size_t i = 0; i < rec.mixture.num_samples(); ++i) {
      CHECK(rec.mixture.channels[m][i] - (rec.references[0].channels[m][i] + rec.references[1].channels[m][i]) ==
            0.0);
    }
  }
}

TEST_CASE("truth DOAs follow from the positions") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto sc = sample_scenario(seed, ScenarioRanges::reference_protocol());
    const auto doas = sc.truth_doas();
    for (std::size_t n = 0; n < sc.num_sources(); ++n) {
      const auto p = sc.source_position(n);
      double expected = std::atan2(p.y() - sc.array_center.y(), p.x() - sc.array_center.x()) -
                        sc.array_rotation_rad;
      expected = std::fmod(expected, 2 * kPi);
      if (expected < 0) expected += 2 * kPi;
      CHECK(std::abs(doas[n] - expected) < 1e-12);
      const double diff = std::abs(doas[n] - sc.sources[n].azimuth_rad);
      CHECK(std::min(diff, 2 * kPi - diff) < 1e-9);
    }
  }
}

TEST_CASE("far-field inter-channel delays match the plane-wave model") {
  support::Gen gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto sc = anechoic_scene({{gen.uniform(0, 2 * kPi), gen.uniform(2.0, 3.0), 1.5}});
    sc.array_rotation_rad = gen.uniform(0, 2 * kPi);
    const auto tau = delays(sc.geometry, sc.sources[0].azimuth_rad);
    const auto center = image_method_rir(sc.room, sc.source_position(0), sc.array_center, 0);
    const double t0 = refined_peak(center.taps);
    for (std::size_t m = 0; m < sc.geometry.num_mics(); ++m) {
      const auto rir = image_method_rir(sc.room, sc.source_position(0), sc.mic_position(m), 0);
      CHECK(std::abs((t0 - refined_peak(rir.taps)) - tau[m] * kFs) <= 0.5);
    }
  }
}

TEST_CASE("synthesize_mixture rejects mismatched inputs") {
  const auto sc = sample_scenario(1, ScenarioRanges::reference_protocol());
  CHECK_THROWS_AS(synthesize_mixture(sc, {make_dry_signal(1, 0.2)}), InvalidArgument);
}

TEST_CASE("dry signals are deterministic, peak normalized and contain pauses") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = make_dry_signal(seed, 4.0), b = make_dry_signal(seed, 4.0);
    CHECK(a.samples == b.samples);
    REQUIRE(a.size() == 64000);
    double peak = 0.0, energy = 0.0;
    std::size_t run = 0, longest = 0;
    for (double v : a.samples) {
      peak = std::max(peak, std::abs(v));
      energy += v * v;
      run = std::abs(v) < 1e-9 ? run + 1 : 0;
      longest = std::max(longest, run);
    }
    CHECK(std::abs(peak - 1.0) <= 1e-6);
    CHECK(energy > 0.0);
    CHECK(longest >= 1600);
  }
  CHECK(make_dry_signal(1, 1.0).samples != make_dry_signal(2, 1.0).samples);
}
