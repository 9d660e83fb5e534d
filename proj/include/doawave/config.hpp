#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "doawave/beamform.hpp"
#include "doawave/doa.hpp"
#include "doawave/metrics.hpp"
#include "doawave/signals.hpp"
#include "doawave/simulate.hpp"

namespace doawave {

// Minimal TOML subset: [section] headers, `key = value` lines, # comments.
// Values are booleans, numbers, double-quoted strings (no escapes beyond \"
// and \\) and single-line arrays of those.
struct TomlValue;
using TomlArray = std::vector<TomlValue>;
struct TomlValue {
  std::variant<bool, double, std::string, TomlArray> data;
};

// Keys are flattened to "section.key" (or "key" before the first header).
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);

enum class MaskSource { kEstimated, kIlm, kIbm };
std::string to_string(MaskSource m);
MaskSource parse_mask_source(const std::string& s);

struct SimulationSettings {
  ScenarioRanges ranges;
  std::size_t count = 8;
  double duration_s = 3.0;
  std::size_t max_order_cap = 17;
  double relative_level_db = 0.0;
  // Directory of mono WAVs used as dry sources instead of the synthetic
  // ones; empty means synthetic.
  std::filesystem::path dry_dir;
};

struct DoaSettings {
  std::vector<DoaMethod> methods{DoaMethod::kSrp, DoaMethod::kMusic, DoaMethod::kTops};
  std::vector<double> gammas{1.0, 5.0, 10.0};
  double min_separation_deg = 10.0;
  SubspaceOptions subspace{};
  SrpOptions srp{};
  PosteriorOptions posterior{};
  ExpectationMode expectation = ExpectationMode::kCircular;
};

struct SeparationSettings {
  std::vector<BeamformerKind> beamformers{BeamformerKind::kMvdrRef};
  std::vector<MaskSource> masks{MaskSource::kEstimated, MaskSource::kIlm, MaskSource::kIbm};
  // DOAs behind the estimated masks (and the LCMP/MVDR constraints).
  DoaMethod doa = DoaMethod::kSrp;
  double kappa = kDefaultKappa;
  double mask_amplitude_scale = kMaskAmplitudeScale;
  std::size_t ref_channel = 1;
  double loading = kDiagonalLoading;
  ReferenceKind reference = ReferenceKind::kImage;
  bool write_wavs = false;
};

struct GradcheckSettings {
  std::size_t scenarios = 4;
  BeamformerKind beamformer = BeamformerKind::kLcmp;
  std::size_t draws_per_scenario = 1;
  // Evaluation points are truth + uniform(-spread, spread) per angle.
  double spread_deg = 17.0;
  // Gradient scenes are anechoic with sources at least this far apart.
  double min_separation_deg = 30.0;
  double step = 1e-5;
  double tolerance = 1e-4;
  double duration_s = 2.0;
  double loading = 1e-2;
  double descent_offset_deg = 10.0;
  std::size_t descent_steps = 200;
  double descent_lr = 1e-2;
  double converged_deg = 2.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  std::size_t jobs = 0;  // 0: DOAWAVE_JOBS, else 1
  bool paper_ranges = false;
  SimulationSettings simulation;
  // Explicit mic angles; empty means evenly spaced.
  std::vector<double> mic_angles_deg;
  StftConfig stft;
  int sample_rate = kDefaultSampleRate;
  DoaSettings doa;
  SeparationSettings separation;
  GradcheckSettings gradcheck;
  bool spectrum_svg = false;
  bool mask_svg = false;

  // Throws ConfigError on inconsistent values, and on ranges outside the
  // reference protocol when paper_ranges is set.
  void validate() const;
  UcaGeometry geometry() const;
};

// Unknown keys and wrongly typed values are rejected with ConfigError.
ExperimentConfig config_from_toml(const TomlTable& table);
ExperimentConfig load_config(const std::filesystem::path& path);

// Worker count: explicit value, else DOAWAVE_JOBS, else 1.
std::size_t resolve_jobs(std::size_t requested);

}  // namespace doawave
