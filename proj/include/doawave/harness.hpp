#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "doawave/config.hpp"
#include "doawave/simulate.hpp"

namespace doawave {

// One simulated utterance. Paths are relative to the run directory.
struct UtteranceRecord {
  std::size_t index = 0;
  std::string id;
  std::uint64_t seed = 0;
  std::vector<double> truth_doas_deg;
  Eigen::Vector3d room_dims_m{0.0, 0.0, 0.0};
  double t60_s = 0.0;
  double array_rotation_deg = 0.0;
  std::vector<double> source_ranges_m;
  std::string mixture;
  std::vector<std::string> references;
  std::vector<std::string> center_references;
  std::vector<std::string> dry;
};

struct RunManifest {
  std::filesystem::path root;
  std::vector<UtteranceRecord> utterances;
};

std::string utterance_id(std::size_t index);
std::string manifest_line(const UtteranceRecord& rec);
UtteranceRecord parse_manifest_line(const std::string& line);
// root defaults to the manifest's directory.
RunManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Reloads the waveforms of a simulated utterance.
MixtureRecord load_mixture(const RunManifest& manifest, const UtteranceRecord& rec,
                           const UcaGeometry& geometry);

// Runs fn(i) for i in [0, count) on `jobs` threads. Returns the error message
// of each failed item (empty string on success), indexed by item.
std::vector<std::string> parallel_for(std::size_t count, std::size_t jobs,
                                      const std::function<void(std::size_t)>& fn);

// CSV headers of the emitted reports.
extern const char* const kDoaCsvHeader;
extern const char* const kSeparationCsvHeader;
extern const char* const kGradcheckCsvHeader;
extern const char* const kDescentCsvHeader;

// Per-item CSV rows; every row ends in '\n'.
std::string doa_rows(const ExperimentConfig& cfg, const RunManifest& manifest,
                     const UtteranceRecord& rec, const std::filesystem::path* svg_dir = nullptr);
std::string separation_rows(const ExperimentConfig& cfg, const RunManifest& manifest,
                            const UtteranceRecord& rec,
                            const std::filesystem::path* wav_dir = nullptr,
                            const std::filesystem::path* svg_dir = nullptr);
struct GradcheckRows {
  std::string gradients;
  std::string descent;
};
GradcheckRows gradcheck_rows(const ExperimentConfig& cfg, std::size_t scenario);

// Dry source drawn from the .wav files of dir (sorted by name, picked by
// seed): first channel, truncated or zero padded to duration_s, peak 1.
// Throws Error on an empty directory or a sample-rate mismatch.
Waveform dry_from_directory(const std::filesystem::path& dir, std::uint64_t seed, double duration_s,
                            int sample_rate);

// Simulates one utterance, writing its WAVs under run_dir/wav.
UtteranceRecord simulate_utterance(const ExperimentConfig& cfg, std::size_t index,
                                   const std::filesystem::path& run_dir);

struct StageSummary {
  std::string stage;
  std::size_t items = 0;
  std::size_t computed = 0;
  std::size_t resumed = 0;
  std::size_t failed = 0;
  // Rows whose status column is not "ok".
  std::size_t failed_rows = 0;
};

// Aggregate tables from whichever of doa.csv, separation.csv, gradcheck.csv
// and descent.csv exist in dir. Writes report.csv and report.txt and returns
// the text table.
std::string write_report(const std::filesystem::path& dir);

// Full pipeline in cfg.out_dir: simulate, doa, separate, gradcheck, report.
// Stages already completed under the same configuration (per the stage
// markers) are skipped. Returns 0 on success, 1 if any item or row failed.
int run_pipeline(const ExperimentConfig& cfg, std::ostream& log);

// Individual stages as used by run_pipeline, resumable through the markers.
StageSummary run_simulate_stage(const ExperimentConfig& cfg, std::ostream& log);
StageSummary run_doa_stage(const ExperimentConfig& cfg, std::ostream& log);
StageSummary run_separate_stage(const ExperimentConfig& cfg, std::ostream& log);
StageSummary run_gradcheck_stage(const ExperimentConfig& cfg, std::ostream& log);

// Hash of every configuration field that affects emitted numbers.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace doawave
