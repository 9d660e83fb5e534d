// doawave: simulation, DOA estimation, separation and gradient checks.
//
//   doawave run --config exp.toml
//   doawave simulate --config exp.toml --out data --count 20 --seed 7
//   doawave doa --method music --gamma 1 --manifest data/manifest.jsonl --out doa.csv
//   doawave separate --beamformer mvdr-ref --doa oracle --mask ilm --manifest data/manifest.jsonl --out sep
//   doawave gradcheck --scenarios 10 --seed 3 --beamformer lcmp --report grad.csv
//   doawave report --out data

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "doawave/config.hpp"
#include "doawave/error.hpp"
#include "doawave/harness.hpp"

namespace fs = std::filesystem;
using namespace doawave;

namespace {

constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool paper_ranges = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
  app->add_option("--config", c.config, "Experiment config (TOML subset)");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--jobs", c.jobs, "Worker threads (default: DOAWAVE_JOBS, else 1)");
  app->add_flag("--paper-ranges", c.paper_ranges, "Reject simulation ranges outside the reference protocol");
  app->add_option("--out", c.out, out_help);
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (c.paper_ranges) cfg.paper_ranges = true;
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Rows for every utterance of a manifest, in manifest order.
int manifest_csv(const ExperimentConfig& cfg, const RunManifest& m, const char* header, const fs::path& out,
                 const std::function<std::string(const UtteranceRecord&)>& rows_of) {
  std::vector<std::string> rows(m.utterances.size());
  const auto errors = parallel_for(m.utterances.size(), resolve_jobs(cfg.jobs),
                                   [&](std::size_t i) { rows[i] = rows_of(m.utterances[i]); });
  std::string text = std::string(header) + "\n";
  int status = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << m.utterances[i].id << " failed: " << errors[i] << "\n";
      status = kExitPartial;
    }
    text += rows[i];
    std::istringstream lines(rows[i]);
    for (std::string line; std::getline(lines, line);) {
      if (line.size() < 3 || line.compare(line.size() - 3, 3, ",ok") != 0) status = kExitPartial;
    }
  }
  write_file(out, text);
  return status;
}

int status_of(const StageSummary& s) { return s.failed || s.failed_rows ? kExitPartial : 0; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localization-driven beamforming experiments"};
  app.require_subcommand(1);

  Common run_c, sim_c, doa_c, sep_c, grad_c, rep_c;

  auto* run = app.add_subcommand("run", "Simulate, estimate, separate, check gradients and report");
  add_common(run, run_c, "Run directory");

  auto* sim = app.add_subcommand("simulate", "Simulate reverberant mixtures and write a manifest");
  add_common(sim, sim_c, "Output directory");
  std::optional<std::size_t> count;
  sim->add_option("--count", count, "Number of mixtures");

  auto* doa = app.add_subcommand("doa", "Classical DOA estimation over a manifest");
  add_common(doa, doa_c, "Output CSV");
  std::optional<std::string> method;
  std::optional<double> gamma;
  std::string manifest, spectrum_svg;
  doa->add_option("--method", method, "srp, music or tops (default: config doa.methods)");
  doa->add_option("--gamma", gamma, "Angular resolution in degrees (default: config doa.gammas)");
  doa->add_option("--manifest", manifest, "manifest.jsonl from simulate")->required();
  doa->add_option("--spectrum-svg", spectrum_svg, "Directory for polar spectrum plots");

  auto* sep = app.add_subcommand("separate", "Beamforming separation over a manifest");
  add_common(sep, sep_c, "Output directory for WAVs and separation.csv");
  std::optional<std::string> beamformer, sep_doa, mask;
  std::string sep_manifest, mask_svg;
  sep->add_option("--beamformer", beamformer, "lcmp, mvdr or mvdr-ref (default: config)");
  sep->add_option("--doa", sep_doa, "oracle, srp, music or tops (default: config)");
  sep->add_option("--mask", mask, "estimated, ilm or ibm (default: config)");
  sep->add_option("--manifest", sep_manifest, "manifest.jsonl from simulate")->required();
  sep->add_option("--mask-svg", mask_svg, "Directory for mask heatmaps");

  auto* grad = app.add_subcommand("gradcheck", "Analytic versus finite-difference gradients of the chain loss");
  add_common(grad, grad_c, "Unused (see --report)");
  std::optional<std::size_t> scenarios;
  std::optional<std::string> grad_bf;
  std::string report_csv = "gradcheck.csv";
  grad->add_option("--scenarios", scenarios, "Number of anechoic scenes");
  grad->add_option("--beamformer", grad_bf, "lcmp, mvdr or mvdr-ref (default: config)");
  grad->add_option("--report", report_csv, "Gradient CSV; descent results go to <stem>_descent.csv");

  auto* rep = app.add_subcommand("report", "Aggregate CSVs in a directory into report.csv and report.txt");
  add_common(rep, rep_c, "Directory holding doa.csv, separation.csv, gradcheck.csv, descent.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = build_config(run_c);
      if (!run_c.out.empty()) cfg.out_dir = run_c.out;
      cfg.validate();
      return run_pipeline(cfg, std::cerr);
    }
    if (sim->parsed()) {
      ExperimentConfig cfg = build_config(sim_c);
      if (!sim_c.out.empty()) cfg.out_dir = sim_c.out;
      if (count) cfg.simulation.count = *count;
      cfg.validate();
      const auto s = run_simulate_stage(cfg, std::cerr);
      std::cerr << "simulate: " << s.computed << " computed, " << s.resumed << " resumed, " << s.failed
                << " failed\n";
      return status_of(s);
    }
    if (doa->parsed()) {
      ExperimentConfig cfg = build_config(doa_c);
      if (method) cfg.doa.methods = {parse_doa_method(*method)};
      if (gamma) cfg.doa.gammas = {*gamma};
      cfg.validate();
      const RunManifest m = read_manifest(manifest);
      const fs::path out = doa_c.out.empty() ? fs::path("doa.csv") : fs::path(doa_c.out);
      const fs::path svg = spectrum_svg;
      return manifest_csv(cfg, m, kDoaCsvHeader, out, [&](const UtteranceRecord& u) {
        return doa_rows(cfg, m, u, spectrum_svg.empty() ? nullptr : &svg);
      });
    }
    if (sep->parsed()) {
      ExperimentConfig cfg = build_config(sep_c);
      if (beamformer) cfg.separation.beamformers = {parse_beamformer(*beamformer)};
      if (sep_doa) cfg.separation.doa = parse_doa_method(*sep_doa);
      if (mask) cfg.separation.masks = {parse_mask_source(*mask)};
      cfg.validate();
      const RunManifest m = read_manifest(sep_manifest);
      const fs::path out = sep_c.out.empty() ? fs::path("separated") : fs::path(sep_c.out);
      const fs::path svg = mask_svg;
      return manifest_csv(cfg, m, kSeparationCsvHeader, out / "separation.csv", [&](const UtteranceRecord& u) {
        return separation_rows(cfg, m, u, &out, mask_svg.empty() ? nullptr : &svg);
      });
    }
    if (grad->parsed()) {
      ExperimentConfig cfg = build_config(grad_c);
      if (scenarios) cfg.gradcheck.scenarios = *scenarios;
      if (grad_bf) cfg.gradcheck.beamformer = parse_beamformer(*grad_bf);
      cfg.validate();
      std::vector<GradcheckRows> rows(cfg.gradcheck.scenarios);
      const auto errors = parallel_for(rows.size(), resolve_jobs(cfg.jobs),
                                       [&](std::size_t i) { rows[i] = gradcheck_rows(cfg, i); });
      std::string g = std::string(kGradcheckCsvHeader) + "\n", d = std::string(kDescentCsvHeader) + "\n";
      int status = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!errors[i].empty()) {
          std::cerr << "scenario " << i << " failed: " << errors[i] << "\n";
          status = kExitPartial;
        }
        g += rows[i].gradients;
        d += rows[i].descent;
      }
      const fs::path path = report_csv;
      write_file(path, g);
      write_file(path.parent_path() / (path.stem().string() + "_descent.csv"), d);
      return status;
    }
    if (rep->parsed()) {
      const fs::path dir = rep_c.out.empty() ? fs::path(".") : fs::path(rep_c.out);
      std::cout << write_report(dir);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return 0;
}
