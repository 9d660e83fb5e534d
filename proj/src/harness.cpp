#include "doawave/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "doawave/error.hpp"
#include "doawave/gradcheck.hpp"
#include "doawave/metrics.hpp"
#include "doawave/random.hpp"
#include "doawave/svg.hpp"
#include "doawave/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace doawave {

const char* const kDoaCsvHeader =
    "utterance,method,gamma_deg,estimator,truth_deg,estimate_deg,error_deg,per_source_error_deg,"
    "filled_from_ranking,status";
const char* const kSeparationCsvHeader =
    "utterance,beamformer,mask,doa,per_source_sisdr_db,mean_sisdr_db,mixture_sisdr_db,"
    "improvement_db,fallback_bins,status";
const char* const kGradcheckCsvHeader =
    "scenario,draw,parameter,theta_deg,truth_deg,analytic,finite_difference,relative_error,"
    "near_kink,agree,status";
const char* const kDescentCsvHeader =
    "scenario,truth_deg,init_deg,final_deg,error_deg,iterations,loss_init,loss_final,converged,"
    "status";

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

std::string join(const std::vector<double>& xs, int digits = 4) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ";" : "") + fixed(xs[i], digits);
  return out;
}

std::string status_text(const std::string& what) {
  std::string s = what;
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  }
  return s.empty() ? "error" : s;
}

std::vector<double> to_deg(const std::vector<double>& rad) {
  std::vector<double> out;
  for (double r : rad) out.push_back(wrap_to_2pi(r) * kRadToDeg);
  return out;
}

std::vector<double> to_rad(const std::vector<double>& deg) {
  std::vector<double> out;
  for (double d : deg) out.push_back(d * kDegToRad);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

SpatialSpectrum scan(DoaMethod method, const MultichannelSpectrogram& spec, const UcaGeometry& geom,
                     const AngularGrid& grid, std::size_t n_sources, const DoaSettings& s) {
  switch (method) {
    case DoaMethod::kSrp: return srp_spectrum(spec, geom, grid, s.srp);
    case DoaMethod::kMusic: return music_spectrum(spec, geom, grid, n_sources, s.subspace);
    case DoaMethod::kTops: return tops_spectrum(spec, geom, grid, n_sources, s.subspace);
    default: break;
  }
  throw InvalidArgument("scan: " + to_string(method) + " is not a scanning method");
}

MultichannelSpectrogram analyze(const MultichannelWaveform& w, const ExperimentConfig& cfg) {
  return stft(w, cfg.stft);
}

// Reorders estimates so that entry n pairs with truth n.
std::vector<double> paired(const std::vector<double>& est, const DoaErrorEntry& e) {
  std::vector<double> out;
  for (std::size_t a : e.assignment) out.push_back(est[a]);
  return out;
}

}  // namespace

std::string utterance_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%04zu", index);
  return buf;
}

std::string manifest_line(const UtteranceRecord& rec) {
  json j;
  j["index"] = rec.index;
  j["id"] = rec.id;
  j["seed"] = rec.seed;
  j["truth_doas_deg"] = rec.truth_doas_deg;
  j["room_dims_m"] = {rec.room_dims_m.x(), rec.room_dims_m.y(), rec.room_dims_m.z()};
  j["t60_s"] = rec.t60_s;
  j["array_rotation_deg"] = rec.array_rotation_deg;
  j["source_ranges_m"] = rec.source_ranges_m;
  j["mixture"] = rec.mixture;
  j["references"] = rec.references;
  j["center_references"] = rec.center_references;
  j["dry"] = rec.dry;
  return j.dump();
}

UtteranceRecord parse_manifest_line(const std::string& line) {
  UtteranceRecord rec;
  try {
    const json j = json::parse(line);
    rec.index = j.at("index").get<std::size_t>();
    rec.id = j.at("id").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.truth_doas_deg = j.at("truth_doas_deg").get<std::vector<double>>();
    const auto dims = j.at("room_dims_m").get<std::vector<double>>();
    if (dims.size() != 3) throw Error("manifest: room_dims_m needs three entries");
    rec.room_dims_m = {dims[0], dims[1], dims[2]};
    rec.t60_s = j.at("t60_s").get<double>();
    rec.array_rotation_deg = j.at("array_rotation_deg").get<double>();
    rec.source_ranges_m = j.at("source_ranges_m").get<std::vector<double>>();
    rec.mixture = j.at("mixture").get<std::string>();
    rec.references = j.at("references").get<std::vector<std::string>>();
    rec.center_references = j.at("center_references").get<std::vector<std::string>>();
    rec.dry = j.at("dry").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(std::string("manifest: ") + e.what());
  }
  return rec;
}

RunManifest read_manifest(const fs::path& path) {
  RunManifest m;
  m.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for (const auto& line : lines_of(read_text(path))) m.utterances.push_back(parse_manifest_line(line));
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  std::string text;
  for (const auto& u : manifest.utterances) text += manifest_line(u) + "\n";
  write_text(path, text);
}

MixtureRecord load_mixture(const RunManifest& manifest, const UtteranceRecord& rec,
                           const UcaGeometry& geometry) {
  MixtureRecord out;
  out.mixture = read_wav(manifest.root / rec.mixture);
  if (out.mixture.num_channels() != geometry.num_mics()) {
    throw Error(rec.id + ": mixture has " + std::to_string(out.mixture.num_channels()) +
                " channels but the array has " + std::to_string(geometry.num_mics()));
  }
  for (const auto& p : rec.references) out.references.push_back(read_wav(manifest.root / p));
  for (const auto& p : rec.center_references) {
    const auto w = read_wav(manifest.root / p);
    out.center_references.push_back({w.channels.at(0), w.sample_rate});
  }
  for (const auto& p : rec.dry) {
    const auto w = read_wav(manifest.root / p);
    out.dry.push_back({w.channels.at(0), w.sample_rate});
  }
  out.truth_doas = to_rad(rec.truth_doas_deg);
  out.scenario.geometry = geometry;
  return out;
}

std::vector<std::string> parallel_for(std::size_t count, std::size_t jobs,
                                      const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = status_text(e.what());
      } catch (...) {
        errors[i] = "unknown error";
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return errors;
}

Waveform dry_from_directory(const fs::path& dir, std::uint64_t seed, double duration_s, int sample_rate) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
  }
  if (files.empty()) throw Error("no .wav files in " + dir.string());
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  const fs::path& pick = files[static_cast<std::size_t>(rng.uniform() * static_cast<double>(files.size()))];
  const MultichannelWaveform w = read_wav(pick);
  if (w.sample_rate != sample_rate) {
    throw Error(pick.string() + ": sample rate " + std::to_string(w.sample_rate) + " differs from " +
                std::to_string(sample_rate));
  }
  // First channel, truncated or zero padded to the utterance length, peak 1.
  const auto length = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::vector<double> x(length, 0.0);
  const auto& src = w.channels.at(0);
  std::copy_n(src.begin(), std::min(length, src.size()), x.begin());
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  if (peak == 0.0) throw Error(pick.string() + ": silent over the utterance length");
  for (double& v : x) v /= peak;
  return {std::move(x), sample_rate};
}

UtteranceRecord simulate_utterance(const ExperimentConfig& cfg, std::size_t index,
                                   const fs::path& run_dir) {
  const auto& sim = cfg.simulation;
  Scenario sc = sample_scenario(derive_seed(cfg.seed, index, "scene"), sim.ranges);
  sc.geometry = cfg.geometry();
  std::vector<Waveform> dry;
  for (std::size_t n = 0; n < sim.ranges.num_sources; ++n) {
    const std::uint64_t seed = derive_seed(cfg.seed, index, "dry" + std::to_string(n));
    dry.push_back(sim.dry_dir.empty() ? make_dry_signal(seed, sim.duration_s, cfg.sample_rate)
                                      : dry_from_directory(sim.dry_dir, seed, sim.duration_s, cfg.sample_rate));
  }
  MixOptions mix;
  mix.max_order_cap = sim.max_order_cap;
  mix.relative_level_db = sim.relative_level_db;
  const MixtureRecord rec = synthesize_mixture(sc, dry, mix);

  UtteranceRecord u;
  u.index = index;
  u.id = utterance_id(index);
  u.seed = sc.seed;
  u.truth_doas_deg = to_deg(rec.truth_doas);
  u.room_dims_m = sc.room.dims_m;
  u.t60_s = sc.room.t60_s;
  u.array_rotation_deg = sc.array_rotation_rad * kRadToDeg;
  for (const auto& s : sc.sources) u.source_ranges_m.push_back(s.range_m);

  const fs::path wav_dir = run_dir / "wav";
  fs::create_directories(wav_dir);
  auto put = [&](const std::string& name, const MultichannelWaveform& w) {
    const fs::path rel = fs::path("wav") / (u.id + "_" + name + ".wav");
    const fs::path tmp = run_dir / (rel.string() + ".tmp");
    write_wav(tmp, w);
    fs::rename(tmp, run_dir / rel);
    return rel.generic_string();
  };
  u.mixture = put("mix", rec.mixture);
  for (std::size_t n = 0; n < rec.references.size(); ++n) {
    const std::string k = std::to_string(n);
    u.references.push_back(put("ref" + k, rec.references[n]));
    u.center_references.push_back(put("center" + k, MultichannelWaveform::from_mono(rec.center_references[n])));
    u.dry.push_back(put("dry" + k, MultichannelWaveform::from_mono(rec.dry[n])));
  }
  return u;
}

std::string doa_rows(const ExperimentConfig& cfg, const RunManifest& manifest, const UtteranceRecord& rec,
                     const fs::path* svg_dir) {
  const UcaGeometry geom = cfg.geometry();
  const MixtureRecord mix = load_mixture(manifest, rec, geom);
  const auto spec = analyze(mix.mixture, cfg);
  const auto& truth = mix.truth_doas;
  const std::size_t n = truth.size();
  const auto& s = cfg.doa;

  std::string out;
  auto row = [&](const std::string& method, double gamma, const std::string& estimator,
                 const std::vector<double>& est, bool filled) {
    const auto e = permutation_min_doa_error(est, truth);
    out += rec.id + "," + method + "," + fixed(gamma, 2) + "," + estimator + "," + join(to_deg(truth), 4) + "," +
           join(to_deg(paired(est, e)), 4) + "," + fixed(e.mean_deg, 4) + "," + join(e.per_source_deg, 4) + "," +
           (filled ? "1" : "0") + ",ok\n";
  };
  for (DoaMethod m : s.methods) {
    for (double gamma : s.gammas) {
      const auto grid = angular_grid(gamma);
      const auto spectrum = scan(m, spec, geom, grid, n, s);
      const auto peaks = pick_peaks(spectrum, n, s.min_separation_deg);
      row(to_string(m), gamma, "peak", peaks.thetas, peaks.filled_from_ranking);
      if (svg_dir) {
        char name[96];
        std::snprintf(name, sizeof name, "%s_%s_g%g.svg", rec.id.c_str(), to_string(m).c_str(), gamma);
        write_text(*svg_dir / name,
                   polar_spectrum_svg(spectrum, truth, peaks.thetas,
                                      rec.id + " " + to_string(m) + " gamma " + fixed(gamma, 1)));
      }
      if (m == DoaMethod::kSrp) {
        const auto post = srp_posterior(spec, geom, grid, n, s.posterior);
        row(to_string(m), gamma, "posterior-plain", expected_doa(post, grid, ExpectationMode::kPlain).thetas,
            false);
        row(to_string(m), gamma, "posterior-circular",
            expected_doa(post, grid, ExpectationMode::kCircular).thetas, false);
      }
    }
  }
  return out;
}

std::string separation_rows(const ExperimentConfig& cfg, const RunManifest& manifest,
                            const UtteranceRecord& rec, const fs::path* wav_dir, const fs::path* svg_dir) {
  const UcaGeometry geom = cfg.geometry();
  const auto& sep = cfg.separation;
  const MixtureRecord mix = load_mixture(manifest, rec, geom);
  const auto spec = analyze(mix.mixture, cfg);
  const auto& truth = mix.truth_doas;
  const std::size_t n = truth.size();

  std::vector<double> estimated = truth;
  if (sep.doa != DoaMethod::kOracle) {
    estimated = pick_peaks(scan(sep.doa, spec, geom, angular_grid(1.0), n, cfg.doa), n,
                           cfg.doa.min_separation_deg)
                    .thetas;
  }

  std::vector<MultichannelSpectrogram> ref_specs;
  const bool need_refs = std::find(sep.masks.begin(), sep.masks.end(), MaskSource::kIbm) != sep.masks.end();
  if (need_refs) {
    for (const auto& r : mix.references) ref_specs.push_back(analyze(r, cfg));
  }

  SeparationReportOptions report_opts;
  report_opts.reference = sep.reference;
  report_opts.ref_channel = sep.ref_channel;

  std::string out;
  for (MaskSource ms : sep.masks) {
    const std::vector<double>& doas = ms == MaskSource::kEstimated ? estimated : truth;
    LocalizationMask mask;
    switch (ms) {
      case MaskSource::kEstimated:
        mask = localization_mask(spec, geom, estimated, sep.kappa, sep.mask_amplitude_scale);
        break;
      case MaskSource::kIlm: mask = ilm(spec, geom, truth, sep.kappa, sep.mask_amplitude_scale); break;
      case MaskSource::kIbm: mask = ibm(ref_specs, sep.ref_channel); break;
    }
    if (svg_dir) {
      for (std::size_t k = 0; k < mask.num_sources(); ++k) {
        write_text(*svg_dir / (rec.id + "_" + to_string(ms) + "_s" + std::to_string(k) + ".svg"),
                   mask_heatmap_svg(mask.values[k], rec.id + " " + to_string(ms) + " source " + std::to_string(k)));
      }
    }
    const std::string doa_name = ms == MaskSource::kEstimated ? to_string(sep.doa) : "oracle";
    for (BeamformerKind kind : sep.beamformers) {
      const std::string prefix = rec.id + "," + to_string(kind) + "," + to_string(ms) + "," + doa_name + ",";
      try {
        std::size_t fallbacks = 0;
        BeamformerWeights w;
        if (kind == BeamformerKind::kLcmp) {
          w = lcmp_beamformer(spec, geom, doas, sep.loading);
        } else {
          const auto scms = masked_scm(spec, mask, &fallbacks);
          w = kind == BeamformerKind::kMvdr ? mvdr_beamformer(scms, geom, doas, spec, sep.loading)
                                            : mvdr_ref_beamformer(scms, sep.ref_channel, sep.loading);
        }
        fallbacks += w.fallback_bins;
        const auto outs = apply_beamformer(spec, w);
        std::vector<Waveform> est;
        for (const auto& o : outs) {
          auto wave = istft(o);
          est.push_back({std::move(wave.channels.at(0)), wave.sample_rate});
        }
        SeparationReportOptions opts = report_opts;
        if (opts.reference == ReferenceKind::kImage && kind != BeamformerKind::kMvdrRef) {
          opts.reference = ReferenceKind::kCenter;
        }
        const SdrReport r = separation_report(est, mix, opts);
        out += prefix + join(r.per_source_db, 4) + "," + fixed(r.mean_db, 4) + "," + fixed(r.mixture_mean_db, 4) +
               "," + fixed(r.improvement_db(), 4) + "," + std::to_string(fallbacks) + ",ok\n";
        if (wav_dir) {
          for (std::size_t k = 0; k < est.size(); ++k) {
            const fs::path p = *wav_dir / (rec.id + "_" + to_string(kind) + "_" + to_string(ms) + "_s" +
                                           std::to_string(k) + ".wav");
            fs::create_directories(p.parent_path());
            write_wav(p, MultichannelWaveform::from_mono(est[k]));
          }
        }
      } catch (const Error& e) {
        std::vector<double> nan(n, std::nan(""));
        out += prefix + join(nan) + ",nan,nan,nan,0," + status_text(e.what()) + "\n";
      }
    }
  }
  return out;
}

GradcheckRows gradcheck_rows(const ExperimentConfig& cfg, std::size_t scenario) {
  const auto& g = cfg.gradcheck;
  ScenarioRanges ranges = cfg.simulation.ranges;
  ranges.t60_s = {0.0, 0.0};
  ranges.min_separation_deg = std::max(ranges.min_separation_deg, g.min_separation_deg);
  Scenario sc = sample_scenario(derive_seed(cfg.seed, scenario, "grad-scene"), ranges);
  sc.geometry = cfg.geometry();
  std::vector<Waveform> dry;
  for (std::size_t n = 0; n < ranges.num_sources; ++n) {
    dry.push_back(make_dry_signal(derive_seed(cfg.seed, scenario, "grad-dry" + std::to_string(n)), g.duration_s,
                                  cfg.sample_rate));
  }
  MixOptions mo;
  mo.max_order_cap = cfg.simulation.max_order_cap;
  mo.relative_level_db = cfg.simulation.relative_level_db;
  const MixtureRecord rec = synthesize_mixture(sc, dry, mo);
  const auto spec = analyze(rec.mixture, cfg);

  ChainProblem::Options opts;
  opts.kind = g.beamformer;
  opts.kappa = cfg.separation.kappa;
  opts.amplitude_scale = cfg.separation.mask_amplitude_scale;
  opts.ref_channel = cfg.separation.ref_channel;
  opts.loading = g.loading;
  // MVDR-REF reconstructs the image at the reference mic; the steering-vector
  // beamformers are distortionless with respect to the array center.
  std::vector<MultichannelSpectrogram> refs;
  for (std::size_t n = 0; n < rec.references.size(); ++n) {
    if (g.beamformer == BeamformerKind::kMvdrRef) {
      refs.push_back(analyze(MultichannelWaveform::from_mono(
                                 {rec.references[n].channels.at(opts.ref_channel), rec.mixture.sample_rate}),
                             cfg));
    } else {
      refs.push_back(analyze(MultichannelWaveform::from_mono(rec.center_references[n]), cfg));
    }
  }
  const ChainProblem problem(spec, refs, sc.geometry, opts);
  const auto& truth = rec.truth_doas;
  const std::string id = "grad" + utterance_id(scenario).substr(3);

  GradcheckRows rows;
  Rng rng(derive_seed(cfg.seed, scenario, "grad-draw"));
  for (std::size_t d = 0; d < g.draws_per_scenario; ++d) {
    std::vector<double> theta;
    for (double t : truth) theta.push_back(t + rng.uniform(-g.spread_deg, g.spread_deg) * kDegToRad);
    const auto assignment = chain_loss(theta, problem).assignment;
    const auto ga = grad_analytic(theta, problem, assignment);
    const auto gf = grad_fd(theta, problem, assignment, g.step);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double scale = std::max(std::fabs(ga.values[k]), std::fabs(gf[k]));
      const double rel = scale > 0.0 ? std::fabs(ga.values[k] - gf[k]) / scale : 0.0;
      const bool agree = rel <= g.tolerance;
      rows.gradients += id + "," + std::to_string(d) + "," + std::to_string(k) + "," +
                        fixed(wrap_to_2pi(theta[k]) * kRadToDeg, 6) + "," +
                        fixed(wrap_to_2pi(truth[k]) * kRadToDeg, 6) + "," + sci(ga.values[k]) + "," + sci(gf[k]) +
                        "," + sci(rel) + "," + (ga.near_kink ? "1" : "0") + "," + (agree ? "1" : "0") + ",ok\n";
    }
  }

  if (g.descent_steps > 0) {
    std::vector<double> init;
    for (double t : truth) init.push_back(t + g.descent_offset_deg * kDegToRad);
    DescentOptions dopt;
    dopt.steps = g.descent_steps;
    dopt.lr = g.descent_lr;
    const auto res = descend_doa(init, problem, dopt);
    const auto err = permutation_min_doa_error(res.estimate.thetas, truth);
    rows.descent += id + "," + join(to_deg(truth), 4) + "," + join(to_deg(init), 4) + "," +
                    join(to_deg(paired(res.estimate.thetas, err)), 4) + "," + fixed(err.mean_deg, 4) + "," +
                    std::to_string(res.iterations) + "," + sci(res.loss_history.front()) + "," +
                    sci(res.loss_history.back()) + "," + (err.mean_deg < g.converged_deg ? "1" : "0") + ",ok\n";
  }
  return rows;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  json j;
  const auto& r = cfg.simulation.ranges;
  j["seed"] = cfg.seed;
  j["sim"] = {cfg.simulation.count,
              cfg.simulation.duration_s,
              cfg.simulation.max_order_cap,
              cfg.simulation.relative_level_db,
              cfg.simulation.dry_dir.string(),
              {r.room_min.x(), r.room_min.y(), r.room_min.z()},
              {r.room_max.x(), r.room_max.y(), r.room_max.z()},
              {r.t60_s.lo, r.t60_s.hi},
              {r.source_range_m.lo, r.source_range_m.hi},
              {r.source_height_m.lo, r.source_height_m.hi},
              {r.array_height_m.lo, r.array_height_m.hi},
              r.num_sources,
              r.min_separation_deg,
              r.wall_margin_m,
              r.num_mics,
              r.array_radius_m,
              r.speed_of_sound,
              r.random_array_rotation};
  j["mics"] = cfg.mic_angles_deg;
  j["stft"] = {cfg.stft.fft_size, cfg.stft.hop, static_cast<int>(cfg.stft.window), cfg.sample_rate};
  std::vector<std::string> methods;
  for (auto m : cfg.doa.methods) methods.push_back(to_string(m));
  const auto& d = cfg.doa;
  j["doa"] = {methods,
              d.gammas,
              d.min_separation_deg,
              d.subspace.band.lo_hz,
              d.subspace.band.hi_hz,
              d.subspace.loading,
              d.srp.epsilon,
              d.posterior.window_deg,
              d.posterior.temperature,
              d.posterior.seed_gamma_deg,
              static_cast<int>(d.expectation)};
  std::vector<std::string> bfs, masks;
  for (auto b : cfg.separation.beamformers) bfs.push_back(to_string(b));
  for (auto m : cfg.separation.masks) masks.push_back(to_string(m));
  const auto& s = cfg.separation;
  j["sep"] = {bfs,          masks,       to_string(s.doa),
              s.kappa,      s.mask_amplitude_scale, s.ref_channel,
              s.loading,    static_cast<int>(s.reference)};
  const auto& g = cfg.gradcheck;
  j["grad"] = {g.scenarios,   to_string(g.beamformer), g.draws_per_scenario, g.spread_deg,
               g.min_separation_deg, g.step,           g.tolerance,          g.duration_s,
               g.loading,     g.descent_offset_deg,    g.descent_steps,      g.descent_lr,
               g.converged_deg};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

namespace {

struct PartOutput {
  std::string suffix;     // part file extension
  std::string aggregate;  // file name in the run directory
  std::string header;     // empty: no header line
};

class MarkerLog {
 public:
  MarkerLog(fs::path path, std::string fingerprint) : path_(std::move(path)), fp_(std::move(fingerprint)) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      try {
        const json j = json::parse(line);
        if (j.at("config").get<std::string>() == fp_) {
          done_.insert(j.at("stage").get<std::string>() + "/" + j.at("id").get<std::string>());
        }
      } catch (const json::exception&) {
        // Torn last line from an interrupted run.
      }
    }
  }

  bool done(const std::string& stage, const std::string& id) const { return done_.count(stage + "/" + id) > 0; }

  void mark(const std::string& stage, const std::string& id) {
    const json j = {{"stage", stage}, {"id", id}, {"config", fp_}};
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << j.dump() << "\n";
    out.flush();
    if (!out) throw Error("cannot append to " + path_.string());
  }

 private:
  fs::path path_;
  std::string fp_;
  std::set<std::string> done_;
  std::mutex mu_;
};

std::size_t count_failed_rows(const std::string& text) {
  std::size_t failed = 0;
  for (const auto& line : lines_of(text)) {
    const auto cols = split(line, ',');
    if (!cols.empty() && cols.back() != "ok") ++failed;
  }
  return failed;
}

StageSummary run_stage(const ExperimentConfig& cfg, const std::string& stage, const std::vector<std::string>& ids,
                       const std::vector<PartOutput>& outputs,
                       const std::function<std::vector<std::string>(std::size_t)>& compute, std::ostream& log) {
  const fs::path root = cfg.out_dir;
  const fs::path parts = root / "parts" / stage;
  fs::create_directories(parts);
  MarkerLog markers(root / "stages.jsonl", config_fingerprint(cfg));

  StageSummary summary;
  summary.stage = stage;
  summary.items = ids.size();
  std::atomic<std::size_t> computed{0}, resumed{0};
  std::mutex log_mu;
  auto part_path = [&](std::size_t i, const PartOutput& o) { return parts / (ids[i] + "." + o.suffix); };

  const auto errors = parallel_for(ids.size(), resolve_jobs(cfg.jobs), [&](std::size_t i) {
    bool have_all = markers.done(stage, ids[i]);
    for (const auto& o : outputs) have_all = have_all && fs::exists(part_path(i, o));
    if (have_all) {
      ++resumed;
      return;
    }
    const auto contents = compute(i);
    for (std::size_t k = 0; k < outputs.size(); ++k) write_text(part_path(i, outputs[k]), contents.at(k));
    markers.mark(stage, ids[i]);
    ++computed;
    std::lock_guard<std::mutex> lock(log_mu);
    log << stage << ": " << ids[i] << " done\n";
  });

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      ++summary.failed;
      log << stage << ": " << ids[i] << " failed: " << errors[i] << "\n";
    }
  }
  summary.computed = computed;
  summary.resumed = resumed;

  // Deterministic reduce in item order.
  for (const auto& o : outputs) {
    std::string text = o.header.empty() ? "" : o.header + "\n";
    std::string body;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (errors[i].empty() && fs::exists(part_path(i, o))) body += read_text(part_path(i, o));
    }
    if (!o.header.empty()) summary.failed_rows += count_failed_rows(body);
    write_text(root / o.aggregate, text + body);
  }
  return summary;
}

void log_summary(const StageSummary& s, std::ostream& log) {
  log << s.stage << ": " << s.items << " items, " << s.computed << " computed, " << s.resumed << " resumed, "
      << s.failed << " failed";
  if (s.failed_rows) log << ", " << s.failed_rows << " failed rows";
  log << "\n";
}

RunManifest run_manifest(const ExperimentConfig& cfg) {
  const fs::path path = cfg.out_dir / "manifest.jsonl";
  if (!fs::exists(path)) throw Error("no manifest at " + path.string() + "; run the simulate stage first");
  return read_manifest(path);
}

std::vector<std::string> manifest_ids(const RunManifest& m) {
  std::vector<std::string> ids;
  for (const auto& u : m.utterances) ids.push_back(u.id);
  return ids;
}

}  // namespace

StageSummary run_simulate_stage(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cfg.simulation.count; ++i) ids.push_back(utterance_id(i));
  return run_stage(
      cfg, "simulate", ids, {{"json", "manifest.jsonl", ""}},
      [&](std::size_t i) { return std::vector<std::string>{manifest_line(simulate_utterance(cfg, i, cfg.out_dir)) + "\n"}; },
      log);
}

StageSummary run_doa_stage(const ExperimentConfig& cfg, std::ostream& log) {
  const RunManifest m = run_manifest(cfg);
  const fs::path svg = cfg.out_dir / "svg";
  return run_stage(
      cfg, "doa", manifest_ids(m), {{"csv", "doa.csv", kDoaCsvHeader}},
      [&](std::size_t i) {
        return std::vector<std::string>{doa_rows(cfg, m, m.utterances[i], cfg.spectrum_svg ? &svg : nullptr)};
      },
      log);
}

StageSummary run_separate_stage(const ExperimentConfig& cfg, std::ostream& log) {
  const RunManifest m = run_manifest(cfg);
  const fs::path svg = cfg.out_dir / "svg";
  const fs::path wavs = cfg.out_dir / "separated";
  return run_stage(
      cfg, "separate", manifest_ids(m), {{"csv", "separation.csv", kSeparationCsvHeader}},
      [&](std::size_t i) {
        return std::vector<std::string>{separation_rows(cfg, m, m.utterances[i],
                                                        cfg.separation.write_wavs ? &wavs : nullptr,
                                                        cfg.mask_svg ? &svg : nullptr)};
      },
      log);
}

StageSummary run_gradcheck_stage(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cfg.gradcheck.scenarios; ++i) ids.push_back("grad" + utterance_id(i).substr(3));
  return run_stage(
      cfg, "gradcheck", ids,
      {{"grad.csv", "gradcheck.csv", kGradcheckCsvHeader}, {"descent.csv", "descent.csv", kDescentCsvHeader}},
      [&](std::size_t i) {
        auto rows = gradcheck_rows(cfg, i);
        return std::vector<std::string>{rows.gradients, rows.descent};
      },
      log);
}

namespace {

struct Accum {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : std::nan(""); }
};

// Rows of a CSV file keyed by header name; the header is validated.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path, const char* header) {
  const auto lines = lines_of(read_text(path));
  if (lines.empty() || lines.front() != header) throw Error(path.string() + ": unexpected header");
  const auto cols = split(lines.front(), ',');
  std::vector<std::map<std::string, std::string>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto vals = split(lines[i], ',');
    if (vals.size() != cols.size()) throw Error(path.string() + ": malformed row " + std::to_string(i + 1));
    std::map<std::string, std::string> r;
    for (std::size_t k = 0; k < cols.size(); ++k) r[cols[k]] = vals[k];
    rows.push_back(std::move(r));
  }
  return rows;
}

double to_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw Error("bad number '" + s + "'");
  return v;
}

struct ReportRow {
  std::string section, method, setting, metric;
  double value;
  std::size_t count;
};

// Keeps first-seen order of keys.
template <typename V>
class OrderedMap {
 public:
  V& operator[](const std::string& k) {
    auto it = index_.find(k);
    if (it == index_.end()) {
      index_[k] = items_.size();
      items_.push_back({k, V{}});
      return items_.back().second;
    }
    return items_[it->second].second;
  }
  const std::vector<std::pair<std::string, V>>& items() const { return items_; }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, V>> items_;
};

}  // namespace

std::string write_report(const fs::path& dir) {
  std::vector<ReportRow> rows;

  if (fs::exists(dir / "doa.csv")) {
    struct Key {
      std::string method, gamma, estimator;
      Accum err;
    };
    OrderedMap<Key> groups;
    for (const auto& r : read_csv(dir / "doa.csv", kDoaCsvHeader)) {
      if (r.at("status") != "ok") continue;
      auto& g = groups[r.at("method") + "|" + r.at("gamma_deg") + "|" + r.at("estimator")];
      g.method = r.at("method");
      g.gamma = r.at("gamma_deg");
      g.estimator = r.at("estimator");
      g.err.add(to_number(r.at("error_deg")));
    }
    for (const auto& [k, g] : groups.items()) {
      rows.push_back({"doa", g.method + "/" + g.estimator, "gamma=" + g.gamma, "mean_error_deg", g.err.mean(),
                      g.err.count});
    }
  }

  if (fs::exists(dir / "separation.csv")) {
    struct Key {
      std::string bf, mask, doa;
      Accum sdr, mix, imp;
      std::size_t failed = 0;
    };
    OrderedMap<Key> groups;
    for (const auto& r : read_csv(dir / "separation.csv", kSeparationCsvHeader)) {
      auto& g = groups[r.at("beamformer") + "|" + r.at("mask") + "|" + r.at("doa")];
      g.bf = r.at("beamformer");
      g.mask = r.at("mask");
      g.doa = r.at("doa");
      if (r.at("status") != "ok") {
        ++g.failed;
        continue;
      }
      g.sdr.add(to_number(r.at("mean_sisdr_db")));
      g.mix.add(to_number(r.at("mixture_sisdr_db")));
      g.imp.add(to_number(r.at("improvement_db")));
    }
    for (const auto& [k, g] : groups.items()) {
      const std::string setting = "mask=" + g.mask + " doa=" + g.doa;
      rows.push_back({"separation", g.bf, setting, "mean_sisdr_db", g.sdr.mean(), g.sdr.count});
      rows.push_back({"separation", g.bf, setting, "mixture_sisdr_db", g.mix.mean(), g.mix.count});
      rows.push_back({"separation", g.bf, setting, "improvement_db", g.imp.mean(), g.imp.count});
      if (g.failed) {
        rows.push_back({"separation", g.bf, setting, "failed_rows", static_cast<double>(g.failed), g.failed});
      }
    }
  }

  if (fs::exists(dir / "gradcheck.csv")) {
    // A draw agrees when every parameter agrees; draws near a mask kink are
    // excluded from the comparison.
    struct Draw {
      bool agree = true;
      bool kink = false;
    };
    OrderedMap<Draw> draws;
    for (const auto& r : read_csv(dir / "gradcheck.csv", kGradcheckCsvHeader)) {
      auto& d = draws[r.at("scenario") + "|" + r.at("draw")];
      d.agree = d.agree && r.at("agree") == "1" && r.at("status") == "ok";
      d.kink = d.kink || r.at("near_kink") == "1";
    }
    std::size_t eligible = 0, agree = 0, kinks = 0;
    for (const auto& [k, d] : draws.items()) {
      if (d.kink) {
        ++kinks;
        continue;
      }
      ++eligible;
      if (d.agree) ++agree;
    }
    rows.push_back({"gradcheck", "analytic-vs-fd", "kink-excluded", "agreement_fraction",
                    eligible ? static_cast<double>(agree) / static_cast<double>(eligible) : std::nan(""), eligible});
    rows.push_back({"gradcheck", "analytic-vs-fd", "all", "near_kink_draws", static_cast<double>(kinks),
                    draws.items().size()});
  }

  if (fs::exists(dir / "descent.csv")) {
    Accum err;
    std::size_t converged = 0, total = 0;
    for (const auto& r : read_csv(dir / "descent.csv", kDescentCsvHeader)) {
      if (r.at("status") != "ok") continue;
      ++total;
      err.add(to_number(r.at("error_deg")));
      if (r.at("converged") == "1") ++converged;
    }
    rows.push_back({"descent", "descend_doa", "init=truth+offset", "converged_fraction",
                    total ? static_cast<double>(converged) / static_cast<double>(total) : std::nan(""), total});
    rows.push_back({"descent", "descend_doa", "init=truth+offset", "mean_final_error_deg", err.mean(), err.count});
  }

  std::string csv = "section,method,setting,metric,value,count\n";
  for (const auto& r : rows) {
    csv += r.section + "," + r.method + "," + r.setting + "," + r.metric + "," + fixed(r.value, 4) + "," +
           std::to_string(r.count) + "\n";
  }
  write_text(dir / "report.csv", csv);

  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"section", "method", "setting", "metric", "value (n)"});
  for (const auto& r : rows) {
    cells.push_back({r.section, r.method, r.setting, r.metric, fixed(r.value, 3) + " (" + std::to_string(r.count) + ")"});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& c : cells) {
    for (std::size_t k = 0; k < 5; ++k) width[k] = std::max(width[k], c[k].size());
  }
  std::string text;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string line;
    for (std::size_t k = 0; k < 5; ++k) {
      std::string cell = cells[i][k];
      if (k + 1 < 5) cell.resize(width[k] + 2, ' ');
      line += cell;
    }
    text += line + "\n";
    if (i == 0) text += std::string(line.size(), '-') + "\n";
  }
  write_text(dir / "report.txt", text);
  return text;
}

int run_pipeline(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  std::vector<StageSummary> summaries;
  summaries.push_back(run_simulate_stage(cfg, log));
  log_summary(summaries.back(), log);
  summaries.push_back(run_doa_stage(cfg, log));
  log_summary(summaries.back(), log);
  summaries.push_back(run_separate_stage(cfg, log));
  log_summary(summaries.back(), log);
  summaries.push_back(run_gradcheck_stage(cfg, log));
  log_summary(summaries.back(), log);
  log << write_report(cfg.out_dir);
  for (const auto& s : summaries) {
    if (s.failed || s.failed_rows) return 1;
  }
  return 0;
}

}  // namespace doawave
