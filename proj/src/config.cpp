#include "doawave/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "doawave/error.hpp"

namespace doawave {
namespace {

class Cursor {
 public:
  Cursor(const std::string& text, std::size_t line) : s_(text), line_(line) {}

  void skip_ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }
  bool done() {
    skip_ws();
    return i_ >= s_.size() || s_[i_] == '#';
  }
  char peek() {
    skip_ws();
    return i_ < s_.size() ? s_[i_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  TomlValue value() {
    const char c = peek();
    if (c == '"') return {string()};
    if (c == '[') {
      ++i_;
      TomlArray arr;
      if (peek() == ']') {
        ++i_;
        return {arr};
      }
      while (true) {
        arr.push_back(value());
        if (peek() == ',') {
          ++i_;
          if (peek() == ']') {
            ++i_;
            break;
          }
          continue;
        }
        expect(']');
        break;
      }
      return {arr};
    }
    std::size_t j = i_;
    while (j < s_.size() && s_[j] != ',' && s_[j] != ']' && s_[j] != '#' && s_[j] != ' ' &&
           s_[j] != '\t') {
      ++j;
    }
    const std::string word = s_.substr(i_, j - i_);
    i_ = j;
    if (word == "true") return {true};
    if (word == "false") return {false};
    std::string digits;
    for (char ch : word) {
      if (ch != '_') digits += ch;
    }
    char* end = nullptr;
    const double v = std::strtod(digits.c_str(), &end);
    if (digits.empty() || end != digits.c_str() + digits.size() || !std::isfinite(v)) {
      fail("cannot parse value '" + word + "'");
    }
    return {v};
  }

 private:
  std::string string() {
    expect('"');
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) ++i_;
      out += s_[i_++];
    }
    if (i_ >= s_.size()) fail("unterminated string");
    ++i_;
    return out;
  }

  const std::string& s_;
  std::size_t line_;
  std::size_t i_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

// Typed accessors that remember which keys were consumed.
class Reader {
 public:
  explicit Reader(const TomlTable& t) : t_(t) {}

  const TomlValue* find(const std::string& key) {
    const auto it = t_.find(key);
    if (it == t_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  void number(const std::string& key, double& out) {
    if (const auto* v = find(key)) out = as_number(key, *v);
  }
  void count(const std::string& key, std::size_t& out) {
    if (const auto* v = find(key)) out = as_count(key, *v);
  }
  void integer(const std::string& key, int& out) {
    if (const auto* v = find(key)) out = static_cast<int>(as_count(key, *v));
  }
  void flag(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<bool>(v->data)) throw ConfigError(key + ": expected true or false");
      out = std::get<bool>(v->data);
    }
  }
  void text(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) out = as_string(key, *v);
  }
  void interval(const std::string& key, Interval& out) {
    if (const auto* v = find(key)) {
      const auto xs = numbers(key, *v);
      if (xs.size() != 2) throw ConfigError(key + ": expected [lo, hi]");
      out = {xs[0], xs[1]};
    }
  }
  void vec3(const std::string& key, Eigen::Vector3d& out) {
    if (const auto* v = find(key)) {
      const auto xs = numbers(key, *v);
      if (xs.size() != 3) throw ConfigError(key + ": expected three numbers");
      out = {xs[0], xs[1], xs[2]};
    }
  }
  void number_list(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) out = numbers(key, *v);
  }
  template <typename T>
  void enum_list(const std::string& key, std::vector<T>& out,
                 const std::function<T(const std::string&)>& parse) {
    if (const auto* v = find(key)) {
      if (!std::holds_alternative<TomlArray>(v->data)) throw ConfigError(key + ": expected an array");
      out.clear();
      for (const auto& item : std::get<TomlArray>(v->data)) out.push_back(parse(as_string(key, item)));
    }
  }

  void reject_unused() const {
    for (const auto& [k, v] : t_) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  static double as_number(const std::string& key, const TomlValue& v) {
    if (!std::holds_alternative<double>(v.data)) throw ConfigError(key + ": expected a number");
    return std::get<double>(v.data);
  }
  static std::size_t as_count(const std::string& key, const TomlValue& v) {
    const double x = as_number(key, v);
    if (x < 0.0 || x != std::floor(x) || x > 9.0e15) {
      throw ConfigError(key + ": expected a non-negative integer");
    }
    return static_cast<std::size_t>(x);
  }
  static std::string as_string(const std::string& key, const TomlValue& v) {
    if (!std::holds_alternative<std::string>(v.data)) throw ConfigError(key + ": expected a string");
    return std::get<std::string>(v.data);
  }
  static std::vector<double> numbers(const std::string& key, const TomlValue& v) {
    if (!std::holds_alternative<TomlArray>(v.data)) throw ConfigError(key + ": expected an array");
    std::vector<double> out;
    for (const auto& item : std::get<TomlArray>(v.data)) out.push_back(as_number(key, item));
    return out;
  }

 private:
  const TomlTable& t_;
  std::set<std::string> used_;
};

template <typename F>
auto wrap_parse(F f) {
  return [f](const std::string& s) {
    try {
      return f(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  };
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
      }
      const std::string rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') {
        throw ConfigError("config line " + std::to_string(line_no) + ": text after section header");
      }
      section = trim(line.substr(1, close - 1));
      if (!valid_key(section)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ConfigError("config line " + std::to_string(line_no) + ": bad key");
    const std::string rhs = line.substr(eq + 1);
    Cursor cur(rhs, line_no);
    TomlValue v = cur.value();
    if (!cur.done()) cur.fail("trailing characters after value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + full);
    table.emplace(full, std::move(v));
  }
  return table;
}

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

std::string to_string(MaskSource m) {
  switch (m) {
    case MaskSource::kEstimated: return "estimated";
    case MaskSource::kIlm: return "ilm";
    case MaskSource::kIbm: return "ibm";
  }
  return "?";
}

MaskSource parse_mask_source(const std::string& s) {
  if (s == "estimated") return MaskSource::kEstimated;
  if (s == "ilm") return MaskSource::kIlm;
  if (s == "ibm") return MaskSource::kIbm;
  throw ConfigError("unknown mask source '" + s + "'");
}

ExperimentConfig config_from_toml(const TomlTable& table) {
  ExperimentConfig c;
  Reader r(table);

  double seed = static_cast<double>(c.seed);
  r.number("seed", seed);
  if (seed < 0.0 || seed != std::floor(seed) || seed > 9.0e15) throw ConfigError("seed: expected a non-negative integer");
  c.seed = static_cast<std::uint64_t>(seed);
  std::string out = c.out_dir.string();
  r.text("out", out);
  c.out_dir = out;
  r.count("jobs", c.jobs);
  r.flag("paper_ranges", c.paper_ranges);

  auto& sim = c.simulation;
  r.count("simulation.count", sim.count);
  r.number("simulation.duration_s", sim.duration_s);
  r.vec3("simulation.room_min_m", sim.ranges.room_min);
  r.vec3("simulation.room_max_m", sim.ranges.room_max);
  r.interval("simulation.t60_s", sim.ranges.t60_s);
  r.interval("simulation.source_range_m", sim.ranges.source_range_m);
  r.interval("simulation.source_height_m", sim.ranges.source_height_m);
  r.interval("simulation.array_height_m", sim.ranges.array_height_m);
  r.count("simulation.num_sources", sim.ranges.num_sources);
  r.number("simulation.min_separation_deg", sim.ranges.min_separation_deg);
  r.number("simulation.wall_margin_m", sim.ranges.wall_margin_m);
  r.flag("simulation.random_array_rotation", sim.ranges.random_array_rotation);
  r.count("simulation.max_order_cap", sim.max_order_cap);
  r.number("simulation.relative_level_db", sim.relative_level_db);
  std::string dry_dir;
  r.text("simulation.dry_dir", dry_dir);
  sim.dry_dir = dry_dir;

  r.count("array.num_mics", sim.ranges.num_mics);
  r.number("array.radius_m", sim.ranges.array_radius_m);
  r.number("array.speed_of_sound", sim.ranges.speed_of_sound);
  r.number_list("array.mic_angles_deg", c.mic_angles_deg);

  r.count("stft.fft_size", c.stft.fft_size);
  r.count("stft.hop", c.stft.hop);
  r.integer("stft.sample_rate", c.sample_rate);
  std::string window = "hann";
  r.text("stft.window", window);
  if (window == "hann") {
    c.stft.window = WindowType::kHann;
  } else if (window == "rectangular") {
    c.stft.window = WindowType::kRectangular;
  } else {
    throw ConfigError("stft.window: unknown window '" + window + "'");
  }

  auto& doa = c.doa;
  r.enum_list<DoaMethod>("doa.methods", doa.methods, wrap_parse(parse_doa_method));
  r.number_list("doa.gammas", doa.gammas);
  r.number("doa.min_separation_deg", doa.min_separation_deg);
  r.number("doa.band_lo_hz", doa.subspace.band.lo_hz);
  r.number("doa.band_hi_hz", doa.subspace.band.hi_hz);
  r.number("doa.srp_epsilon", doa.srp.epsilon);
  r.number("doa.posterior_window_deg", doa.posterior.window_deg);
  r.number("doa.posterior_temperature", doa.posterior.temperature);
  r.number("doa.posterior_seed_gamma_deg", doa.posterior.seed_gamma_deg);
  std::string expectation = "circular";
  r.text("doa.expectation", expectation);
  if (expectation == "circular") {
    doa.expectation = ExpectationMode::kCircular;
  } else if (expectation == "plain") {
    doa.expectation = ExpectationMode::kPlain;
  } else {
    throw ConfigError("doa.expectation: expected \"plain\" or \"circular\"");
  }
  doa.posterior.min_separation_deg = doa.min_separation_deg;
  doa.posterior.srp = doa.srp;

  auto& sep = c.separation;
  r.enum_list<BeamformerKind>("separate.beamformers", sep.beamformers, wrap_parse(parse_beamformer));
  r.enum_list<MaskSource>("separate.masks", sep.masks, parse_mask_source);
  std::string sep_doa = to_string(sep.doa);
  r.text("separate.doa", sep_doa);
  sep.doa = wrap_parse(parse_doa_method)(sep_doa);
  r.number("separate.kappa", sep.kappa);
  r.number("separate.mask_amplitude_scale", sep.mask_amplitude_scale);
  r.count("separate.ref_channel", sep.ref_channel);
  r.number("separate.loading", sep.loading);
  std::string reference = "image";
  r.text("separate.reference", reference);
  if (reference == "image") {
    sep.reference = ReferenceKind::kImage;
  } else if (reference == "dry") {
    sep.reference = ReferenceKind::kDry;
  } else {
    throw ConfigError("separate.reference: expected \"image\" or \"dry\"");
  }
  r.flag("separate.write_wavs", sep.write_wavs);

  auto& g = c.gradcheck;
  r.count("gradcheck.scenarios", g.scenarios);
  std::string gk = to_string(g.beamformer);
  r.text("gradcheck.beamformer", gk);
  g.beamformer = wrap_parse(parse_beamformer)(gk);
  r.count("gradcheck.draws_per_scenario", g.draws_per_scenario);
  r.number("gradcheck.spread_deg", g.spread_deg);
  r.number("gradcheck.min_separation_deg", g.min_separation_deg);
  r.number("gradcheck.step", g.step);
  r.number("gradcheck.tolerance", g.tolerance);
  r.number("gradcheck.duration_s", g.duration_s);
  r.number("gradcheck.loading", g.loading);
  r.number("gradcheck.descent_offset_deg", g.descent_offset_deg);
  r.count("gradcheck.descent_steps", g.descent_steps);
  r.number("gradcheck.descent_lr", g.descent_lr);
  r.number("gradcheck.converged_deg", g.converged_deg);

  r.flag("output.spectrum_svg", c.spectrum_svg);
  r.flag("output.mask_svg", c.mask_svg);

  r.reject_unused();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_toml(parse_toml_file(path));
}

void ExperimentConfig::validate() const {
  try {
    simulation.ranges.validate();
    stft.validate();
    geometry().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (sample_rate <= 0) throw ConfigError("stft.sample_rate must be positive");
  if (!(simulation.duration_s > 0.0)) throw ConfigError("simulation.duration_s must be positive");
  if (simulation.duration_s * sample_rate < static_cast<double>(stft.fft_size)) {
    throw ConfigError("simulation.duration_s is shorter than one STFT frame");
  }
  if (simulation.ranges.num_sources < 1) throw ConfigError("simulation.num_sources must be at least 1");
  if (!mic_angles_deg.empty() && mic_angles_deg.size() != simulation.ranges.num_mics) {
    throw ConfigError("array.mic_angles_deg must list array.num_mics angles");
  }
  for (double g : doa.gammas) {
    if (!(g > 0.0) || g > 360.0) throw ConfigError("doa.gammas: resolution must be in (0, 360]");
  }
  for (DoaMethod m : doa.methods) {
    if (m == DoaMethod::kOracle || m == DoaMethod::kPosterior) {
      throw ConfigError("doa.methods: only srp, music and tops are scanning methods");
    }
  }
  if (separation.doa == DoaMethod::kPosterior) {
    throw ConfigError("separate.doa: expected oracle, srp, music or tops");
  }
  if (!(separation.kappa >= 0.0 && separation.kappa < 1.0)) throw ConfigError("separate.kappa must be in [0, 1)");
  if (!(separation.mask_amplitude_scale > 0.0)) throw ConfigError("separate.mask_amplitude_scale must be positive");
  if (separation.ref_channel >= simulation.ranges.num_mics) {
    throw ConfigError("separate.ref_channel is not a channel of the array");
  }
  if (!(separation.loading >= 0.0)) throw ConfigError("separate.loading must be non-negative");
  if (!(gradcheck.step > 0.0)) throw ConfigError("gradcheck.step must be positive");
  if (!(gradcheck.duration_s * sample_rate >= static_cast<double>(stft.fft_size))) {
    throw ConfigError("gradcheck.duration_s is shorter than one STFT frame");
  }
  if (gradcheck.descent_steps > 0 && !(gradcheck.descent_lr > 0.0)) {
    throw ConfigError("gradcheck.descent_lr must be positive");
  }
  if (paper_ranges && !simulation.ranges.within_reference_protocol()) {
    throw ConfigError(
        "simulation ranges exceed the reference protocol (rooms 5x5x2.6 to 11x11x3.4 m, "
        "T60 0.15-0.5 s, sources 1.5-3 m, 5 cm array radius)");
  }
}

UcaGeometry ExperimentConfig::geometry() const {
  const auto& r = simulation.ranges;
  if (mic_angles_deg.empty()) return UcaGeometry::uniform(r.num_mics, r.array_radius_m, r.speed_of_sound);
  UcaGeometry g;
  g.radius_m = r.array_radius_m;
  g.speed_of_sound = r.speed_of_sound;
  for (double a : mic_angles_deg) g.mic_angles_rad.push_back(a * std::numbers::pi / 180.0);
  return g;
}

std::size_t resolve_jobs(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DOAWAVE_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

}  // namespace doawave
