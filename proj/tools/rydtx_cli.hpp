#pragma once

// Command-line front end. parse_and_validate() turns argv plus an optional
// config file into a RunManifest; execute() runs one pipeline and writes its
// result file and a provenance sidecar into the output directory.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "rydtx/config.hpp"
#include "rydtx/detection.hpp"
#include "rydtx/errors.hpp"
#include "rydtx/fitting.hpp"
#include "rydtx/io.hpp"
#include "rydtx/models.hpp"
#include "rydtx/montecarlo.hpp"

namespace rydtx::cli {

inline constexpr const char* kToolName = "rydtx";
inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kInvalidConfig = 3, kNumerical = 4, kIo = 5 };

enum class Command { contrast_scan, gain_scan, transfer_scan, simulate, fit_od, fit_saturation, detect };
enum class Format { csv, json };

inline const std::map<std::string, Command>& command_names() {
  static const std::map<std::string, Command> names{
      {"contrast-scan", Command::contrast_scan}, {"gain-scan", Command::gain_scan},
      {"transfer-scan", Command::transfer_scan}, {"simulate", Command::simulate},
      {"fit-od", Command::fit_od},               {"fit-saturation", Command::fit_saturation},
      {"detect", Command::detect}};
  return names;
}

inline std::string to_string(Command c) {
  for (const auto& [name, cmd] : command_names())
    if (cmd == c) return name;
  return "?";
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully resolved run settings: config file values, defaults, then flags.
struct Settings {
  TransistorParams model{};  ///< analytic model constants
  std::optional<SaturationParams> sat{};
  SimConfig sim{};           ///< simulator configuration (instantaneous od_st)
  std::string p_store_rule = "fock";
  std::string retention_rule = "inf";
  std::size_t runs = 0;
  std::size_t bootstrap = 200;
  std::vector<double> n_gate_values;
  std::vector<double> n_source_values;
  double detect_n_stored = 0.61;
  std::optional<double> detect_mu0;
};

struct RunManifest {
  std::string config_path;  ///< empty: built-in defaults
  Command command = Command::simulate;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  Format format = Format::csv;
  bool force = false;
  unsigned threads = 1;
  std::string input_path;
  GateMode mode = GateMode::incoming;
  Settings settings{};

  friend bool operator==(const RunManifest& a, const RunManifest& b) {
    return a.config_path == b.config_path && a.command == b.command && a.seed == b.seed &&
           a.output_dir == b.output_dir && a.format == b.format && a.force == b.force && a.threads == b.threads &&
           a.input_path == b.input_path && a.mode == b.mode && a.settings.runs == b.settings.runs;
  }
};

inline std::vector<double> arange(double start, double stop, double step) {
  std::vector<double> v;
  for (int i = 0;; ++i) {
    const double x = start + i * step;
    if (x > stop + 1e-9 * step) break;
    v.push_back(x);
  }
  return v;
}

inline std::size_t default_runs(Command c) {
  switch (c) {
    case Command::contrast_scan: return 10000;
    case Command::transfer_scan: return 2000;
    case Command::simulate: return 250;
    case Command::detect: return 250;
    default: return 0;
  }
}

/// Builds Settings from the config; every problem is collected, not just the first.
inline Settings resolve_settings(const Config& cfg, Command command, std::vector<std::string>& errors) {
  Settings s;
  auto num = [&](const std::string& key, double& target) {
    if (auto v = cfg.get_double(key, errors)) target = *v;
  };
  num("transistor.od_sp", s.model.od_sp);
  num("transistor.od_st", s.model.od_st);
  if (auto v = cfg.get_int("transistor.cap", errors)) s.model.cap = static_cast<int>(*v);
  num("transistor.a_ge", s.model.a_ge);
  num("transistor.eta_det", s.model.eta_det);
  for (auto& e : s.model.violations()) errors.push_back("transistor: " + e);

  const bool has_a = cfg.has("saturation.a"), has_b = cfg.has("saturation.b");
  if (has_a || has_b) {
    SaturationParams sat;
    num("saturation.a", sat.a);
    num("saturation.b", sat.b);
    if (has_a != has_b) errors.emplace_back("saturation: both a and b are required");
    for (auto& e : sat.violations()) errors.push_back(e);
    s.sat = sat;
  }

  SimConfig& sim = s.sim;
  sim.params = s.model;
  sim.sat = s.sat;
  num("source.rate", sim.source_rate);
  num("source.t_int", sim.t_int);
  num("gate.n_gate_in", sim.n_gate_in);

  if (auto v = cfg.get("gate.p_store")) s.p_store_rule = *v;
  if (auto v = cfg.get("flyaway.retention_tau")) s.retention_rule = *v;
  double od_instant = s.model.od_st;
  num("flyaway.od_instant", od_instant);

  if (errors.empty()) {
    if (s.p_store_rule == "fock") {
      try {
        sim.p_store = fock_consistent_store_probability(s.model);
      } catch (const DomainError& e) {
        errors.push_back(std::string("gate.p_store = fock: ") + e.what());
      }
    } else {
      try {
        sim.p_store = io::parse_double(s.p_store_rule);
      } catch (const io::FormatError&) {
        errors.push_back("gate.p_store: expected a number or 'fock'");
      }
    }
    if (s.retention_rule == "auto") {
      try {
        sim.retention_tau = calibrate_retention_tau(od_instant, s.model.od_st, sim.t_int);
        sim.params.od_st = od_instant;
      } catch (const DomainError& e) {
        errors.push_back(std::string("flyaway.retention_tau = auto: ") + e.what());
      }
    } else if (s.retention_rule == "inf") {
      sim.retention_tau = kInfiniteRetention;
    } else {
      try {
        sim.retention_tau = io::parse_double(s.retention_rule);
      } catch (const io::FormatError&) {
        errors.push_back("flyaway.retention_tau: expected a number, 'inf' or 'auto'");
      }
    }
  }

  if (auto v = cfg.get_list("scan.n_gate", errors)) s.n_gate_values = *v;
  else s.n_gate_values = arange(0.25, 3.5, 0.25);
  if (auto v = cfg.get_list("scan.n_source", errors)) s.n_source_values = *v;
  else s.n_source_values = arange(25.0, 250.0, 25.0);
  if (auto v = cfg.get_int("scan.bootstrap", errors)) {
    if (*v < 100) errors.emplace_back("scan.bootstrap must be >= 100");
    else s.bootstrap = static_cast<std::size_t>(*v);
  }
  num("detect.n_stored", s.detect_n_stored);
  if (auto v = cfg.get_double("detect.mu0", errors)) s.detect_mu0 = *v;
  if (!(s.detect_n_stored > 0.0)) errors.emplace_back("detect.n_stored must be > 0");
  if (s.detect_mu0 && !(*s.detect_mu0 > 0.0)) errors.emplace_back("detect.mu0 must be > 0");
  for (double x : s.n_gate_values)
    if (!(x >= 0.0)) errors.emplace_back("scan.n_gate values must be >= 0");
  for (double x : s.n_source_values)
    if (!(x >= 0.0)) errors.emplace_back("scan.n_source values must be >= 0");

  if (errors.empty()) {
    for (auto& e : sim.violations()) errors.push_back("simulation: " + e);
  }
  if ((command == Command::gain_scan || command == Command::transfer_scan) && !s.sat)
    errors.emplace_back(to_string(command) + " requires [saturation] a and b");
  return s;
}

/// Strict argv parsing. Throws UsageError (exit 2), ValidationError (exit 3)
/// or IoError (exit 5, unreadable config).
inline RunManifest parse_and_validate(const std::vector<std::string>& args) {
  CLI::App app{"Rydberg single-photon transistor simulator and analysis toolkit", kToolName};
  app.require_subcommand(1);

  struct Raw {
    std::string config, output = ".", format, input, mode = "incoming";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> runs, threads;
    bool force = false;
  };
  std::map<std::string, Raw> raw;
  for (const auto& [name, cmd] : command_names()) {
    auto* sub = app.add_subcommand(name);
    auto& r = raw[name];
    sub->add_option("--config", r.config, "configuration file (key = value, [sections])");
    sub->add_option("--seed", r.seed, "64-bit master seed");
    sub->add_option("--runs", r.runs, "Monte Carlo runs per ensemble");
    sub->add_option("--output", r.output, "output directory");
    sub->add_option("--format", r.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--force", r.force, "overwrite existing outputs");
    sub->add_option("--threads", r.threads, "worker threads, 0 = auto");
    if (cmd == Command::fit_od || cmd == Command::fit_saturation || cmd == Command::detect)
      sub->add_option("--input", r.input, cmd == Command::detect ? "histogram CSV (events,runs)" : "data CSV (x,y,sigma)");
    if (cmd == Command::fit_od)
      sub->add_option("--mode", r.mode, "incoming or stored")->check(CLI::IsMember({"incoming", "stored"}));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const auto* sub = app.get_subcommands().front();
  RunManifest m;
  m.command = command_names().at(sub->get_name());
  const Raw& r = raw.at(sub->get_name());

  Config cfg;
  if (!r.config.empty()) {
    m.config_path = r.config;
    try {
      cfg = Config::load(r.config);
    } catch (const std::ios_base::failure& e) {
      throw IoError(e.what());
    } catch (const ConfigError& e) {
      throw ValidationError({std::string("config: ") + e.what()});
    }
  }

  std::vector<std::string> errors;
  m.settings = resolve_settings(cfg, m.command, errors);

  // Flags win over [run] keys in the config.
  std::optional<std::int64_t> runs = cfg.get_int("run.runs", errors);
  if (r.runs) runs = r.runs;
  std::optional<std::int64_t> threads = cfg.get_int("run.threads", errors);
  if (r.threads) threads = r.threads;
  std::optional<std::uint64_t> seed;
  if (auto v = cfg.get("run.seed")) {
    try {
      seed = std::stoull(*v);
    } catch (const std::exception&) {
      if (!r.seed) errors.push_back("run.seed: not an unsigned integer");
    }
  }
  if (r.seed) seed = r.seed;
  const auto cfg_format = cfg.get("run.format");
  std::string format = r.format.empty() ? cfg_format.value_or("csv") : r.format;
  if (format != "csv" && format != "json") errors.push_back("format must be csv or json");

  if (runs && *runs < 1) errors.emplace_back("runs must be >= 1");
  if (threads && *threads < 0) errors.emplace_back("threads must be >= 0");
  if ((m.command == Command::fit_od || m.command == Command::fit_saturation) && r.input.empty())
    errors.emplace_back(to_string(m.command) + " requires --input");
  for (const auto& k : cfg.unused_keys()) errors.push_back("unknown config key: " + k);
  if (!errors.empty()) throw ValidationError(errors);

  m.seed = seed.value_or(0);
  m.settings.sim.seed = m.seed;
  m.settings.runs = runs ? static_cast<std::size_t>(*runs) : default_runs(m.command);
  m.threads = threads ? static_cast<unsigned>(*threads) : 1u;
  m.format = format == "json" ? Format::json : Format::csv;
  m.output_dir = r.output;
  m.force = r.force;
  m.input_path = r.input;
  m.mode = r.mode == "stored" ? GateMode::stored : GateMode::incoming;
  return m;
}

// --- execution ------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream ss;
  for (unsigned i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return ss.str();
}

inline nlohmann::ordered_json settings_json(const RunManifest& m) {
  const auto& s = m.settings;
  nlohmann::ordered_json j;
  j["transistor"] = {{"od_sp", s.model.od_sp}, {"od_st", s.model.od_st}, {"cap", s.model.cap},
                     {"a_ge", s.model.a_ge},   {"eta_det", s.model.eta_det}};
  if (s.sat) j["saturation"] = {{"a", s.sat->a}, {"b", s.sat->b}};
  j["simulation"] = {{"n_gate_in", s.sim.n_gate_in},
                     {"p_store", s.sim.p_store},
                     {"p_store_rule", s.p_store_rule},
                     {"od_st_instant", s.sim.params.od_st},
                     {"source_rate", s.sim.source_rate},
                     {"t_int", s.sim.t_int},
                     {"retention_tau", std::isinf(s.sim.retention_tau) ? nlohmann::ordered_json("inf")
                                                                       : nlohmann::ordered_json(s.sim.retention_tau)},
                     {"retention_rule", s.retention_rule}};
  j["scan"] = {{"n_gate", s.n_gate_values}, {"n_source", s.n_source_values}, {"bootstrap", s.bootstrap}};
  j["detect"] = {{"n_stored", s.detect_n_stored}};
  if (s.detect_mu0) j["detect"]["mu0"] = *s.detect_mu0;
  j["run"] = {{"runs", s.runs}, {"seed", m.seed}};
  return j;
}

struct Artifact {
  std::string name;
  std::string content;
};

class OutputWriter {
 public:
  explicit OutputWriter(const RunManifest& m) : m_(m) {}

  void add(std::string name, std::string content) { artifacts_.push_back({std::move(name), std::move(content)}); }

  std::string extension() const { return m_.format == Format::json ? ".json" : ".csv"; }

  /// Writes every artifact plus the provenance sidecar. Refuses to replace
  /// existing files unless forced.
  void commit(const nlohmann::ordered_json& extra = {}) const {
    namespace fs = std::filesystem;
    const fs::path dir(m_.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    const std::string sidecar = to_string(m_.command) + ".provenance.json";
    if (!m_.force) {
      for (const auto& a : artifacts_)
        if (fs::exists(dir / a.name)) throw IoError("refusing to overwrite " + (dir / a.name).string() + " (use --force)");
      if (fs::exists(dir / sidecar)) throw IoError("refusing to overwrite " + (dir / sidecar).string() + " (use --force)");
    }
    nlohmann::ordered_json prov;
    prov["tool"] = kToolName;
    prov["version"] = kToolVersion;
    prov["command"] = to_string(m_.command);
    prov["seed"] = m_.seed;
    prov["threads"] = m_.threads;
    prov["format"] = m_.format == Format::json ? "json" : "csv";
    prov["config_path"] = m_.config_path;
    if (!m_.input_path.empty()) prov["input"] = m_.input_path;
    prov["resolved_config"] = settings_json(m_);
    nlohmann::ordered_json outs = nlohmann::ordered_json::array();
    for (const auto& a : artifacts_) {
      write(dir / a.name, a.content);
      outs.push_back({{"file", a.name}, {"sha256", sha256_hex(a.content)}});
    }
    prov["outputs"] = outs;
    if (!extra.is_null()) prov["summary"] = extra;
    prov["created_utc"] = timestamp();
    write(dir / sidecar, prov.dump(2) + "\n");
  }

 private:
  static void write(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
  }

  static std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
  }

  const RunManifest& m_;
  std::vector<Artifact> artifacts_;
};

inline std::string render(const RunManifest& m, const io::Table& t) {
  return m.format == Format::json ? io::table_to_json(t).dump(2) + "\n" : io::table_to_csv(t);
}

/// Three-column numeric CSV with any header names, read by position.
inline DataSet read_dataset(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::ios_base::failure& e) {
    throw IoError(e.what());
  }
  auto first = text.substr(0, text.find('\n'));
  if (first.substr(0, 3) == "\xEF\xBB\xBF") first = first.substr(3);
  std::vector<std::string> header;
  for (auto c : io::split(io::trim(first))) header.emplace_back(c);
  if (header.size() != 3) throw io::FormatError("expected three columns x, y, sigma in " + path);
  DataSet d = io::dataset_from_csv(text, header);
  d.label = path;
  return d;
}

inline io::Table fit_table(const FitResult& r) {
  io::Table t{{"value", "ci_lo", "ci_hi", "sse", "converged", "at_boundary", "n_boot"}, {}};
  for (const auto& p : r.params)
    t.rows.push_back({p.value, p.ci_68.lo, p.ci_68.hi, r.sse, r.converged ? 1.0 : 0.0, r.at_boundary ? 1.0 : 0.0,
                      static_cast<double>(r.n_boot)});
  return t;
}

inline std::string fit_output(const RunManifest& m, const FitResult& r) {
  if (m.format == Format::json) {
    nlohmann::ordered_json j;
    for (const auto& p : r.params)
      j["params"].push_back({{"name", p.name}, {"value", p.value}, {"ci_lo", p.ci_68.lo}, {"ci_hi", p.ci_68.hi}});
    j["sse"] = r.sse;
    j["converged"] = r.converged;
    j["at_boundary"] = r.at_boundary;
    j["n_boot"] = r.n_boot;
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
  }
  std::string out = "parameter,value,ci_lo,ci_hi,sse,converged,at_boundary,n_boot\n";
  for (const auto& p : r.params)
    out += p.name + "," + io::format_number(p.value) + "," + io::format_number(p.ci_68.lo) + "," +
           io::format_number(p.ci_68.hi) + "," + io::format_number(r.sse) + "," + (r.converged ? "1" : "0") + "," +
           (r.at_boundary ? "1" : "0") + "," + std::to_string(r.n_boot) + "\n";
  return out;
}

inline void run_contrast_scan(const RunManifest& m, OutputWriter& w) {
  const auto& s = m.settings;
  const DataSet ds = contrast_scan(s.sim, s.n_gate_values, s.runs, m.threads, s.bootstrap);
  io::Table t{{"n_gate_in", "contrast", "sigma"}, {}};
  for (const auto& p : ds.points) t.rows.push_back({p.x, p.y, p.sigma});
  w.add("contrast_scan" + w.extension(), render(m, t));
}

inline void run_gain_scan(const RunManifest& m, OutputWriter& w) {
  const auto& s = m.settings;
  const double c_coh = expected_contrast_incoming(s.sim.n_gate_in, s.model.od_sp, s.model.cap);
  const double c_fock = fock_contrast(1, s.model.od_sp, s.model.cap);
  const double c_stored = fock_contrast(1, s.model.od_st, s.model.cap);
  io::Table t{{"n_source_in", "no_gate", "with_gate", "gain_coherent", "gain_fock", "gain_stored"}, {}};
  for (double n : s.n_source_values) {
    const double no = transfer(n, *s.sat);
    t.rows.push_back({n, no, (1.0 - c_coh) * no, gain(no, (1.0 - c_coh) * no), gain(no, (1.0 - c_fock) * no),
                      gain(no, (1.0 - c_stored) * no)});
  }
  w.add("gain_scan" + w.extension(), render(m, t));
}

inline void run_transfer_scan(const RunManifest& m, OutputWriter& w) {
  const auto& s = m.settings;
  const auto pts = transfer_scan(s.sim, s.n_source_values, s.runs, m.threads);
  const double c = expected_window_contrast(s.sim);
  io::Table t{{"n_source_in", "no_gate", "no_gate_sigma", "with_gate", "with_gate_sigma", "model_no_gate",
               "model_with_gate"},
              {}};
  for (const auto& p : pts) {
    const double model = transfer(p.n_source_in, *s.sat);
    t.rows.push_back({p.n_source_in, p.no_gate, p.no_gate_sigma, p.with_gate, p.with_gate_sigma, model, (1.0 - c) * model});
  }
  w.add("transfer_scan" + w.extension(), render(m, t));
}

inline nlohmann::ordered_json ensemble_json(const EnsembleResult& e) {
  return {{"n_runs", e.n_runs},
          {"mean_source_detected", e.mean_source_detected},
          {"mean_source_transmitted", e.mean_source_transmitted},
          {"mean_gate_detected", e.mean_gate_detected},
          {"mean_stored", e.mean_stored}};
}

inline nlohmann::ordered_json run_simulate(const RunManifest& m, OutputWriter& w) {
  const auto e = simulate_ensemble(m.settings.sim, m.settings.runs, m.threads);
  if (m.format == Format::json) {
    auto j = ensemble_json(e);
    j["histogram"] = io::histogram_to_json(e.histogram);
    w.add("simulate.json", j.dump(2) + "\n");
  } else {
    w.add("simulate.csv", io::histogram_to_csv(e.histogram));
  }
  return ensemble_json(e);
}

inline void run_fit(const RunManifest& m, OutputWriter& w) {
  const DataSet data = read_dataset(m.input_path);
  FitOptions opts;
  opts.n_boot = m.settings.bootstrap;
  opts.seed = m.seed;
  const FitResult r = m.command == Command::fit_od ? fit_od(data, m.settings.model.cap, m.mode, opts)
                                                   : fit_saturation(data, opts);
  const std::string stem = m.command == Command::fit_od ? "fit_od" : "fit_saturation";
  w.add(stem + w.extension(), fit_output(m, r));
}

inline nlohmann::ordered_json run_detect(const RunManifest& m, OutputWriter& w) {
  const auto& s = m.settings;
  CountHistogram observed;
  double mu0 = 0.0;
  nlohmann::ordered_json summary;
  if (!m.input_path.empty()) {
    try {
      observed = io::histogram_from_csv(io::read_file(m.input_path));
    } catch (const std::ios_base::failure& e) {
      throw IoError(e.what());
    }
    if (!s.detect_mu0) throw ValidationError({"detect with --input requires detect.mu0 in the config"});
    mu0 = *s.detect_mu0;
  } else {
    // Measurement-like dataset: reference (no gate) and gated ensembles.
    SimConfig gated = s.sim;
    const double per_photon = (1.0 - gated.params.a_ge) * gated.p_store;
    if (!(per_photon > 0.0)) throw ValidationError({"storage probability is zero"});
    gated.n_gate_in = s.detect_n_stored / per_photon;
    SimConfig reference = gated;
    reference.n_gate_in = 0.0;
    reference.seed = mix64(m.seed ^ 0xEF);
    const auto ref = simulate_ensemble(reference, s.runs, m.threads);
    observed = simulate_ensemble(gated, s.runs, m.threads).histogram;
    mu0 = s.detect_mu0.value_or(ref.mean_source_detected);
    summary["reference"] = ensemble_json(ref);
    if (!(mu0 > 0.0)) throw ValidationError({"reference ensemble detected no photons; mu0 undefined"});
  }
  const auto model = mixture_from_params(s.detect_n_stored, s.model.cap, s.model.od_st, mu0);
  const auto dec = decompose(observed, model);
  const auto thr = optimal_threshold(model);

  if (m.format == Format::json) {
    w.add("detect_decomposition.json", io::decomposition_to_json(dec).dump(2) + "\n");
  } else {
    w.add("detect_decomposition.csv", io::decomposition_to_csv(dec));
  }
  io::Table t{{"tau", "fidelity", "p_detect_given_gated", "p_reject_given_ungated", "balanced_accuracy", "mu0",
               "gated_fraction", "gof_chi2", "gof_dof", "gof_p"},
              {}};
  t.rows.push_back({static_cast<double>(thr.tau), thr.fidelity, thr.p_detect_given_gated, thr.p_reject_given_ungated,
                    thr.balanced_accuracy, mu0, model.gated_weight(), dec.chi2, static_cast<double>(dec.dof),
                    dec.p_value});
  w.add("detect_threshold" + w.extension(), render(m, t));
  summary["non_discriminating"] = thr.non_discriminating;
  return summary;
}

/// Reports a numerical failure and leaves a diagnostics file next to the outputs.
inline int numerical_failure(const RunManifest& m, const std::string& what, const std::vector<std::string>& details,
                             std::ostream& err) {
  err << "error: " << what << "\n";
  nlohmann::ordered_json diag{{"command", to_string(m.command)}, {"error", what}, {"diagnostics", details}};
  std::error_code ec;
  std::filesystem::create_directories(m.output_dir, ec);
  std::ofstream(std::filesystem::path(m.output_dir) / (to_string(m.command) + ".diagnostics.json")) << diag.dump(2) << "\n";
  return kNumerical;
}

/// Runs the manifest's pipeline. Returns the process exit code.
inline int execute(const RunManifest& m, std::ostream& err = std::cerr) {
  OutputWriter w(m);
  try {
    nlohmann::ordered_json summary;
    switch (m.command) {
      case Command::contrast_scan: run_contrast_scan(m, w); break;
      case Command::gain_scan: run_gain_scan(m, w); break;
      case Command::transfer_scan: run_transfer_scan(m, w); break;
      case Command::simulate: summary = run_simulate(m, w); break;
      case Command::fit_od:
      case Command::fit_saturation: run_fit(m, w); break;
      case Command::detect: summary = run_detect(m, w); break;
    }
    w.commit(summary);
    return kOk;
  } catch (const ConvergenceError& e) {
    return numerical_failure(m, e.what(), e.diagnostics(), err);
  } catch (const InsufficientDataError& e) {
    return numerical_failure(m, e.what(), {}, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    err << "invalid configuration:\n";
    for (const auto& v : e.violations()) err << "  - " << v << "\n";
    return kInvalidConfig;
  } catch (const std::domain_error& e) {
    return numerical_failure(m, e.what(), {}, err);
  }
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunManifest m;
  try {
    m = parse_and_validate(args);
  } catch (const CLI::CallForHelp&) {
    out << "usage: rydtx <contrast-scan|gain-scan|transfer-scan|simulate|fit-od|fit-saturation|detect> "
           "[--config FILE] [--seed N] [--runs N] [--output DIR] [--format csv|json] [--force] [--threads N] "
           "[--input FILE] [--mode incoming|stored]\n";
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    err << "invalid configuration:\n";
    for (const auto& v : e.violations()) err << "  - " << v << "\n";
    return kInvalidConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return execute(m, err);
}

}  // namespace rydtx::cli
