/**
 * @file experiment.hpp
 * @brief Batch front-end: key-value configuration, scenario presets with
 * overrides, and CSV/plot-script output of a run.
 *
 * Configuration files hold one `key = value` pair per line; `#` starts a
 * comment. Keys match the command-line flags without the leading dashes.
 */
#pragma once

#include "sgswe/fv.hpp"
#include "sgswe/pce.hpp"
#include "sgswe/scenario.hpp"
#include "sgswe/uq.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sgswe {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "experiment", "K",      "M",       "dx",         "t-final",    "theta",
      "g",          "alpha",  "beta",    "collocation", "negative-region", "filter-discharge",
      "seed",       "samples", "out",    "level",      "delta",      "cfl",
      "integrator", "relaxation", "resolution"};
  return keys;
}

/// Raw key/value settings with where each came from.
struct Settings {
  std::map<std::string, std::string> values;
  std::map<std::string, std::string> origin;

  void set(const std::string& key, const std::string& value, const std::string& where) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    values[key] = value;
    origin[key] = where;
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  if (key == "t-final" || key == "tfinal") return "t-final";
  return key;
}

inline double parse_plain_number(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError(what + ": '" + std::string(s) + "' is not a number");
  return v;
}

}  // namespace detail

/// Parses numbers written either as decimals or as fractions such as "1/800".
inline double parse_real(const std::string& text, const std::string& what) {
  const std::string s = detail::trim(text);
  const auto slash = s.find('/');
  if (slash == std::string::npos) return detail::parse_plain_number(s, what);
  const double num = detail::parse_plain_number(detail::trim(std::string_view(s).substr(0, slash)), what);
  const double den = detail::parse_plain_number(detail::trim(std::string_view(s).substr(slash + 1)), what);
  if (den == 0.0) throw ConfigError(what + ": zero denominator in '" + s + "'");
  return num / den;
}

inline long parse_integer(const std::string& text, const std::string& what) {
  const std::string s = detail::trim(text);
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(what + ": '" + s + "' is not an integer");
  }
  return v;
}

inline bool parse_bool(const std::string& text, const std::string& what) {
  const std::string s = detail::trim(text);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": '" + s + "' is not a boolean");
}

/// Reads `key = value` lines into `settings`.
inline void parse_config(std::istream& in, const std::string& source, Settings& settings) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    const std::string body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + body + "'");
    const std::string key = detail::normalize_key(detail::trim(std::string_view(body).substr(0, eq)));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (value.empty()) throw ConfigError(where + ": missing value for '" + key + "'");
    settings.set(key, value, where);
  }
}

inline void parse_config_file(const std::filesystem::path& path, Settings& settings) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  parse_config(in, path.string(), settings);
}

struct RunOptions {
  Scenario scenario;
  SolverConfig solver;
  int collocation = 0;  ///< S; zero disables the collocation comparison
  bool negative_region = false;
  int resolution = 10000;
  std::uint64_t seed = 20240101;
  int samples = 100000;
  double level = 0.99;
  std::filesystem::path out = ".";
};

/// Preset selected by `experiment`, overridden by the remaining settings.
inline RunOptions build_options(const Settings& st) {
  const auto exp = st.get("experiment");
  if (!exp) throw ConfigError("usage: an experiment (ex1, ex2, ex3) must be selected");
  RunOptions o;
  try {
    o.scenario = scenarios::by_name(*exp);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(st.origin.at("experiment") + ": " + e.what());
  }
  Scenario& sc = o.scenario;
  auto where = [&](const std::string& key) { return st.origin.at(key) + " (" + key + ")"; };

  if (auto v = st.get("K")) sc.K = static_cast<int>(parse_integer(*v, where("K")));
  if (auto v = st.get("M")) {
    sc.M = static_cast<int>(parse_integer(*v, where("M")));
  } else if (st.get("K")) {
    sc.M = std::max(sc.M, min_quadrature_size(std::max(sc.K, 1)));
  }
  if (auto v = st.get("dx")) sc.dx = parse_real(*v, where("dx"));
  if (auto v = st.get("t-final")) sc.t_final = parse_real(*v, where("t-final"));
  if (auto v = st.get("theta")) sc.theta = parse_real(*v, where("theta"));
  if (auto v = st.get("g")) sc.g = parse_real(*v, where("g"));
  if (auto v = st.get("alpha")) sc.alpha = parse_real(*v, where("alpha"));
  if (auto v = st.get("beta")) sc.beta = parse_real(*v, where("beta"));
  if (auto v = st.get("filter-discharge")) sc.filter_discharge = parse_bool(*v, where("filter-discharge"));

  if (sc.K < 1) throw ConfigError(where("K") + ": K must be >= 1");
  if (sc.M < min_quadrature_size(sc.K)) {
    throw ConfigError("M = " + std::to_string(sc.M) + " violates M >= ceil(3K/2) - 1 = " +
                      std::to_string(min_quadrature_size(sc.K)));
  }
  if (!(sc.dx > 0.0)) throw ConfigError("dx must be > 0");
  try {
    (void)sc.cells();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dx: ") + e.what());
  }
  if (!(sc.t_final > 0.0)) throw ConfigError("t-final must be > 0");
  if (!(sc.alpha > -1.0)) throw ConfigError("alpha must be > -1");
  if (!(sc.beta > -1.0)) throw ConfigError("beta must be > -1");

  o.solver = solver_config_for(sc);
  if (auto v = st.get("delta")) o.solver.delta = parse_real(*v, where("delta"));
  if (auto v = st.get("cfl")) o.solver.cfl_safety = parse_real(*v, where("cfl"));
  if (auto v = st.get("relaxation")) o.solver.relaxation = parse_real(*v, where("relaxation"));
  if (auto v = st.get("integrator")) {
    if (*v == "euler") {
      o.solver.time_integrator = TimeIntegrator::ForwardEuler;
    } else if (*v == "ssprk2") {
      o.solver.time_integrator = TimeIntegrator::SspRk2;
    } else {
      throw ConfigError(where("integrator") + ": expected 'euler' or 'ssprk2'");
    }
  }
  try {
    o.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  if (auto v = st.get("collocation")) o.collocation = static_cast<int>(parse_integer(*v, where("collocation")));
  if (o.collocation < 0 || (o.collocation > 0 && o.collocation < sc.K)) {
    throw ConfigError("collocation: S must be >= K");
  }
  if (auto v = st.get("negative-region")) o.negative_region = parse_bool(*v, where("negative-region"));
  if (auto v = st.get("resolution")) o.resolution = static_cast<int>(parse_integer(*v, where("resolution")));
  if (auto v = st.get("seed")) o.seed = static_cast<std::uint64_t>(parse_integer(*v, where("seed")));
  if (auto v = st.get("samples")) o.samples = static_cast<int>(parse_integer(*v, where("samples")));
  if (auto v = st.get("level")) o.level = parse_real(*v, where("level"));
  if (auto v = st.get("out")) o.out = *v;
  if (o.samples < 1) throw ConfigError("samples must be >= 1");
  if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (o.resolution < 2) throw ConfigError("resolution must be >= 2");
  return o;
}

// ---------------------------------------------------------------------------
// output

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kFieldCsvHeader =
    "x,B_mean,B_lo,B_hi,w_mean,w_var,w_lo,w_hi,q_mean,q_var,q_lo,q_hi";

/// Per-cell statistics of the bottom, surface and discharge.
inline void write_field_csv(const std::filesystem::path& path, const Grid& grid, const Field& B, const Field& h,
                            const Field& q, const Matrix& sampled_phi, double level) {
  Vector x(grid.N);
  for (int i = 0; i < grid.N; ++i) x(i) = grid.center(i);
  const Field w = h + B;
  const Moments mb = moments(B);
  const Moments mw = moments(w);
  const Moments mq = moments(q);
  const QuantileBand bb = quantile_band(B, x, sampled_phi, level);
  const QuantileBand bw = quantile_band(w, x, sampled_phi, level);
  const QuantileBand bq = quantile_band(q, x, sampled_phi, level);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << kFieldCsvHeader << '\n';
  for (int i = 0; i < grid.N; ++i) {
    out << format_real(x(i)) << ',' << format_real(mb.mean(i)) << ',' << format_real(bb.lo(i)) << ','
        << format_real(bb.hi(i)) << ',' << format_real(mw.mean(i)) << ',' << format_real(mw.variance(i)) << ','
        << format_real(bw.lo(i)) << ',' << format_real(bw.hi(i)) << ',' << format_real(mq.mean(i)) << ','
        << format_real(mq.variance(i)) << ',' << format_real(bq.lo(i)) << ',' << format_real(bq.hi(i)) << '\n';
  }
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<StepDiagnostics>& steps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "step,t,dt,dt_h,dt_speed,min_node_height,filter_activations,max_imag_ratio,dry_sides,"
         "rejections,positivity_violations\n";
  for (const StepDiagnostics& d : steps) {
    out << d.step << ',' << format_real(d.t) << ',' << format_real(d.dt) << ',' << format_real(d.dt_h) << ','
        << format_real(d.dt_speed) << ',' << format_real(d.min_node_height) << ',' << d.filter_activations << ','
        << format_real(d.max_imag_ratio) << ',' << d.dry_sides << ',' << d.rejections << ',' << d.positivity_violations << '\n';
  }
}

inline void write_negative_region_csv(const std::filesystem::path& path, int M, const NegativeRegionReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "M,max_node,region_lo,region_hi,probability\n";
  if (r.region.empty()) {
    out << M << ',' << format_real(r.max_node) << ",,," << format_real(0.0) << '\n';
  }
  for (const Interval& I : r.region) {
    out << M << ',' << format_real(r.max_node) << ',' << format_real(I.lo) << ',' << format_real(I.hi) << ','
        << format_real(r.probability) << '\n';
  }
}

inline void write_plot_script(const std::filesystem::path& path, const std::string& name, bool with_sc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  const std::string sg = name + "_sg.csv";
  const std::string sc = name + "_sc.csv";
  out << "# gnuplot script: gnuplot " << path.filename().string() << "\n"
      << "set datafile separator ','\n"
      << "set terminal pngcairo size 1200,500\n"
      << "set key top right\n"
      << "set output '" << name << "_w.png'\n"
      << "set title 'water surface and bottom'\n"
      << "plot '" << sg << "' every ::1 using 1:7:8 with filledcurves lc rgb '#a0c0ff' title 'w band', \\\n"
      << "     '" << sg << "' every ::1 using 1:5 with lines lc rgb 'blue' title 'E[w]', \\\n"
      << "     '" << sg << "' every ::1 using 1:3:4 with filledcurves lc rgb '#c0a080' title 'B band', \\\n"
      << "     '" << sg << "' every ::1 using 1:2 with lines lc rgb 'brown' title 'E[B]'\n"
      << "set output '" << name << "_q.png'\n"
      << "set title 'discharge'\n"
      << "plot '" << sg << "' every ::1 using 1:11:12 with filledcurves lc rgb '#a0c0ff' title 'q band', \\\n"
      << "     '" << sg << "' every ::1 using 1:9 with lines lc rgb 'blue' title 'E[q]'";
  if (with_sc) {
    out << ", \\\n     '" << sc << "' every ::1 using 1:9 with lines lc rgb 'red' title 'E[q] collocation'\n"
        << "set output '" << name << "_w_sc.png'\n"
        << "set title 'water surface, collocation'\n"
        << "plot '" << sc << "' every ::1 using 1:7:8 with filledcurves lc rgb '#ffc0a0' title 'w band', \\\n"
        << "     '" << sc << "' every ::1 using 1:5 with lines lc rgb 'red' title 'E[w]'";
  }
  out << '\n';
}

/// Solver failure during an experiment; `diagnostics` holds the steps taken.
class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(const std::string& what, std::filesystem::path diag)
      : std::runtime_error(what), diagnostics(std::move(diag)) {}
  std::filesystem::path diagnostics;
};

struct ExperimentResult {
  StateField final_state;
  std::vector<StepDiagnostics> steps;
  std::optional<CollocationResult> collocation;
  std::optional<NegativeRegionReport> negative;
  std::vector<std::filesystem::path> files;
};

inline ExperimentResult run_experiment(const RunOptions& o) {
  const Scenario& sc = o.scenario;
  const Basis basis(sc.alpha, sc.beta, sc.K);
  const QuadratureRule rule = gauss_rule(basis, sc.M);
  const Grid grid = sc.grid();
  const Solver solver(basis, rule, grid, o.solver);

  ExperimentResult res;
  const std::string name = sc.name;
  std::filesystem::create_directories(o.out);
  const auto diag_path = o.out / (name + "_diagnostics.csv");
  try {
    Trajectory traj = solver.run(initial_state(sc, basis, grid), sc.t_final,
                                 [&](const StateField&, const StepDiagnostics& d) { res.steps.push_back(d); });
    res.final_state = std::move(traj.final_state);
  } catch (const SolverError& e) {
    write_diagnostics_csv(diag_path, res.steps);
    throw ExperimentError(e.what(), diag_path);
  }
  const Matrix sampled = sample_basis(basis, o.samples, o.seed);

  const auto sg_path = o.out / (name + "_sg.csv");
  write_field_csv(sg_path, grid, res.final_state.B_bar, res.final_state.h_bar, res.final_state.q_bar, sampled,
                  o.level);
  res.files.push_back(sg_path);
  write_diagnostics_csv(diag_path, res.steps);
  res.files.push_back(diag_path);

  if (o.collocation > 0) {
    res.collocation = collocation_solve(sc, o.collocation, sc.K, o.solver);
    const auto sc_path = o.out / (name + "_sc.csv");
    write_field_csv(sc_path, grid, res.final_state.B_bar, res.collocation->h, res.collocation->q, sampled, o.level);
    res.files.push_back(sc_path);
  }
  if (o.negative_region) {
    res.negative = negative_region(res.final_state.h_bar, basis, rule, o.resolution);
    const auto neg_path = o.out / (name + "_negative_region.csv");
    write_negative_region_csv(neg_path, sc.M, *res.negative);
    res.files.push_back(neg_path);
  }
  const auto plot_path = o.out / (name + "_plot.gp");
  write_plot_script(plot_path, name, o.collocation > 0);
  res.files.push_back(plot_path);
  return res;
}

}  // namespace sgswe
