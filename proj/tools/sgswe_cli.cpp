// Command-line driver for the stochastic Galerkin shallow water experiments.

#include "sgswe/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

void report(const sgswe::RunOptions& o, const sgswe::ExperimentResult& r) {
  const auto& sc = o.scenario;
  std::printf("%s: K=%d M=%d N=%d t=%.6g steps=%zu\n", sc.name.c_str(), sc.K, sc.M, sc.cells(), r.final_state.t,
              r.steps.size());
  double min_h = 1e300;
  double imag = 0.0;
  int filtered = 0;
  int rejected = 0;
  int dry = 0;
  for (const auto& d : r.steps) {
    min_h = std::min(min_h, d.min_node_height);
    imag = std::max(imag, d.max_imag_ratio);
    filtered += d.filter_activations;
    rejected += d.rejections;
    dry = std::max(dry, d.dry_sides);
  }
  std::printf("min node height %.6g, max |Im|/radius %.3g (dry sides per step <= %d), filter activations %d, "
              "rejected steps %d\n",
              min_h, imag, dry, filtered, rejected);
  if (r.negative) {
    std::printf("negative region (M=%d, max node %.6f):", sc.M, r.negative->max_node);
    if (r.negative->region.empty()) std::printf(" none");
    for (const auto& I : r.negative->region) std::printf(" [%.6f, %.6f]", I.lo, I.hi);
    std::printf(", probability %.3g\n", r.negative->probability);
  }
  for (const auto& f : r.files) std::printf("wrote %s\n", f.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Galerkin shallow water solver"};
  sgswe::Settings cli;
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file");

  // every value flag lands in `cli` as text and is parsed with the config rules
  auto value = [&](const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        "--" + key, [&cli, key](const std::string& v) { cli.set(key, v, "command line"); }, help);
  };
  auto flag = [&](const std::string& key, const std::string& help) {
    app.add_flag_callback("--" + key, [&cli, key] { cli.set(key, "true", "command line"); }, help);
  };
  value("experiment", "ex1, ex2 or ex3");
  value("K", "number of PCE terms");
  value("M", "positivity quadrature size");
  value("dx", "cell size, e.g. 1/800");
  value("t-final", "final time");
  value("theta", "minmod parameter in [1, 2]");
  value("g", "gravitational constant");
  value("alpha", "density exponent at xi = 1");
  value("beta", "density exponent at xi = -1");
  value("collocation", "also run stochastic collocation with S nodes");
  flag("negative-region", "report where the height polynomial is negative");
  flag("filter-discharge", "apply the positivity-style filter to q as well");
  value("seed", "sampling seed for quantile bands");
  value("samples", "number of samples for quantile bands");
  value("level", "quantile band level");
  value("out", "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    sgswe::Settings settings;
    if (!config_path.empty()) sgswe::parse_config_file(config_path, settings);
    for (const auto& [k, v] : cli.values) settings.set(k, v, cli.origin.at(k));
    const sgswe::RunOptions options = sgswe::build_options(settings);
    const sgswe::ExperimentResult result = sgswe::run_experiment(options);
    report(options, result);
  } catch (const sgswe::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sgswe::ExperimentError& e) {
    std::cerr << "solver failure: " << e.what() << "\ndiagnostics: " << e.diagnostics.string() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
