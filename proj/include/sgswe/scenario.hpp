/**
 * @file scenario.hpp
 * @brief Problem setups (bottom, initial data, density, defaults) and their
 * projection onto a basis.
 */
#pragma once

#include "sgswe/fv.hpp"
#include "sgswe/pce.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sgswe {

struct Scenario {
  std::string name;
  /// B(x, xi), evaluated pointwise (also at jumps).
  std::function<double(double x, double xi)> bottom;
  /// Initial water surface w(x, 0, xi).
  std::function<double(double x, double xi)> surface;
  /// Initial discharge given the local height h(x, 0, xi).
  std::function<double(double x, double xi, double h)> discharge;

  double alpha = 0.0;
  double beta = 0.0;
  double g = 1.0;
  double theta = 1.3;
  double t_final = 1.0;
  double x_left = -1.0;
  double x_right = 1.0;
  double dx = 1.0 / 400.0;
  int K = 9;
  int M = 17;
  bool filter_discharge = false;

  /// The same problem with xi frozen at `xi0` (for collocation).
  Scenario frozen_at(double xi0) const {
    Scenario s = *this;
    auto b = bottom;
    auto w = surface;
    auto q = discharge;
    s.bottom = [b, xi0](double x, double) { return b(x, xi0); };
    s.surface = [w, xi0](double x, double) { return w(x, xi0); };
    s.discharge = [q, xi0](double x, double, double h) { return q(x, xi0, h); };
    s.name = name + "@" + std::to_string(xi0);
    return s;
  }

  int cells() const {
    const double n = (x_right - x_left) / dx;
    const int N = static_cast<int>(std::lround(n));
    if (N < 3 || std::abs(n - N) > 1e-9 * n) {
      throw std::invalid_argument("Scenario: dx must divide the domain into at least 3 cells");
    }
    return N;
  }

  Grid grid() const { return Grid(x_left, x_right, cells()); }
};

/// Projects bottom and initial data onto the basis. The bottom is sampled at
/// the interfaces, cell data at the centers.
inline StateField initial_state(const Scenario& sc, const Basis& basis, const Grid& grid) {
  const int K = basis.size();
  const int N = grid.N;
  // exact for integrands of degree 2K + 1
  const QuadratureRule rule = gauss_rule(basis, K + 1);

  Field B_iface(N + 1, K);
  for (int j = 0; j <= N; ++j) {
    const double x = grid.interface(j);
    B_iface.row(j) = project(basis, rule, [&](double xi) { return sc.bottom(x, xi); }).transpose();
  }
  const Field B_bar = bottom_cell_average(B_iface);
  Field h_bar(N, K);
  Field q_bar(N, K);
  for (int i = 0; i < N; ++i) {
    const double x = grid.center(i);
    const PceVector w = project(basis, rule, [&](double xi) { return sc.surface(x, xi); });
    const PceVector h = w - B_bar.row(i).transpose();
    h_bar.row(i) = h.transpose();
    q_bar.row(i) =
        project(basis, rule, [&](double xi) { return sc.discharge(x, xi, basis.value(h, xi)); }).transpose();
  }
  return make_state(std::move(h_bar), std::move(q_bar), std::move(B_iface), 0.0);
}

namespace scenarios {

/// Dam break over a stochastic cosine bump, uniform density.
inline Scenario stochastic_bottom() {
  Scenario s;
  s.name = "ex1";
  s.bottom = [](double x, double xi) {
    if (std::abs(x) < 0.2) return 0.125 * (std::cos(5.0 * std::numbers::pi * x) + 2.0) + 0.125 * xi;
    return 0.125 + 0.125 * xi;
  };
  s.surface = [](double x, double) { return x < 0.0 ? 1.0 : 0.5; };
  s.discharge = [](double, double, double) { return 0.0; };
  s.g = 1.0;
  s.theta = 1.3;
  s.t_final = 0.8;
  s.x_left = -1.0;
  s.x_right = 1.0;
  s.dx = 1.0 / 800.0;
  s.K = 9;
  s.M = 17;
  return s;
}

/// Small stochastic surface pulse over a deterministic bottom with a plateau.
inline Scenario stochastic_surface() {
  Scenario s;
  s.name = "ex2";
  s.bottom = [](double x, double) {
    if (x >= 0.3 && x <= 0.4) return 10.0 * (x - 0.3);
    if (x > 0.4 && x < 0.6) {
      const double v = std::sin(25.0 * (std::numbers::pi * (x - 0.4)));
      return 1.0 - 0.0025 * v * v;
    }
    if (x >= 0.6 && x <= 0.7) return -10.0 * (x - 0.7);
    return 0.0;
  };
  s.surface = [](double x, double xi) { return (x > 0.1 && x < 0.2) ? 1.001 + 0.001 * xi : 1.0; };
  s.discharge = [](double, double, double) { return 0.0; };
  s.g = 1.0;
  s.theta = 1.3;
  s.t_final = 1.0;
  s.x_left = -1.0;
  s.x_right = 1.0;
  s.dx = 1.0 / 400.0;
  s.K = 9;
  s.M = 17;
  return s;
}

/// Riemann problem over a stochastic step bottom, Beta(3,1) density.
inline Scenario stochastic_step() {
  Scenario s;
  s.name = "ex3";
  s.bottom = [](double x, double xi) { return (x <= 0.5 ? 1.5 : 1.1) + 0.1 * xi; };
  s.surface = [](double x, double) { return x <= 0.5 ? 5.0 : 1.6; };
  s.discharge = [](double x, double, double h) { return (x <= 0.5 ? 1.0 : -2.0) * h; };
  s.alpha = 3.0;
  s.beta = 1.0;
  s.g = 2.0;
  s.theta = 1.0;
  s.t_final = 0.15;
  s.x_left = 0.0;
  s.x_right = 1.0;
  s.dx = 1.0 / 400.0;
  s.K = 9;
  s.M = 17;
  return s;
}

inline Scenario by_name(const std::string& name) {
  if (name == "ex1") return stochastic_bottom();
  if (name == "ex2") return stochastic_surface();
  if (name == "ex3") return stochastic_step();
  throw std::invalid_argument("unknown experiment '" + name + "' (expected ex1, ex2 or ex3)");
}

}  // namespace scenarios

/// Solver settings implied by a scenario.
inline SolverConfig solver_config_for(const Scenario& sc) {
  SolverConfig cfg;
  cfg.g = sc.g;
  cfg.theta = sc.theta;
  cfg.filter_discharge = sc.filter_discharge;
  return cfg;
}

}  // namespace sgswe
