/**
 * @file uq.hpp
 * @brief Stochastic collocation reference solver and post-processing of PCE
 * fields: moments, sampled quantile bands, and the xi-region where the
 * height polynomial goes negative.
 */
#pragma once

#include "sgswe/fv.hpp"
#include "sgswe/pce.hpp"
#include "sgswe/scenario.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgswe {

struct CollocationResult {
  Field h;  ///< N x K projected height coefficients
  Field q;  ///< N x K projected discharge coefficients
  QuadratureRule rule;
};

/// Solves the deterministic problem at each of the S Gauss nodes of the
/// density and projects the samples onto the first K basis functions.
inline CollocationResult collocation_solve(const Scenario& sc, int S, int K, const SolverConfig& cfg) {
  if (S < K) throw std::invalid_argument("collocation_solve: need S >= K");
  const Basis basis(sc.alpha, sc.beta, K);
  CollocationResult out;
  out.rule = gauss_rule(basis, S);
  const Grid grid = sc.grid();
  out.h = Field::Zero(grid.N, K);
  out.q = Field::Zero(grid.N, K);

  const Basis scalar(sc.alpha, sc.beta, 1);
  const QuadratureRule one_point = gauss_rule(scalar, 1);
  for (int s = 0; s < S; ++s) {
    const double zeta = out.rule.nodes(s);
    const Scenario fixed = sc.frozen_at(zeta);
    StateField final_state;
    try {
      const Solver solver(scalar, one_point, grid, cfg);
      final_state = solver.run(initial_state(fixed, scalar, grid), sc.t_final).final_state;
    } catch (const std::exception& e) {
      throw std::runtime_error("collocation_solve: node " + std::to_string(s) + " (xi = " + std::to_string(zeta) +
                               ") failed: " + e.what());
    }
    const Vector phi = basis.evaluate(zeta);
    const double w = out.rule.weights(s);
    out.h.noalias() += final_state.h_bar.col(0) * (w * phi.transpose());
    out.q.noalias() += final_state.q_bar.col(0) * (w * phi.transpose());
  }
  return out;
}

struct Moments {
  Vector mean;
  Vector variance;
};

inline Moments moments(const Field& field) {
  Moments m;
  m.mean = field.col(0);
  m.variance = field.rightCols(field.cols() - 1).rowwise().squaredNorm();
  return m;
}

/// Inverse-CDF sampler of the Beta density on [-1, 1].
class BetaSampler {
 public:
  BetaSampler(double alpha, double beta, std::uint64_t seed) : alpha_(alpha), beta_(beta), rng_(seed) {}

  double operator()() {
    // xi = 2t - 1 with t ~ Beta(beta + 1, alpha + 1)
    double u = 0.0;
    do {
      u = std::generate_canonical<double, 53>(rng_);
    } while (u <= 0.0 || u >= 1.0);
    return 2.0 * boost::math::ibeta_inv(beta_ + 1.0, alpha_ + 1.0, u) - 1.0;
  }

 private:
  double alpha_;
  double beta_;
  std::mt19937_64 rng_;
};

/// P[xi <= x] for the Beta density on [-1, 1].
inline double beta_cdf(double alpha, double beta, double x) {
  if (x <= -1.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(beta + 1.0, alpha + 1.0, 0.5 * (x + 1.0));
}

struct QuantileBand {
  Vector x;
  Vector lo;
  Vector hi;
  double level = 0.99;
};

/// Basis values at n_samples draws from the density, one column per draw.
inline Matrix sample_basis(const Basis& basis, int n_samples, std::uint64_t seed) {
  BetaSampler draw(basis.alpha(), basis.beta(), seed);
  Matrix phi(basis.size(), n_samples);
  for (int s = 0; s < n_samples; ++s) phi.col(s) = basis.evaluate(draw());
  return phi;
}

/// Linear-interpolated empirical quantile; reorders `v`.
inline double empirical_quantile(std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

inline QuantileBand quantile_band(const Field& field, const Vector& x, const Matrix& sampled_phi, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("quantile_band: level must lie in (0, 1)");
  QuantileBand band;
  band.x = x;
  band.level = level;
  band.lo.resize(field.rows());
  band.hi.resize(field.rows());
  const double tail = 0.5 * (1.0 - level);
  std::vector<double> values(static_cast<std::size_t>(sampled_phi.cols()));
  for (Eigen::Index i = 0; i < field.rows(); ++i) {
    const Eigen::RowVectorXd row = field.row(i) * sampled_phi;
    std::copy(row.data(), row.data() + row.size(), values.begin());
    band.lo(i) = empirical_quantile(values, tail);
    band.hi(i) = empirical_quantile(values, 1.0 - tail);
  }
  return band;
}

inline QuantileBand quantile_band(const Field& field, const Vector& x, const Basis& basis, double level,
                                  int n_samples, std::uint64_t seed) {
  return quantile_band(field, x, sample_basis(basis, n_samples, seed), level);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct NegativeRegionReport {
  double max_node = 0.0;
  std::vector<Interval> region;
  double probability = 0.0;
};

/// min over cells of the height polynomial at xi.
inline double min_height_at(const Field& h_field, const Basis& basis, double xi) {
  return (h_field * basis.evaluate(xi)).minCoeff();
}

/// Scans xi on `resolution` points, refines sign changes by bisection to
/// 1e-7, and integrates the density over the sub-intervals where the
/// smallest cell height is negative.
inline NegativeRegionReport negative_region(const Field& h_field, const Basis& basis, const QuadratureRule& rule,
                                            int resolution = 10000) {
  if (resolution < 2) throw std::invalid_argument("negative_region: resolution must be >= 2");
  NegativeRegionReport rep;
  rep.max_node = rule.nodes.maxCoeff();
  auto f = [&](double xi) { return min_height_at(h_field, basis, xi); };
  auto refine = [&](double a, double b) {
    // f(a) and f(b) differ in sign
    const bool a_neg = f(a) < 0.0;
    while (b - a > 1e-7) {
      const double m = 0.5 * (a + b);
      if ((f(m) < 0.0) == a_neg) {
        a = m;
      } else {
        b = m;
      }
    }
    return 0.5 * (a + b);
  };

  double prev_x = -1.0;
  bool prev_neg = f(prev_x) < 0.0;
  double start = -1.0;
  for (int k = 1; k < resolution; ++k) {
    const double x = -1.0 + 2.0 * k / (resolution - 1);
    const bool neg = f(std::min(x, 1.0)) < 0.0;
    if (neg != prev_neg) {
      const double edge = refine(prev_x, x);
      if (neg) {
        start = edge;
      } else {
        rep.region.push_back({start, edge});
      }
    }
    prev_x = x;
    prev_neg = neg;
  }
  if (prev_neg) rep.region.push_back({start, 1.0});
  for (const Interval& I : rep.region) {
    rep.probability += beta_cdf(basis.alpha(), basis.beta(), I.hi) - beta_cdf(basis.alpha(), basis.beta(), I.lo);
  }
  return rep;
}

}  // namespace sgswe
