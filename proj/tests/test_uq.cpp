#include "oracles.hpp"
#include "properties.hpp"
#include "sgswe/uq.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace sgswe;

namespace {

/// Shallow-water dam break with no dependence on xi.
Scenario deterministic_dam_break() {
  Scenario s;
  s.name = "det";
  s.bottom = [](double x, double) { return 0.1 * std::exp(-50.0 * x * x); };
  s.surface = [](double x, double) { return x < 0.0 ? 1.0 : 0.6; };
  s.discharge = [](double, double, double) { return 0.0; };
  s.x_left = -1.0;
  s.x_right = 1.0;
  s.dx = 1.0 / 40.0;
  s.t_final = 0.2;
  s.K = 4;
  s.M = 5;
  return s;
}

/// rho-mass of [-1, c] for the (3, 1) density by composite Simpson.
double beta31_cdf(double c) {
  const int n = 20000;
  const double h = (c + 1.0) / n;
  auto f = [](double x) { return std::pow(1.0 - x, 3) * (1.0 + x) / 1.6; };
  double s = f(-1.0) + f(c);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(-1.0 + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST(Moments, Examples) {
  Field y(2, 3);
  y << 2.0, 3.0, 4.0, -1.0, 0.0, 0.5;
  const Moments m = moments(y);
  EXPECT_DOUBLE_EQ(m.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(m.variance(0), 25.0);
  EXPECT_DOUBLE_EQ(m.variance(1), 0.25);
  EXPECT_EQ(moments(Field::Constant(4, 1, 3.0)).variance.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Moments, AgreeWithMonteCarlo) {
  const Basis b(3.0, 1.0, 5);
  std::mt19937_64 rng(21);
  const PceVector y = props::random_vector(5, rng, 0.5);
  BetaSampler draw(3.0, 1.0, 99);
  const int n = 1000000;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = b.value(y, draw());
    s1 += v;
    s2 += v * v;
    s3 += v * v * v;
    s4 += v * v * v * v;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  const double m4 = s4 / n - 4 * mean * s3 / n + 6 * mean * mean * s2 / n - 3 * std::pow(mean, 4);
  const Field f = y.transpose();
  const Moments m = moments(f);
  EXPECT_LE(std::abs(m.mean(0) - mean), 3.0 * std::sqrt(var / n));
  EXPECT_LE(std::abs(m.variance(0) - var), 3.0 * std::sqrt((m4 - var * var) / n));
}

TEST(BetaSampler, MatchesAnalyticMoments) {
  for (auto [a, bb] : {std::pair{0.0, 0.0}, std::pair{3.0, 1.0}, std::pair{1.0, 3.0}}) {
    BetaSampler draw(a, bb, 2024);
    const int n = 1000000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = draw();
      ASSERT_GE(x, -1.0);
      ASSERT_LE(x, 1.0);
      s1 += x;
      s2 += x * x;
    }
    // xi = 2t - 1, t ~ Beta(beta + 1, alpha + 1)
    const double p = bb + 1.0, q = a + 1.0;
    const double mean = 2.0 * p / (p + q) - 1.0;
    const double var = 4.0 * p * q / ((p + q) * (p + q) * (p + q + 1.0));
    const double m = s1 / n;
    const double v = s2 / n - m * m;
    EXPECT_LE(std::abs(m - mean), 4.0 * std::sqrt(var / n)) << a << "," << bb;
    // the variance of x^2 bounds the spread of the sample variance
    EXPECT_LE(std::abs(v - var), 4.0 * std::sqrt(2.0 * var * var / n + 4.0 * var / n)) << a << "," << bb;
  }
}

TEST(BetaSampler, DeterministicForSeed) {
  BetaSampler a(3.0, 1.0, 5), b(3.0, 1.0, 5), c(3.0, 1.0, 6);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a();
    EXPECT_EQ(x, b());
    differs |= x != c();
  }
  EXPECT_TRUE(differs);
}

TEST(BetaCdf, MatchesSimpson) {
  for (double c : {-0.9, -0.2, 0.4, 0.95}) EXPECT_NEAR(beta_cdf(3.0, 1.0, c), beta31_cdf(c), 1e-12);
  EXPECT_EQ(beta_cdf(3.0, 1.0, -1.0), 0.0);
  EXPECT_EQ(beta_cdf(3.0, 1.0, 1.0), 1.0);
  EXPECT_NEAR(beta_cdf(0.0, 0.0, 0.3), 0.65, 1e-15);
}

TEST(Quantiles, EmpiricalQuantileIsLinearInterpolation) {
  std::vector<double> v{5.0, 1.0, 4.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.1), 1.4);
  EXPECT_DOUBLE_EQ(empirical_quantile(v, 0.875), 4.5);
}

TEST(Quantiles, Bands) {
  const Basis b(0.0, 0.0, 2);
  Field f(2, 2);
  f << 3.0, 0.0, 0.0, 1.0;
  const Vector x = Vector::LinSpaced(2, 0.0, 1.0);
  const QuantileBand band = quantile_band(f, x, b, 0.99, 100000, 17);
  EXPECT_DOUBLE_EQ(band.lo(0), 3.0);
  EXPECT_DOUBLE_EQ(band.hi(0), 3.0);
  // sqrt3 * xi with xi uniform
  EXPECT_NEAR(band.lo(1), -std::sqrt(3.0) * 0.99, 5e-3);
  EXPECT_NEAR(band.hi(1), std::sqrt(3.0) * 0.99, 5e-3);

  const Matrix phi = sample_basis(b, 20000, 3);
  double prev = 0.0;
  for (double level : {0.5, 0.8, 0.9, 0.99}) {
    const QuantileBand q = quantile_band(f, x, phi, level);
    EXPECT_LE(q.lo(1), q.hi(1));
    EXPECT_GE(q.hi(1) - q.lo(1), prev);
    prev = q.hi(1) - q.lo(1);
  }
  const QuantileBand again = quantile_band(f, x, b, 0.99, 100000, 17);
  EXPECT_EQ(again.lo, band.lo);
  EXPECT_THROW(quantile_band(f, x, phi, 1.0), std::invalid_argument);
}

TEST(NegativeRegion, AllPositive) {
  const Basis b(3.0, 1.0, 3);
  Field h(2, 3);
  h << 2.0, 0.1, 0.0, 1.0, 0.0, 0.05;
  const NegativeRegionReport r = negative_region(h, b, gauss_rule(b, 5));
  EXPECT_TRUE(r.region.empty());
  EXPECT_EQ(r.probability, 0.0);
  EXPECT_DOUBLE_EQ(r.max_node, gauss_rule(b, 5).nodes.maxCoeff());
}

TEST(NegativeRegion, LinearHeight) {
  const Basis u(0.0, 0.0, 2);
  Field h(1, 2);
  h << -0.5, 1.0 / std::sqrt(3.0);  // xi - 0.5
  const NegativeRegionReport r = negative_region(h, u, gauss_rule(u, 2));
  ASSERT_EQ(r.region.size(), 1u);
  EXPECT_EQ(r.region[0].lo, -1.0);
  EXPECT_NEAR(r.region[0].hi, 0.5, 1e-7);
  EXPECT_NEAR(r.probability, 0.75, 1e-7);

  const Basis b(3.0, 1.0, 2);
  // the first cell is c - xi, negative above xi = c
  const double c = 0.7;
  Field g(2, 2);
  g.row(0) = project(b, gauss_rule(b, 2), [&](double x) { return c - x; }).transpose();
  g.row(1) << 5.0, 0.0;
  const NegativeRegionReport rb = negative_region(g, b, gauss_rule(b, 3));
  ASSERT_EQ(rb.region.size(), 1u);
  EXPECT_NEAR(rb.region[0].lo, c, 1e-7);
  EXPECT_EQ(rb.region[0].hi, 1.0);
  EXPECT_NEAR(rb.probability, 1.0 - beta31_cdf(c), 1e-7);
}

TEST(NegativeRegion, ExcludesNodesWhenNodePositive) {
  std::mt19937_64 rng(8);
  const Basis b(3.0, 1.0, 9);
  const QuadratureRule rule = gauss_rule(b, 13);
  const NodeSet nodes(b, rule);
  int with_region = 0;
  for (int t = 0; t < 30; ++t) {
    Field h(3, 9);
    for (int i = 0; i < 3; ++i) h.row(i) = props::random_node_positive(b, nodes, rng, 1e-3).transpose();
    const NegativeRegionReport r = negative_region(h, b, rule, 4000);
    with_region += r.region.empty() ? 0 : 1;
    EXPECT_GE(r.probability, 0.0);
    EXPECT_LE(r.probability, 1.0);
    for (const Interval& I : r.region) {
      for (int m = 0; m < rule.size(); ++m) {
        EXPECT_FALSE(rule.nodes(m) > I.lo && rule.nodes(m) < I.hi) << "node " << rule.nodes(m);
      }
    }
  }
  EXPECT_GT(with_region, 0);
}

TEST(Collocation, DeterministicScenarioHasNoTail) {
  const Scenario sc = deterministic_dam_break();
  const SolverConfig cfg = solver_config_for(sc);
  const CollocationResult r = collocation_solve(sc, 6, 4, cfg);
  EXPECT_LE(r.h.rightCols(3).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE(r.q.rightCols(3).cwiseAbs().maxCoeff(), 1e-13);

  const Basis one(0.0, 0.0, 1);
  const Grid grid = sc.grid();
  const Solver solver(one, gauss_rule(one, 1), grid, cfg);
  const StateField det = solver.run(initial_state(sc, one, grid), sc.t_final).final_state;
  EXPECT_LE((r.h.col(0) - det.h_bar.col(0)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((r.q.col(0) - det.q_bar.col(0)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(collocation_solve(sc, 3, 4, cfg), std::invalid_argument);
}

TEST(Collocation, SingleNodeIsMeanField) {
  Scenario sc = scenarios::stochastic_bottom();
  sc.dx = 1.0 / 40.0;
  sc.t_final = 0.1;
  const SolverConfig cfg = solver_config_for(sc);
  const CollocationResult r = collocation_solve(sc, 1, 1, cfg);
  EXPECT_EQ(r.rule.nodes(0), 0.0);
  const Scenario mean_field = sc.frozen_at(0.0);
  const Basis one(0.0, 0.0, 1);
  const Solver solver(one, gauss_rule(one, 1), sc.grid(), cfg);
  const StateField det = solver.run(initial_state(mean_field, one, sc.grid()), sc.t_final).final_state;
  EXPECT_LE((r.h.col(0) - det.h_bar.col(0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Collocation, AgreesWithGalerkinOnStochasticBottom) {
  Scenario sc = scenarios::stochastic_bottom();
  sc.dx = 1.0 / 100.0;
  const SolverConfig cfg = solver_config_for(sc);
  const Basis basis(sc.alpha, sc.beta, sc.K);
  const Grid grid = sc.grid();
  const Solver solver(basis, gauss_rule(basis, sc.M), grid, cfg);
  const StateField sg = solver.run(initial_state(sc, basis, grid), sc.t_final).final_state;
  const CollocationResult scr = collocation_solve(sc, 100, sc.K, cfg);

  const Vector w_sg = sg.h_bar.col(0) + sg.B_bar.col(0);
  const Vector w_sc = scr.h.col(0) + sg.B_bar.col(0);
  const double l1 = (w_sg - w_sc).cwiseAbs().sum() / w_sc.cwiseAbs().sum();
  EXPECT_LE(l1, 0.03);
}
