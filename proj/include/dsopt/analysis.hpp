#pragma once

#include "dsopt/core.hpp"
#include "dsopt/netgraph.hpp"
#include "dsopt/objective.hpp"
#include "dsopt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace dsopt {

struct BoundInputs {
  double alpha = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  int n = 1;
  double m_f = 0.0;
  double L = 0.0;
  double G = 0.0;
  double delta_x = 0.0;
  double gamma = 0.0;
  double radius_x = 1.0;
};

inline double rho_value(double alpha, double m_f, double L) { return 1.0 + alpha * alpha * L * L - alpha * m_f; }

inline void check_bound_inputs(const BoundInputs& in) {
  require(in.m_f > 0.0 && in.L > 0.0, "bound: m_f and L must be positive");
  require(in.alpha > 0.0 && in.alpha < in.m_f / (in.L * in.L), "bound: alpha must lie in (0, m_f/L^2)");
  require(in.beta > 0.0 && in.beta < 1.0 / in.n, "bound: beta must lie in (0, 1/n)");
  require(in.gamma > 0.0 && in.gamma < 1.0, "bound: gamma must lie in (0,1)");
  require(in.epsilon >= 0.0 && in.G >= 0.0 && in.delta_x >= 0.0 && in.radius_x > 0.0,
          "bound: epsilon, G, delta_x must be nonnegative and the radius positive");
}

inline bool bound_applicable(const BoundInputs& in) {
  try {
    check_bound_inputs(in);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

inline double contraction_factor(const BoundInputs& in) {
  require(in.m_f > 0.0 && in.L > 0.0, "contraction factor: m_f and L must be positive");
  require(in.alpha > 0.0 && in.alpha < in.m_f / (in.L * in.L), "contraction factor: alpha must lie in (0, m_f/L^2)");
  return rho_value(in.alpha, in.m_f, in.L);
}

// Asymptotic error floor of the stacked squared tracking error.
inline double theorem1_bound(const BoundInputs& in) {
  check_bound_inputs(in);
  const double rho = contraction_factor(in);
  const double sg = std::sqrt(in.gamma);
  const double n = in.n;
  const double r2 = in.radius_x * in.radius_x;
  const double psi = n * (in.epsilon / sg) * (in.alpha * in.epsilon / (4.0 * r2) + 2.0 * in.alpha * in.L + 2.0) +
                     in.alpha * n * in.G * in.G / (1.0 - sg);
  return (in.alpha * psi / sg + n * in.delta_x * in.delta_x / (1.0 - sg)) / (1.0 - rho);
}

inline double network_gamma(double beta, const LaplacianMatrix& expected) { return 1.0 - beta * lambda2(expected); }

// Per-tick contraction of the noiseless error: rho * (1 - beta lambda_2) / gamma.
inline double contraction_rate(const BoundInputs& in, double lambda2_expected) {
  return rho_value(in.alpha, in.m_f, in.L) * (1.0 - in.beta * lambda2_expected) / in.gamma;
}

// max_i || sum_{j != i} E[grad f_j](x*) || at the scenario's current tick.
inline double estimate_G(const Scenario& sc, const Vec& x_star) {
  const int n = sc.nodes();
  if (n <= 1) return 0.0;
  std::vector<Vec> g;
  Vec total = Vec::Zero(x_star.size());
  for (int i = 0; i < n; ++i) {
    g.push_back(sc.expected_gradient(i, x_star));
    total += g.back();
  }
  double out = 0.0;
  for (int i = 0; i < n; ++i) out = std::max(out, (total - g[static_cast<std::size_t>(i)]).norm());
  return out;
}

inline double estimate_delta_x(const std::vector<Vec>& trajectory) {
  double out = 0.0;
  for (std::size_t k = 1; k < trajectory.size(); ++k) out = std::max(out, (trajectory[k] - trajectory[k - 1]).norm());
  return out;
}

// Squared distance of node i's held blocks from the optimizer.
inline double node_tracking_error(const Vec& y, const Vec& x_star, const std::vector<int>& blocks, int block_dim) {
  double e = 0.0;
  for (int b : blocks) e += (y.segment(b * block_dim, block_dim) - x_star.segment(b * block_dim, block_dim)).squaredNorm();
  return e;
}

// ||y - 1 (x) x*||^2 over all nodes' held blocks.
inline double tracking_error(const std::vector<Vec>& ys, const Vec& x_star, const Scenario& sc,
                             std::vector<double>* per_node = nullptr) {
  double total = 0.0;
  if (per_node) per_node->clear();
  for (int i = 0; i < static_cast<int>(ys.size()); ++i) {
    const double e = node_tracking_error(ys[static_cast<std::size_t>(i)], x_star, sc.held_blocks(i), sc.block_dim());
    if (per_node) per_node->push_back(e);
    total += e;
  }
  return total;
}

// Minimum of the curve over its last `fraction` of entries.
inline double trailing_error(const std::vector<double>& curve, double fraction = 0.1) {
  require(!curve.empty(), "trailing error: empty curve");
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * curve.size())));
  return *std::min_element(curve.end() - static_cast<std::ptrdiff_t>(window), curve.end());
}

// exp of the least-squares slope of log(curve) over [first, last).
inline double fitted_rate(const std::vector<double>& curve, std::size_t first, std::size_t last) {
  require(first + 2 <= last && last <= curve.size(), "fitted rate: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(last - first);
  for (std::size_t k = first; k < last; ++k) {
    require(curve[k] > 0.0, "fitted rate: nonpositive error");
    const double x = static_cast<double>(k), y = std::log(curve[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return std::exp((m * sxy - sx * sy) / (m * sxx - sx * sx));
}

// Hessian bounds of the expected costs: per node, or on the summed cost when the scenario
// couples blocks across nodes.
inline Constants measure_constants(const Scenario& sc, int probes, Rng& rng) {
  const BoxSet& box = sc.box();
  if (sc.aggregate_constants()) {
    auto total = [&](const Vec& x) {
      Vec g = Vec::Zero(x.size());
      for (int i = 0; i < sc.nodes(); ++i) g += sc.expected_gradient(i, x);
      return g;
    };
    return estimate_constants(total, box, probes, rng);
  }
  Constants c{std::numeric_limits<double>::infinity(), 0.0};
  for (int i = 0; i < sc.nodes(); ++i) {
    const Constants ci = estimate_constants([&](const Vec& x) { return sc.expected_gradient(i, x); }, box, probes, rng);
    c.m_f = std::min(c.m_f, ci.m_f);
    c.L = std::max(c.L, ci.L);
  }
  return c;
}

inline Vec true_optimizer(const Scenario& sc) { return sc.true_optimizer(); }

}  // namespace dsopt
