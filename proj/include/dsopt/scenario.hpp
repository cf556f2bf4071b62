#pragma once

#include "dsopt/core.hpp"
#include "dsopt/distributions.hpp"
#include "dsopt/netgraph.hpp"
#include "dsopt/objective.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace dsopt {

// A time-varying stochastic problem solved by the network. Decision vectors are
// stacked blocks of size block_dim(); node i holds the blocks in held_blocks(i).
class Scenario {
 public:
  virtual ~Scenario() = default;

  virtual std::string name() const = 0;
  virtual int nodes() const = 0;
  virtual int block_dim() const = 0;
  virtual int blocks() const = 0;
  int dimension() const { return block_dim() * blocks(); }

  virtual const NetworkModel& network() const = 0;
  virtual const BoxSet& box() const = 0;
  virtual const BoxSet& previous_box() const { return box(); }
  virtual const std::vector<int>& held_blocks(int node) const = 0;
  virtual long tick() const = 0;
  // Blocks on which node i's gradient can be nonzero.
  virtual std::vector<int> gradient_blocks(int node) const { return held_blocks(node); }

  // Current true pdf of source j's noise.
  virtual const PdfHandle& pdf(int source) const = 0;
  // Sources node i's cost depends on: N_i and i itself, ascending.
  virtual const std::vector<int>& sources(int node) const = 0;

  virtual GradientPolynomial gradient_polynomial(int node, const Vec& v) const = 0;
  // Closed-form gradient for realized noise aligned with sources(node).
  virtual Vec gradient(int node, const Vec& v, std::span<const double> omega) const = 0;
  virtual double value(int node, const Vec& x, std::span<const double> omega) const = 0;

  // Sample average of the closed-form gradient over per-source sample banks.
  virtual Vec mc_gradient(int node, const Vec& v, const std::vector<const std::vector<double>*>& banks) const {
    return mc_expected_gradient([&](std::span<const double> w) { return gradient(node, v, w); }, banks);
  }

  virtual Vec true_optimizer() const = 0;
  virtual void advance(Rng& rng) = 0;

  virtual bool affine_in_noise() const = 0;
  // Norm of the direction along which a source's noise enters a neighbor's cost.
  virtual double noise_coefficient_norm() const { return 1.0; }
  // Whether strong convexity is measured on the sum of all node costs rather than per node.
  virtual bool aggregate_constants() const = 0;
  virtual bool hessian_depends_on_pdfs() const { return true; }

  std::vector<SourceMoments> current_moments(int node) const {
    std::vector<SourceMoments> m;
    for (int s : sources(node)) m.push_back({pdf(s)->mean, pdf(s)->second_moment});
    return m;
  }

  // Exact expected gradient under the current pdfs.
  Vec expected_gradient(int node, const Vec& v) const {
    return moment_expected_gradient(gradient_polynomial(node, v), current_moments(node));
  }

  Vec initial_point(int node, Rng& rng) const {
    Vec y = Vec::Zero(dimension());
    const BoxSet& b = previous_box();
    for (int blk : held_blocks(node))
      for (int c = 0; c < block_dim(); ++c) {
        const int k = blk * block_dim() + c;
        y(k) = b.lower(k) + uniform01(rng) * (b.upper(k) - b.lower(k));
      }
    return y;
  }
};

// Relative error of the closed-form gradient against central differences of the cost,
// over the coordinates where the node's gradient lives.
inline double gradient_fd_error(const Scenario& sc, int node, const Vec& x, std::span<const double> w) {
  const Vec full = sc.gradient(node, x, w);
  std::vector<Eigen::Index> coords;
  for (int b : sc.gradient_blocks(node))
    for (int c = 0; c < sc.block_dim(); ++c) coords.push_back(b * sc.block_dim() + c);
  Vec g(static_cast<Eigen::Index>(coords.size())), fd(g.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const Eigen::Index c = coords[static_cast<std::size_t>(k)];
    g(k) = full(c);
    const double h = 1e-6 * std::max(1.0, std::abs(x(c)));
    Vec xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    fd(k) = (sc.value(node, xp, w) - sc.value(node, xm, w)) / (2.0 * h);
  }
  return (g - fd).norm() / std::max(1.0, g.norm());
}

// Finite-difference check of every node's gradient at random points and noise draws.
inline void verify_gradients(const Scenario& sc, int probes_per_node, Rng& rng, double tol = 1e-5) {
  const BoxSet& box = sc.box();
  for (int i = 0; i < sc.nodes(); ++i)
    for (int p = 0; p < probes_per_node; ++p) {
      Vec x(box.lower.size());
      for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = box.lower(k) + uniform01(rng) * (box.upper(k) - box.lower(k));
      std::vector<double> w;
      for (int s : sc.sources(i)) w.push_back(sample_one(sc.pdf(s)->pdf, rng));
      const double err = gradient_fd_error(sc, i, x, w);
      ensure(err < tol, "gradient check failed at node " + std::to_string(i) + ": relative error " + std::to_string(err));
    }
}

// argmin 0.5 x'Ax - b'x over a box. Interior solutions come from a direct solve;
// otherwise projected gradient iterates until the step falls below tol.
inline Vec minimize_box_quadratic(const Mat& a, const Vec& b, const BoxSet& box, double tol = 1e-13,
                                  int max_iter = 2000000) {
  const Vec x0 = a.ldlt().solve(b);
  if (contains(box, x0)) return x0;
  const Vec ev = symmetric_eigenvalues(0.5 * (a + a.transpose()), 200);
  require(ev(0) > 0.0, "box quadratic: Hessian is not positive definite");
  const double step = 1.0 / ev(ev.size() - 1);
  Vec x = project(x0, box);
  for (int it = 0; it < max_iter; ++it) {
    const Vec next = project(x - step * (a * x - b), box);
    const double moved = (next - x).norm();
    x = next;
    if (moved <= tol) break;
  }
  return x;
}

}  // namespace dsopt
