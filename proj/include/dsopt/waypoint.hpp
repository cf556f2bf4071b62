#pragma once

#include "dsopt/scenario.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace dsopt {

struct WaypointParams {
  int rows = 4;
  int cols = 4;
  double theta = 0.5;
  double edge_prob = 0.7;
  double box_half = 50.0;
  double spacing = 10.0;
  double angular_rate = 0.0;
  bool noise = true;
  long gust_begin = 2500;
  long gust_end = 3250;
  double gust_factor = 2.0;
};

inline void validate(const WaypointParams& p) {
  require(p.rows >= 1 && p.cols >= 1 && p.rows * p.cols >= 2, "waypoint: need at least two nodes");
  require(p.theta > 0.0, "waypoint: theta must be positive");
  require(p.edge_prob > 0.0 && p.edge_prob <= 1.0, "waypoint: edge probability outside (0,1]");
  require(p.box_half > 0.0 && p.spacing > 0.0, "waypoint: box and spacing must be positive");
  require(p.gust_factor > 0.0, "waypoint: gust factor must be positive");
}

// alpha = 1.7 theta / (2 (theta + lambda_max(W)/s))^2, beta = 0.13 / n.
inline StepSizes wp_stepsizes(const LaplacianMatrix& expected, double theta, double s) {
  require(theta > 0.0 && s > 0.0, "wp_stepsizes: theta and s must be positive");
  const double lmax = lambda_max(expected);
  const double denom = 2.0 * (theta + lmax / s);
  return {1.7 * theta / (denom * denom), 0.13 / static_cast<double>(expected.matrix.rows())};
}

// Formation tracking on a grid: node i steers its 2-D waypoint x_i toward a reference
// rotating about the origin, shifted by Weibull noise along (1,1), while keeping the
// formation offsets to its lattice neighbors.
class WaypointScenario final : public Scenario {
 public:
  WaypointScenario(WaypointParams params, Rng& rng) : p_(std::move(params)) {
    validate(p_);
    net_ = grid_lattice(p_.rows, p_.cols, p_.edge_prob);
    const int n = net_.n;
    box_ = make_box(2 * n, -p_.box_half, p_.box_half);
    laplacian_ = laplacian_of(expected_laplacian(net_).matrix / p_.edge_prob).matrix;
    for (int i = 0; i < n; ++i) {
      neighbors_.push_back(net_.neighbors(i));
      auto s = neighbors_.back();
      s.push_back(i);
      std::sort(s.begin(), s.end());
      sources_.push_back(s);
      held_.push_back(s);
      const int r = i / p_.cols, c = i % p_.cols;
      anchors_.emplace_back((c - 0.5 * (p_.cols - 1)) * p_.spacing, (r - 0.5 * (p_.rows - 1)) * p_.spacing);
    }
    for (int i = 0; i < n; ++i) {
      const double omega_max = 2.0 * (i + 1) / n;
      WeibullEvolution law;
      law.base_shape = 4.0 + 4.0 * uniform01(rng);
      law.base_scale = 4.0 / n * omega_max * (2.0 + uniform01(rng));
      law.phase_scale = 2.0 * std::numbers::pi * uniform01(rng);
      law.phase_shape = 2.0 * std::numbers::pi * uniform01(rng);
      law.rate = p_.angular_rate;
      law.offset = omega_max;
      law.gust_begin = p_.gust_begin;
      law.gust_end = p_.gust_end;
      law.gust_factor = p_.gust_factor;
      laws_.push_back(law);
    }
    pdfs_.resize(static_cast<std::size_t>(n));
    refresh_pdfs();
  }

  std::string name() const override { return "waypoint"; }
  int nodes() const override { return net_.n; }
  int block_dim() const override { return 2; }
  int blocks() const override { return net_.n; }
  const NetworkModel& network() const override { return net_; }
  const BoxSet& box() const override { return box_; }
  const std::vector<int>& held_blocks(int node) const override { return held_.at(static_cast<std::size_t>(node)); }
  std::vector<int> gradient_blocks(int node) const override { return {node}; }
  long tick() const override { return k_; }
  const PdfHandle& pdf(int source) const override { return pdfs_.at(static_cast<std::size_t>(source)); }
  const std::vector<int>& sources(int node) const override { return sources_.at(static_cast<std::size_t>(node)); }
  bool affine_in_noise() const override { return true; }
  double noise_coefficient_norm() const override { return std::numbers::sqrt2; }
  bool aggregate_constants() const override { return true; }
  bool hessian_depends_on_pdfs() const override { return false; }

  const WaypointParams& params() const { return p_; }
  const WeibullEvolution& law(int node) const { return laws_.at(static_cast<std::size_t>(node)); }

  // Noise-free reference of node i at the current tick.
  Eigen::Vector2d reference(int node) const {
    const double t = p_.angular_rate * static_cast<double>(k_);
    const auto [ax, ay] = anchors_.at(static_cast<std::size_t>(node));
    return {std::cos(t) * ax - std::sin(t) * ay, std::sin(t) * ax + std::cos(t) * ay};
  }

  GradientPolynomial gradient_polynomial(int node, const Vec& v) const override {
    GradientPolynomial poly;
    poly.sources = sources(node);
    const int d = dimension();
    poly.constant = Vec::Zero(d);
    poly.constant.segment<2>(2 * node) = own_gradient(node, v, Eigen::Vector2d::Zero(), {});
    const double deg = static_cast<double>(neighbors_[static_cast<std::size_t>(node)].size());
    for (int s : poly.sources) {
      Vec lin = Vec::Zero(d);
      lin.segment<2>(2 * node).setConstant(s == node ? -(2.0 * p_.theta + 2.0 * deg) : 2.0);
      poly.linear.push_back(std::move(lin));
    }
    return poly;
  }

  Vec gradient(int node, const Vec& v, std::span<const double> omega) const override {
    const auto& src = sources(node);
    require(omega.size() == src.size(), "waypoint: noise vector size mismatch");
    Vec g = Vec::Zero(dimension());
    std::vector<double> w(static_cast<std::size_t>(nodes()), 0.0);
    for (std::size_t a = 0; a < src.size(); ++a) w[static_cast<std::size_t>(src[a])] = omega[a];
    g.segment<2>(2 * node) = own_gradient(node, v, Eigen::Vector2d::Constant(w[static_cast<std::size_t>(node)]), w);
    return g;
  }

  // theta ||x_i - ref_i||^2 + sum_{j in N_i} ||x_i - x_j - (ref_i - ref_j)||^2.
  double value(int node, const Vec& x, std::span<const double> omega) const override {
    const auto& src = sources(node);
    require(omega.size() == src.size(), "waypoint: noise vector size mismatch");
    std::vector<double> w(static_cast<std::size_t>(nodes()), 0.0);
    for (std::size_t a = 0; a < src.size(); ++a) w[static_cast<std::size_t>(src[a])] = omega[a];
    const Eigen::Vector2d ri = reference(node) + Eigen::Vector2d::Constant(w[static_cast<std::size_t>(node)]);
    const Eigen::Vector2d xi = x.segment<2>(2 * node);
    double f = p_.theta * (xi - ri).squaredNorm();
    for (int j : neighbors_[static_cast<std::size_t>(node)]) {
      const Eigen::Vector2d rj = reference(j) + Eigen::Vector2d::Constant(w[static_cast<std::size_t>(j)]);
      f += (xi - Eigen::Vector2d(x.segment<2>(2 * j)) - (ri - rj)).squaredNorm();
    }
    return f;
  }

  Vec mc_gradient(int node, const Vec& v, const std::vector<const std::vector<double>*>& banks) const override {
    std::vector<double> means;
    for (const auto* b : banks) {
      double s = 0.0;
      for (double x : *b) s += x;
      means.push_back(s / static_cast<double>(b->size()));
    }
    return gradient(node, v, means);
  }

  // Expected references stacked: reference_i + (1,1) * mean(w_i).
  Vec expected_references() const {
    Vec r(dimension());
    for (int i = 0; i < nodes(); ++i)
      r.segment<2>(2 * i) = reference(i) + Eigen::Vector2d::Constant(pdf(i)->mean);
    return r;
  }

  // Hessian of the summed cost: 2 theta I + 2 (L_E kron I_2).
  Mat hessian() const {
    const int n = nodes();
    Mat h = 2.0 * p_.theta * Mat::Identity(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (laplacian_(i, j) != 0.0) {
          h(2 * i, 2 * j) += 2.0 * laplacian_(i, j);
          h(2 * i + 1, 2 * j + 1) += 2.0 * laplacian_(i, j);
        }
    return h;
  }

  Vec true_optimizer() const override {
    const Vec r = expected_references();
    if (contains(box_, r)) return r;
    const Mat h = hessian();
    return minimize_box_quadratic(h, h * r, box_);
  }

  void advance(Rng&) override {
    ++k_;
    refresh_pdfs();
  }

 private:
  Eigen::Vector2d own_gradient(int node, const Vec& v, const Eigen::Vector2d& own_noise,
                               const std::vector<double>& w) const {
    const Eigen::Vector2d ri = reference(node) + own_noise;
    const Eigen::Vector2d xi = v.segment<2>(2 * node);
    Eigen::Vector2d g = 2.0 * p_.theta * (xi - ri);
    for (int j : neighbors_[static_cast<std::size_t>(node)]) {
      const double wj = w.empty() ? 0.0 : w[static_cast<std::size_t>(j)];
      const Eigen::Vector2d rj = reference(j) + Eigen::Vector2d::Constant(wj);
      g += 2.0 * (xi - Eigen::Vector2d(v.segment<2>(2 * j)) - (ri - rj));
    }
    return g;
  }

  void refresh_pdfs() {
    for (int i = 0; i < nodes(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      Pdf next;
      if (p_.noise) {
        const auto [scale, shape] = evolve_weibull(laws_[u], k_);
        next = Weibull{scale, shape};
      } else {
        next = point_mass(0.0);
      }
      if (!pdfs_[u] || !(pdfs_[u]->pdf == next)) pdfs_[u] = make_pdf_handle(std::move(next), next_version_++);
    }
  }

  WaypointParams p_;
  NetworkModel net_;
  BoxSet box_;
  Mat laplacian_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> sources_;
  std::vector<std::vector<int>> held_;
  std::vector<std::pair<double, double>> anchors_;
  std::vector<WeibullEvolution> laws_;
  std::vector<PdfHandle> pdfs_;
  std::uint64_t next_version_ = 1;
  long k_ = 1;
};

}  // namespace dsopt
