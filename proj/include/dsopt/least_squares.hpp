#pragma once

#include "dsopt/scenario.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace dsopt {

struct LeastSquaresParams {
  int n = 15;
  int d = 2;
  Mat transition = (Mat(2, 2) << 0.99, 0.01, 0.0, 1.0).finished();
  double process_var = 1e-6;
  double measurement_var = 1e-6;
  Mat h_bar = Mat::Identity(2, 2);
  double coupling = 1.0;
  double innovation_var = 1e-2;
  double support_hi = 3.0;
  double scale_floor = 1e-3;
  double box_lo = -0.5;
  double box_hi = 0.5;
  bool drifting_pdfs = true;
};

inline void validate(const LeastSquaresParams& p) {
  require(p.n >= 1 && p.d >= 1, "least squares: n and d must be positive");
  require(p.transition.rows() == p.d && p.transition.cols() == p.d, "least squares: transition must be d x d");
  require(p.h_bar.rows() == p.d && p.h_bar.cols() == p.d, "least squares: H_bar must be d x d");
  require(p.h_bar.fullPivLu().rank() == p.d, "least squares: H_bar must be full rank");
  require(p.process_var >= 0.0, "least squares: process variance must be nonnegative");
  require(p.measurement_var > 0.0, "least squares: measurement covariance must be positive definite");
  require(p.innovation_var >= 0.0, "least squares: innovation variance must be nonnegative");
  require(p.scale_floor > 0.0 && p.scale_floor < p.support_hi, "least squares: invalid scale clamp");
  require(p.box_lo < p.box_hi, "least squares: empty box");
}

// Distributed estimation of a drifting state from measurements z_i = H_i(w) x + noise with
// H_i(w) = H_bar + I * sum_{j in N_i and i} c w_j. The cost of node i is ||z_i - H_i(w) x||^2.
class LeastSquaresScenario final : public Scenario {
 public:
  LeastSquaresScenario(LeastSquaresParams params, NetworkModel network, Rng& rng)
      : p_(std::move(params)), net_(std::move(network)) {
    validate(p_);
    dsopt::validate(net_);
    require(net_.n == p_.n, "least squares: network size differs from n");
    box_ = make_box(p_.d, p_.box_lo, p_.box_hi);
    held_.assign(1, 0);
    for (int i = 0; i < p_.n; ++i) {
      auto s = net_.neighbors(i);
      s.push_back(i);
      std::sort(s.begin(), s.end());
      sources_.push_back(std::move(s));
    }
    const double n = p_.n;
    for (int i = 0; i < p_.n; ++i) {
      const double idx = i + 1;
      const double scale = std::max(idx / n + 0.3 * (uniform01(rng) - 0.3), 0.001);
      const double rho = std::normal_distribution<double>(0.0, 1.0)(rng);
      RayleighEvolution law;
      law.rho = p_.drifting_pdfs ? rho : 0.0;
      law.a = idx * std::numbers::pi / 200.0;
      law.b = 200.0 * std::numbers::pi * rho;
      law.innovation_var = p_.drifting_pdfs ? p_.innovation_var : 0.0;
      law.clamp_lo = p_.scale_floor;
      law.clamp_hi = p_.support_hi;
      laws_.push_back(law);
      scales_.push_back(std::min(scale, p_.support_hi));
      pdfs_.push_back(make_pdf_handle(TruncatedRayleigh{scales_.back(), 0.0, p_.support_hi}, next_version_++));
    }
    x_true_.resize(p_.d);
    for (int c = 0; c < p_.d; ++c) x_true_(c) = p_.box_lo + uniform01(rng) * (p_.box_hi - p_.box_lo);
    measure(rng);
  }

  std::string name() const override { return "least_squares"; }
  int nodes() const override { return p_.n; }
  int block_dim() const override { return p_.d; }
  int blocks() const override { return 1; }
  const NetworkModel& network() const override { return net_; }
  const BoxSet& box() const override { return box_; }
  const std::vector<int>& held_blocks(int) const override { return held_; }
  long tick() const override { return k_; }
  const PdfHandle& pdf(int source) const override { return pdfs_.at(static_cast<std::size_t>(source)); }
  const std::vector<int>& sources(int node) const override { return sources_.at(static_cast<std::size_t>(node)); }
  bool affine_in_noise() const override { return false; }
  bool aggregate_constants() const override { return false; }

  const LeastSquaresParams& params() const { return p_; }
  const Vec& true_state() const { return x_true_; }
  const Vec& measurement(int node) const { return z_.at(static_cast<std::size_t>(node)); }
  double scale(int node) const { return scales_.at(static_cast<std::size_t>(node)); }

  GradientPolynomial gradient_polynomial(int node, const Vec& v) const override {
    const Vec& z = measurement(node);
    const Mat& hb = p_.h_bar;
    const double c = p_.coupling;
    const Vec b = 2.0 * (hb.transpose() * v + hb * v - z);
    const Vec q = 2.0 * v;
    GradientPolynomial poly;
    poly.sources = sources(node);
    const std::size_t m = poly.sources.size();
    poly.constant = 2.0 * (hb.transpose() * (hb * v - z));
    poly.linear.assign(m, c * b);
    poly.quadratic.resize(packed_pair_count(m));
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t e = a; e < m; ++e)
        poly.quadratic[GradientPolynomial::pair_index(a, e, m)] = (a == e ? c * c : 2.0 * c * c) * q;
    return poly;
  }

  Vec gradient(int node, const Vec& v, std::span<const double> omega) const override {
    const Mat h = measurement_matrix(node, omega);
    return 2.0 * h.transpose() * (h * v - measurement(node));
  }

  double value(int node, const Vec& x, std::span<const double> omega) const override {
    return (measurement(node) - measurement_matrix(node, omega) * x).squaredNorm();
  }

  Vec mc_gradient(int node, const Vec& v, const std::vector<const std::vector<double>*>& banks) const override {
    const std::size_t n = banks.front()->size();
    const std::size_t m = banks.size();
    const double c = p_.coupling;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (std::size_t a = 0; a < m; ++a) s += (*banks[a])[k];
      s *= c;
      s1 += s;
      s2 += s * s;
    }
    s1 /= static_cast<double>(n);
    s2 /= static_cast<double>(n);
    const Mat& hb = p_.h_bar;
    const Vec& z = measurement(node);
    return 2.0 * (hb.transpose() * (hb * v - z)) + s1 * 2.0 * (hb.transpose() * v + hb * v - z) + s2 * 2.0 * v;
  }

  // Mean and second moment of the scalar coupling term s_i = c * sum_j w_j under the current pdfs.
  std::pair<double, double> coupling_moments(int node) const {
    double m = 0.0, var = 0.0;
    for (int s : sources(node)) {
      const PdfRecord& r = *pdf(s);
      m += p_.coupling * r.mean;
      var += p_.coupling * p_.coupling * (r.second_moment - r.mean * r.mean);
    }
    return {m, var + m * m};
  }

  // Normal equations of the summed expected cost: A x = b.
  std::pair<Mat, Vec> normal_equations() const {
    const Mat& hb = p_.h_bar;
    Mat a = Mat::Zero(p_.d, p_.d);
    Vec b = Vec::Zero(p_.d);
    for (int i = 0; i < p_.n; ++i) {
      const auto [m1, m2] = coupling_moments(i);
      a += 2.0 * (hb.transpose() * hb + m1 * (hb + hb.transpose()) + m2 * Mat::Identity(p_.d, p_.d));
      b += 2.0 * (hb + m1 * Mat::Identity(p_.d, p_.d)).transpose() * measurement(i);
    }
    return {a, b};
  }

  Vec true_optimizer() const override {
    const auto [a, b] = normal_equations();
    return minimize_box_quadratic(a, b, box_);
  }

  void advance(Rng& rng) override {
    Vec noise(p_.d);
    const double sd = std::sqrt(p_.process_var);
    for (int c = 0; c < p_.d; ++c) noise(c) = sd > 0.0 ? std::normal_distribution<double>(0.0, sd)(rng) : 0.0;
    x_true_ = p_.transition * x_true_ + noise;
    for (int i = 0; i < p_.n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      const double next = evolve_rayleigh(scales_[u], laws_[u], k_, rng);
      if (next != scales_[u]) {
        scales_[u] = next;
        pdfs_[u] = make_pdf_handle(TruncatedRayleigh{next, 0.0, p_.support_hi}, next_version_++);
      }
    }
    ++k_;
    measure(rng);
  }

 private:
  Mat measurement_matrix(int node, std::span<const double> omega) const {
    require(omega.size() == sources(node).size(), "least squares: noise vector size mismatch");
    double s = 0.0;
    for (double w : omega) s += p_.coupling * w;
    return p_.h_bar + s * Mat::Identity(p_.d, p_.d);
  }

  void measure(Rng& rng) {
    std::vector<double> realized(static_cast<std::size_t>(p_.n));
    for (int j = 0; j < p_.n; ++j) realized[static_cast<std::size_t>(j)] = sample_one(pdf(j)->pdf, rng);
    const double sd = std::sqrt(p_.measurement_var);
    z_.assign(static_cast<std::size_t>(p_.n), Vec());
    for (int i = 0; i < p_.n; ++i) {
      std::vector<double> w;
      for (int s : sources(i)) w.push_back(realized[static_cast<std::size_t>(s)]);
      Vec noise(p_.d);
      for (int c = 0; c < p_.d; ++c) noise(c) = std::normal_distribution<double>(0.0, sd)(rng);
      z_[static_cast<std::size_t>(i)] = measurement_matrix_raw(w) * x_true_ + noise;
    }
  }

  Mat measurement_matrix_raw(const std::vector<double>& omega) const {
    double s = 0.0;
    for (double w : omega) s += p_.coupling * w;
    return p_.h_bar + s * Mat::Identity(p_.d, p_.d);
  }

  LeastSquaresParams p_;
  NetworkModel net_;
  BoxSet box_;
  std::vector<int> held_;
  std::vector<std::vector<int>> sources_;
  std::vector<RayleighEvolution> laws_;
  std::vector<double> scales_;
  std::vector<PdfHandle> pdfs_;
  std::uint64_t next_version_ = 1;
  Vec x_true_;
  std::vector<Vec> z_;
  long k_ = 1;
};

}  // namespace dsopt
