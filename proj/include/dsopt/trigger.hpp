#pragma once

#include "dsopt/core.hpp"
#include "dsopt/distributions.hpp"
#include "dsopt/numerics.hpp"
#include "dsopt/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dsopt {

enum class PolicyMode { Full, LinearSimplified, EveryTime, Never };
enum class ExchangeMode { Instant, Deferred };
enum class DegreeMode { Static, NodeCount };

struct PolicyParams {
  double epsilon = 1e-3;
  double eta = 0.5;
  double nu = 2.5e-4;
  PolicyMode mode = PolicyMode::Full;
  ExchangeMode exchange = ExchangeMode::Instant;
  DegreeMode degree = DegreeMode::Static;
};

inline void validate(const PolicyParams& p) {
  require(p.epsilon > 0.0, "policy: epsilon must be positive");
  require(p.eta >= 0.0 && p.eta <= 1.0, "policy: eta must lie in [0,1]");
  require(p.nu > 0.0, "policy: nu must be positive");
}

struct PolicyDecision {
  bool send_snapshot = false;
  bool send_pdf = false;
  double u_r = 0.0;
  double u_s1 = 0.0;
  double u_s2 = 0.0;
};

inline constexpr int kReceiverPanels = 1024;

// Integral over [lo, hi] of ||new(w) - old(w)|| by composite Simpson.
inline double utility_receiver(const GradientSnapshot& fresh, const GradientSnapshot& old, double lo, double hi,
                               int panels = kReceiverPanels) {
  require(fresh.owner == old.owner && fresh.source == old.source, "utility_receiver: snapshots of different components");
  const Vec d1 = fresh.c1 - old.c1;
  const Vec d2 = fresh.c2 - old.c2;
  const double a = d1.squaredNorm(), b = d1.dot(d2), c = d2.squaredNorm();
  if (a == 0.0 && c == 0.0) return 0.0;
  // ||d1 w + d2 w^2||^2 = a w^2 + 2 b w^3 + c w^4
  return simpson([&](double w) { return std::sqrt(std::max(0.0, w * w * (a + w * (2.0 * b + w * c)))); }, lo, hi,
                 panels);
}

inline double utility_receiver(const GradientSnapshot& fresh, const GradientSnapshot& old, const Pdf& source_pdf) {
  const auto [lo, hi] = evaluation_interval(source_pdf);
  return utility_receiver(fresh, old, lo, hi);
}

// ||E_new[snapshot] - E_old[snapshot]||, exact for polynomial snapshots.
inline double utility_sender_grad(const GradientSnapshot& stale, double mean_new, double second_new, double mean_old,
                                  double second_old) {
  return (stale.c1 * (mean_new - mean_old) + stale.c2 * (second_new - second_old)).norm();
}

inline double utility_sender_grad(const GradientSnapshot& stale, const Pdf& p_new, const Pdf& p_old) {
  return utility_sender_grad(stale, mean(p_new), second_moment(p_new), mean(p_old), second_moment(p_old));
}

inline double utility_sender_grad(const GradientSnapshot& stale, const PdfRecord& p_new, const PdfRecord& p_old) {
  if (p_new.version == p_old.version) return 0.0;
  return utility_sender_grad(stale, p_new.mean, p_new.second_moment, p_old.mean, p_old.second_moment);
}

inline double utility_sender_pdf(const Pdf& p_new, const Pdf& p_old) { return sup_density_diff(p_new, p_old); }

inline double utility_sender_pdf(const PdfRecord& p_new, const PdfRecord& p_old) {
  return sup_density_diff(p_new, p_old);
}

inline double snapshot_threshold(const PolicyParams& p, double radius_x, int deg_sender) {
  return p.eta / p.nu * p.epsilon / (2.0 * radius_x * deg_sender);
}

inline double pdf_threshold(const PolicyParams& p, double radius_x, int deg_receiver) {
  return (1.0 - p.eta) * p.epsilon / (2.0 * radius_x * deg_receiver);
}

// Policy of the sender i toward neighbor j: deg_i is the sender's degree, deg_j the receiver's.
inline PolicyDecision decide(const PolicyParams& p, double u_r, double u_s1, double u_s2, double radius_x, int deg_i,
                             int deg_j) {
  require(radius_x > 0.0 && deg_i >= 1 && deg_j >= 1, "decide: radius and degrees must be positive");
  PolicyDecision d{false, false, u_r, u_s1, u_s2};
  switch (p.mode) {
    case PolicyMode::Never:
      return d;
    case PolicyMode::EveryTime:
      d.send_pdf = true;
      return d;
    case PolicyMode::Full:
    case PolicyMode::LinearSimplified:
      d.send_snapshot = p.mode == PolicyMode::Full && u_r > snapshot_threshold(p, radius_x, deg_i);
      d.send_pdf = u_s1 > pdf_threshold(p, radius_x, deg_j) || u_s2 > p.nu;
      return d;
  }
  return d;
}

// Affine-noise policy: send the pdf when the mean shift since the last send, weighted by
// twice the noise coefficient norm, exceeds the receiver's share of the accuracy budget.
inline PolicyDecision decide_linear(const PolicyParams& p, double stale_mean, double current_mean,
                                   double coefficient_norm, double radius_x, int deg_receiver, bool affine = true) {
  require(affine, "decide_linear: scenario is not affine in the noise");
  require(radius_x > 0.0 && deg_receiver >= 1, "decide_linear: radius and degree must be positive");
  PolicyDecision d;
  d.u_s1 = 2.0 * coefficient_norm * std::abs(current_mean - stale_mean);
  d.send_pdf = d.u_s1 > p.epsilon / (2.0 * radius_x * deg_receiver);
  return d;
}

// Exact expected gradients of node i at tick k under the current pdfs and under the
// node's stale knowledge, restricted to the blocks where the gradient lives.
struct GapRecord {
  long tick = 0;
  int node = 0;
  Vec exact;
  Vec stale;
};

struct EpsilonReport {
  double max_ratio = 0.0;
  long checked = 0;
  long violations = 0;
  long worst_tick = -1;
  int worst_node = -1;
  bool ok() const { return violations == 0; }
};

inline EpsilonReport verify_epsilon_guarantee(const std::vector<GapRecord>& log, double epsilon, double radius_x) {
  require(epsilon > 0.0 && radius_x > 0.0, "verify_epsilon_guarantee: epsilon and radius must be positive");
  EpsilonReport r;
  for (const GapRecord& g : log) {
    const double ratio = (g.stale - g.exact).norm() * 2.0 * radius_x / epsilon;
    ++r.checked;
    if (ratio > 1.0) ++r.violations;
    if (ratio > r.max_ratio || r.worst_node < 0) {
      r.max_ratio = ratio;
      r.worst_tick = g.tick;
      r.worst_node = g.node;
    }
  }
  return r;
}

inline void merge(EpsilonReport& into, const EpsilonReport& other) {
  if (other.worst_node >= 0 && (other.max_ratio > into.max_ratio || into.worst_node < 0)) {
    into.max_ratio = other.max_ratio;
    into.worst_tick = other.worst_tick;
    into.worst_node = other.worst_node;
  }
  into.checked += other.checked;
  into.violations += other.violations;
}

}  // namespace dsopt
