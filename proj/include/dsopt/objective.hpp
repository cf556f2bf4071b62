#pragma once

#include "dsopt/core.hpp"
#include "dsopt/distributions.hpp"
#include "dsopt/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dsopt {

struct BoxSet {
  Vec lower;
  Vec upper;
};

inline void validate(const BoxSet& box) {
  require(box.lower.size() == box.upper.size() && box.lower.size() > 0, "box: dimension mismatch");
  require((box.lower.array() <= box.upper.array()).all(), "box: lower exceeds upper");
}

inline BoxSet make_box(Eigen::Index d, double lo, double hi) {
  BoxSet box{Vec::Constant(d, lo), Vec::Constant(d, hi)};
  validate(box);
  return box;
}

inline bool contains(const BoxSet& box, const Vec& x, double tol = 0.0) {
  return (x.array() >= box.lower.array() - tol).all() && (x.array() <= box.upper.array() + tol).all();
}

inline Vec project(const Vec& x, const BoxSet& box) { return x.cwiseMax(box.lower).cwiseMin(box.upper); }

inline double radius(const BoxSet& box) { return box.lower.cwiseAbs().cwiseMax(box.upper.cwiseAbs()).norm(); }

// Largest norm over the convex hull of both boxes.
inline double radius(const BoxSet& a, const BoxSet& b) { return std::max(radius(a), radius(b)); }

struct SourceMoments {
  double mean = 0.0;
  double second = 0.0;
};

// Gradient of one node's cost as a polynomial of degree <= 2 in the noise of its
// sources: constant + sum_a linear[a] w_a + sum_{a<=b} quadratic[(a,b)] w_a w_b.
struct GradientPolynomial {
  std::vector<int> sources;
  Vec constant;
  std::vector<Vec> linear;
  std::vector<Vec> quadratic;  // packed upper triangle, empty when affine

  static std::size_t pair_index(std::size_t a, std::size_t b, std::size_t m) {
    if (a > b) std::swap(a, b);
    return a * (2 * m - a + 1) / 2 + (b - a);
  }

  bool affine() const { return quadratic.empty(); }

  std::size_t source_index(int source) const {
    const auto it = std::find(sources.begin(), sources.end(), source);
    require(it != sources.end(), "gradient polynomial: unknown source " + std::to_string(source));
    return static_cast<std::size_t>(it - sources.begin());
  }

  Vec evaluate(std::span<const double> omega) const {
    const std::size_t m = sources.size();
    require(omega.size() == m, "gradient polynomial: noise vector size mismatch");
    Vec g = constant;
    for (std::size_t a = 0; a < m; ++a) g += linear[a] * omega[a];
    if (!affine())
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b) g += quadratic[pair_index(a, b, m)] * (omega[a] * omega[b]);
    return g;
  }
};

inline std::size_t packed_pair_count(std::size_t m) { return m * (m + 1) / 2; }

// Exact expectation of a polynomial gradient from per-source moments, sources independent.
inline Vec moment_expected_gradient(const GradientPolynomial& poly, std::span<const SourceMoments> moments) {
  const std::size_t m = poly.sources.size();
  require(moments.size() == m, "moment gradient: one moment pair per source required");
  Vec g = poly.constant;
  for (std::size_t a = 0; a < m; ++a) g += poly.linear[a] * moments[a].mean;
  if (!poly.affine())
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a; b < m; ++b)
        g += poly.quadratic[GradientPolynomial::pair_index(a, b, m)] *
             (a == b ? moments[a].second : moments[a].mean * moments[b].mean);
  return g;
}

inline std::vector<SourceMoments> moments_of(const std::vector<int>& sources, const std::map<int, Pdf>& pdfs) {
  std::vector<SourceMoments> out;
  for (int s : sources) {
    const auto it = pdfs.find(s);
    require(it != pdfs.end(), "missing pdf for source " + std::to_string(s));
    out.push_back({mean(it->second), second_moment(it->second)});
  }
  return out;
}

inline Vec moment_expected_gradient(const GradientPolynomial& poly, const std::map<int, Pdf>& pdfs) {
  return moment_expected_gradient(poly, moments_of(poly.sources, pdfs));
}

// Node i's gradient as a function of one source's noise, frozen at point v, with the
// other sources integrated out. Only the part that depends on the source is kept:
// phi(w) = c1 w + c2 w^2.
struct GradientSnapshot {
  int owner = 0;
  int source = 0;
  long tick = 0;
  Vec point;
  Vec c1;
  Vec c2;

  Vec evaluate(double w) const { return c1 * w + c2 * (w * w); }
  Vec expectation(double mean, double second) const { return c1 * mean + c2 * second; }
};

inline GradientSnapshot make_snapshot(const GradientPolynomial& poly, int source, std::span<const SourceMoments> moments,
                                      int owner, long tick, const Vec& point) {
  const std::size_t m = poly.sources.size();
  require(moments.size() == m, "snapshot: one moment pair per source required");
  const std::size_t t = poly.source_index(source);
  GradientSnapshot s{owner, source, tick, point, poly.linear[t], Vec::Zero(poly.constant.size())};
  if (!poly.affine()) {
    for (std::size_t l = 0; l < m; ++l)
      if (l != t) s.c1 += poly.quadratic[GradientPolynomial::pair_index(t, l, m)] * moments[l].mean;
    s.c2 = poly.quadratic[GradientPolynomial::pair_index(t, t, m)];
  }
  return s;
}

namespace detail {

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& pos) {
  require(pos + 8 <= in.size(), "wire decode: truncated record");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[pos + b]) << (8 * b);
  pos += 8;
  return v;
}

inline void put_f64(std::vector<std::uint8_t>& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

inline double get_f64(std::span<const std::uint8_t> in, std::size_t& pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

}  // namespace detail

// Wire layout, all fields little-endian 64-bit: owner, source, tick, d, v[d], m, payload[m]
// where payload = c1[d] followed by c2[d].
inline std::vector<std::uint8_t> encode_snapshot(const GradientSnapshot& s) {
  std::vector<std::uint8_t> out;
  detail::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.owner)));
  detail::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.source)));
  detail::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.tick)));
  detail::put_u64(out, static_cast<std::uint64_t>(s.point.size()));
  for (double x : s.point) detail::put_f64(out, x);
  detail::put_u64(out, static_cast<std::uint64_t>(s.c1.size() + s.c2.size()));
  for (double x : s.c1) detail::put_f64(out, x);
  for (double x : s.c2) detail::put_f64(out, x);
  return out;
}

inline GradientSnapshot decode_snapshot(std::span<const std::uint8_t> in, std::size_t& pos) {
  GradientSnapshot s;
  s.owner = static_cast<int>(static_cast<std::int64_t>(detail::get_u64(in, pos)));
  s.source = static_cast<int>(static_cast<std::int64_t>(detail::get_u64(in, pos)));
  s.tick = static_cast<long>(static_cast<std::int64_t>(detail::get_u64(in, pos)));
  const auto d = static_cast<Eigen::Index>(detail::get_u64(in, pos));
  s.point.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) s.point(c) = detail::get_f64(in, pos);
  const auto m = static_cast<Eigen::Index>(detail::get_u64(in, pos));
  require(m % 2 == 0, "wire decode: odd snapshot payload");
  s.c1.resize(m / 2);
  s.c2.resize(m / 2);
  for (Eigen::Index c = 0; c < m / 2; ++c) s.c1(c) = detail::get_f64(in, pos);
  for (Eigen::Index c = 0; c < m / 2; ++c) s.c2(c) = detail::get_f64(in, pos);
  return s;
}

inline GradientSnapshot decode_snapshot(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  return decode_snapshot(in, pos);
}

// Sample-average gradient over pre-drawn per-source sample banks (all the same length).
template <class GradFn>
Vec mc_expected_gradient(GradFn&& grad, const std::vector<const std::vector<double>*>& banks) {
  require(!banks.empty(), "monte carlo gradient: no sources");
  const std::size_t n = banks.front()->size();
  require(n > 0, "monte carlo gradient: sample count must be positive");
  std::vector<double> omega(banks.size());
  Vec acc;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < banks.size(); ++a) omega[a] = (*banks[a])[s];
    const Vec g = grad(std::span<const double>(omega));
    if (s == 0)
      acc = g;
    else
      acc += g;
  }
  return acc / static_cast<double>(n);
}

// (1/N) sum over N joint samples of the closed-form gradient, sources drawn independently.
template <class GradFn>
Vec mc_expected_gradient(GradFn&& grad, const std::vector<int>& sources, const std::map<int, Pdf>& pdfs, std::size_t N,
                         Rng& rng) {
  std::vector<std::vector<double>> storage(sources.size());
  std::vector<const std::vector<double>*> banks;
  for (std::size_t a = 0; a < sources.size(); ++a) {
    const auto it = pdfs.find(sources[a]);
    require(it != pdfs.end(), "missing pdf for source " + std::to_string(sources[a]));
    sample_into(it->second, rng, storage[a], N);
    banks.push_back(&storage[a]);
  }
  return mc_expected_gradient(grad, banks);
}

struct Constants {
  double m_f = 0.0;
  double L = 0.0;
};

// Symmetrized central-difference Jacobian of an expected-gradient map.
template <class GradFn>
Mat gradient_jacobian(GradFn&& grad, const Vec& x, double h = 1e-4) {
  const Eigen::Index d = x.size();
  Mat j(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    Vec xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    j.col(c) = (grad(xp) - grad(xm)) / (2.0 * h);
  }
  return 0.5 * (j + j.transpose());
}

// Hessian eigenvalue bounds of an expected cost over probe points drawn in the box.
template <class GradFn>
Constants estimate_constants(GradFn&& grad, const BoxSet& box, int probes, Rng& rng) {
  require(probes >= 1, "estimate_constants: need at least one probe");
  Constants c{std::numeric_limits<double>::infinity(), 0.0};
  for (int p = 0; p < probes; ++p) {
    Vec x(box.lower.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = box.lower(k) + uniform01(rng) * (box.upper(k) - box.lower(k));
    const Vec ev = symmetric_eigenvalues(gradient_jacobian(grad, x), 200);
    c.m_f = std::min(c.m_f, ev(0));
    c.L = std::max(c.L, ev(ev.size() - 1));
  }
  require(c.m_f > 0.0, "estimate_constants: strong convexity violated (m_f <= 0)");
  return c;
}

}  // namespace dsopt
